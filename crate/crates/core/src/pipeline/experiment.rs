use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExperimentKind};
use super::evaluate::{discover_annotated_audio, evaluate_items, predict_items, tune_threshold, EvalFile, Evaluation};
use super::features::FeatureStore;
use super::report::render_table;
use crate::dataset::{DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::nn::{
    build_model, load_checkpoint, save_checkpoint, train, weights_fingerprint, Architecture, SalienceModel,
    TrainConfig, TrainExample, TrainHistory,
};

fn sha256_hex(bytes: &[u8], n: usize) -> String {
    Sha256::digest(bytes)[..n].iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of everything that determines a training run: recipe, seed, analysis parameters
/// and the ordered list of training files.
pub fn training_fingerprint(arch: Architecture, cfg: &TrainConfig, params_hash: &str, train_ids: &[String]) -> String {
    let doc = serde_json::json!({
        "architecture": arch,
        "train": cfg,
        "params_hash": params_hash,
        "files": train_ids,
    });
    sha256_hex(doc.to_string().as_bytes(), 8)
}

fn entry_file(e: &ManifestEntry) -> EvalFile {
    EvalFile {
        id: e.audio_path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
        audio: e.audio_path.clone(),
        annotation: e.annotation_path.clone(),
    }
}

/// Training, validation and evaluation file lists for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPlan {
    pub train: Vec<EvalFile>,
    pub validation: Vec<EvalFile>,
    /// Named evaluation sets.
    pub evaluations: Vec<(String, Vec<EvalFile>)>,
}

impl DataPlan {
    /// Audio files that appear both in training or validation and in an evaluation set.
    pub fn overlap(&self) -> Vec<PathBuf> {
        let seen: BTreeSet<&Path> = self.train.iter().chain(&self.validation).map(|f| f.audio.as_path()).collect();
        let mut out: BTreeSet<PathBuf> = BTreeSet::new();
        for (_, files) in &self.evaluations {
            out.extend(files.iter().filter(|f| seen.contains(f.audio.as_path())).map(|f| f.audio.clone()));
        }
        out.into_iter().collect()
    }
}

/// Applies the experiment's filters to a manifest and picks the evaluation sets.
pub fn plan_data(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<DataPlan> {
    let excluded = cfg.filters.exclude_corpus.as_deref();
    if let Some(corpus) = excluded {
        if !manifest.entries.iter().any(|e| e.corpus == corpus) {
            return Err(Error::Config(format!("corpus filter '{corpus}' matches no manifest entry")));
        }
    }
    let include_reverb = cfg.filters.include_reverb && cfg.experiment != ExperimentKind::Generalization;
    let keep = |e: &&ManifestEntry| Some(e.corpus.as_str()) != excluded && (include_reverb || !e.has_reverb());
    let files = |split: Split| -> Vec<EvalFile> {
        manifest
            .entries
            .iter()
            .filter(|e| e.split == split)
            .filter(keep)
            .map(entry_file)
            .collect()
    };
    let train = files(Split::Train);
    let validation = files(Split::Validation);
    let evaluations = match cfg.experiment {
        ExperimentKind::FusionStrategy | ExperimentKind::Custom => vec![("test".to_string(), files(Split::Test))],
        ExperimentKind::Comparative => {
            let corpus = excluded.expect("validated");
            let held_out = manifest
                .entries
                .iter()
                .filter(|e| e.corpus == corpus && (cfg.filters.include_reverb || !e.has_reverb()))
                .map(entry_file)
                .collect();
            vec![(corpus.to_string(), held_out)]
        }
        ExperimentKind::Generalization => {
            let mut sets = Vec::new();
            if let Some(dir) = &cfg.external_dir {
                sets.push(("external".to_string(), discover_annotated_audio(dir)?));
            }
            let reverb_test = manifest
                .entries
                .iter()
                .filter(|e| e.split == Split::Test && e.has_reverb() && Some(e.corpus.as_str()) != excluded)
                .map(entry_file)
                .collect();
            sets.push(("test_reverb".to_string(), reverb_test));
            sets
        }
    };
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Config(format!(
            "filters leave {} training and {} validation files",
            train.len(),
            validation.len()
        )));
    }
    if let Some((name, _)) = evaluations.iter().find(|(_, f)| f.is_empty()) {
        return Err(Error::Config(format!("evaluation set '{name}' is empty")));
    }
    Ok(DataPlan {
        train,
        validation,
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub architecture: Architecture,
    pub seed: u64,
    pub checkpoint: PathBuf,
    /// Whether the model was loaded instead of trained.
    pub loaded: bool,
    pub weights_fingerprint: String,
    pub training_fingerprint: Option<String>,
    pub threshold: f32,
    pub history: Option<TrainHistory>,
    pub evaluations: Vec<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config: ExperimentConfig,
    pub config_fingerprint: String,
    pub manifest_sha256: String,
    pub params_hash: String,
    pub train_files: Vec<String>,
    pub validation_files: Vec<String>,
    pub evaluation_files: Vec<(String, Vec<String>)>,
    /// Audio files shared between training/validation and evaluation; always empty.
    pub overlap: Vec<PathBuf>,
    pub runs: Vec<RunReport>,
}

impl ReportBundle {
    pub fn run(&self, arch: Architecture) -> Option<&RunReport> {
        self.runs.iter().find(|r| r.architecture == arch)
    }
}

fn load_examples(store: &FeatureStore, files: &[EvalFile]) -> Result<Vec<TrainExample>> {
    files.iter().map(|f| store.example(&f.id, &f.audio, &f.annotation)).collect()
}

struct RunInputs<'a> {
    cfg: &'a ExperimentConfig,
    plan: &'a DataPlan,
    store: &'a FeatureStore,
    train: &'a [TrainExample],
    val: &'a [TrainExample],
}

fn run_one(inputs: &RunInputs<'_>, arch: Architecture, seed: u64) -> Result<RunReport> {
    let RunInputs { cfg, plan, store, .. } = *inputs;
    let params = store.params();
    let ckpt = cfg.output_dir.join(format!("{arch}_seed{seed}.ckpt"));
    let (mut model, history, loaded): (SalienceModel, _, _) = match cfg.checkpoints.get(&arch) {
        Some(path) => {
            let model = load_checkpoint(path)?;
            if model.architecture != arch {
                return Err(Error::Checkpoint(format!(
                    "{} holds a {} model, expected {arch}",
                    path.display(),
                    model.architecture
                )));
            }
            if &model.params != params {
                return Err(Error::Checkpoint(format!("{}: analysis parameters differ", path.display())));
            }
            (model, None, true)
        }
        None => {
            let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
            let mut model = build_model(arch, params, seed)?;
            let ids: Vec<String> = plan.train.iter().map(|f| f.id.clone()).collect();
            log::info!("training {arch} (seed {seed}) on {} files", inputs.train.len());
            let history = train(&mut model, inputs.train, inputs.val, &train_cfg)?;
            model.training_fingerprint = Some(training_fingerprint(arch, &train_cfg, &params.params_hash(), &ids));
            (model, Some(history), false)
        }
    };
    let val_items = predict_items(&model, store, &plan.validation)?;
    let threshold = tune_threshold(&val_items, params)?;
    model.threshold = Some(threshold);
    save_checkpoint(&model, &ckpt)?;
    let mut evaluations = Vec::new();
    for (name, files) in &plan.evaluations {
        let items = predict_items(&model, store, files)?;
        evaluations.push(evaluate_items(name, &items, params, threshold, &cfg.tolerances)?);
    }
    Ok(RunReport {
        architecture: arch,
        seed,
        checkpoint: ckpt,
        loaded,
        weights_fingerprint: weights_fingerprint(&model),
        training_fingerprint: model.training_fingerprint.clone(),
        threshold,
        history,
        evaluations,
    })
}

/// Runs an experiment end to end and writes `report.json`, `report.md` and one checkpoint
/// per run into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let manifest_bytes = fs::read(&cfg.manifest).map_err(|e| Error::io(&cfg.manifest, e))?;
    let manifest = DatasetManifest::read(&cfg.manifest)?;
    let plan = plan_data(cfg, &manifest)?;
    let overlap = plan.overlap();
    if !overlap.is_empty() {
        return Err(Error::Config(format!(
            "{} evaluation files also appear in training or validation, e.g. {}",
            overlap.len(),
            overlap[0].display()
        )));
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let store = FeatureStore::new(&cfg.params, cfg.cache_dir.clone())?;
    let needs_training = cfg.architectures().iter().any(|a| !cfg.checkpoints.contains_key(a));
    let (train_set, val_set) = if needs_training {
        (load_examples(&store, &plan.train)?, load_examples(&store, &plan.validation)?)
    } else {
        (Vec::new(), Vec::new())
    };
    let inputs = RunInputs {
        cfg,
        plan: &plan,
        store: &store,
        train: &train_set,
        val: &val_set,
    };
    let jobs: Vec<(Architecture, u64)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.architectures().into_iter().map(move |a| (a, s)))
        .collect();
    let runs: Vec<RunReport> = if cfg.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|&(a, s)| {
                    let inputs = &inputs;
                    scope.spawn(move || run_one(inputs, a, s))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("experiment worker panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        jobs.iter().map(|&(a, s)| run_one(&inputs, a, s)).collect::<Result<Vec<_>>>()?
    };
    let names = |files: &[EvalFile]| files.iter().map(|f| f.audio.display().to_string()).collect::<Vec<_>>();
    let config_json = serde_json::to_vec(cfg)?;
    let bundle = ReportBundle {
        config: cfg.clone(),
        config_fingerprint: sha256_hex(&config_json, 8),
        manifest_sha256: sha256_hex(&manifest_bytes, 32),
        params_hash: cfg.params.params_hash(),
        train_files: names(&plan.train),
        validation_files: names(&plan.validation),
        evaluation_files: plan.evaluations.iter().map(|(n, f)| (n.clone(), names(f))).collect(),
        overlap,
        runs,
    };
    write_report(&bundle, &cfg.output_dir)?;
    Ok(bundle)
}

pub fn write_report(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    let json = dir.join("report.json");
    fs::write(&json, serde_json::to_string_pretty(bundle)?).map_err(|e| Error::io(&json, e))?;
    let md = dir.join("report.md");
    fs::write(&md, render_table(bundle)).map_err(|e| Error::io(&md, e))
}
