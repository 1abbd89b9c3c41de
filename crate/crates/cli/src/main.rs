use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use choirf0::audio::load_audio;
use choirf0::dataset::{
    forge, synthetic_ir, write_quartet, write_stem_dataset, DatasetManifest, ForgeConfig, QuartetSpec, ReverbSource,
    Split, DEFAULT_PARTS,
};
use choirf0::hcqt::{write_features, HcqtExtractor};
use choirf0::nn::{build_model, load_checkpoint, save_checkpoint, train_with, Architecture, TrainConfig};
use choirf0::pipeline::{
    evaluation_table, predict_file, predict_items, run_experiment, score_paths, training_fingerprint, tune_threshold,
    write_salience_png, EvalFile, ExperimentConfig, FeatureStore, CACHE_DIR_ENV, FEATURE_EXTENSION,
};
use choirf0::HcqtParams;

#[derive(Parser)]
#[command(name = "choirf0", version, about = "Multiple-F0 estimation for vocal ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute HCQT features for a WAV file or every WAV file in a directory.
    ExtractFeatures {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_phase: bool,
    },
    /// Render mixtures from stem datasets and write a split manifest.
    Forge(ForgeArgs),
    /// Render synthetic quartets.
    Synth(SynthArgs),
    /// Train a salience model on the train/validation splits of a manifest.
    Train(TrainArgs),
    /// Tune the decoding threshold on validation files and store it in the checkpoint.
    TuneThreshold {
        #[arg(long)]
        ckpt: PathBuf,
        /// Uses the validation split, or every entry if the manifest has none.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, env = CACHE_DIR_ENV)]
        cache_dir: Option<PathBuf>,
    },
    /// Estimate F0s for one recording.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        /// WAV file, or a feature file written by extract-features.
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the threshold stored in the checkpoint.
        #[arg(long)]
        threshold: Option<f32>,
        /// Writes a PNG of the salience map with the decoded F0s.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Writes a JSON summary; it is printed either way.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score estimated against reference multi-F0 files (or directories of them).
    Score {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Pitch tolerance in cents; repeat for several.
        #[arg(long = "tolerance", default_values_t = [50.0])]
        tolerances: Vec<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run an experiment described by a TOML config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct ForgeArgs {
    /// Stem dataset directory; repeat for several corpora.
    #[arg(long = "stems", required = true)]
    stems: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Semitone shifts as a range `-2..2` or a list `-2,0,2`.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    shifts: String,
    /// Impulse response WAV, `synthetic[:rt60]`, or `none`; repeat for several.
    #[arg(long = "reverb")]
    reverbs: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_mixtures_per_song: Option<usize>,
    /// Comma-separated part names.
    #[arg(long)]
    parts: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Quartet description (TOML or JSON) to render as `mix.wav` plus voices.
    #[arg(long, conflicts_with = "songs")]
    spec: Option<PathBuf>,
    /// Instead of a spec, write this many random quartets as a stem dataset.
    #[arg(long)]
    songs: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "late_deep")]
    arch: String,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Train the late-fusion model on magnitude only.
    #[arg(long)]
    no_phase: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with training settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patch_frames: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f32>,
    #[arg(long, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::ExtractFeatures { audio, out, no_phase } => extract_features(&audio, &out, no_phase),
        Command::Forge(args) => forge_cmd(args),
        Command::Synth(args) => synth_cmd(args),
        Command::Train(args) => train_cmd(args),
        Command::TuneThreshold {
            ckpt,
            manifest,
            cache_dir,
        } => tune_cmd(&ckpt, &manifest, cache_dir),
        Command::Predict {
            ckpt,
            audio,
            out,
            threshold,
            plot,
            report,
        } => {
            let model = load_checkpoint(&ckpt)?;
            let store = FeatureStore::new(&model.params, None)?;
            let pred = predict_file(&model, &store, &audio, threshold)?;
            pred.annotation.write(&out)?;
            if let Some(png) = plot {
                write_salience_png(&png, &pred, &model.params)?;
            }
            let summary = serde_json::to_string_pretty(&pred.summary(&audio, &model))?;
            if let Some(path) = report {
                fs::write(&path, &summary).with_context(|| format!("writing {}", path.display()))?;
            }
            println!("{summary}");
            Ok(())
        }
        Command::Score {
            reference,
            est,
            tolerances,
            report,
        } => {
            let eval = score_paths(&reference, &est, &tolerances)?;
            print!("{}", evaluation_table(&eval));
            if let Some(path) = report {
                fs::write(&path, serde_json::to_string_pretty(&eval)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
        Command::Experiment { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let bundle = run_experiment(&cfg)?;
            print!("{}", choirf0::pipeline::render_table(&bundle));
            println!("report written to {}", cfg.output_dir.join("report.json").display());
            Ok(())
        }
    }
}

fn wav_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

fn extract_features(audio: &Path, out: &Path, no_phase: bool) -> Result<()> {
    let params = HcqtParams::default();
    let extractor = HcqtExtractor::new(&params)?;
    let files = wav_files(audio)?;
    if files.is_empty() {
        bail!("no WAV files under {}", audio.display());
    }
    for file in files {
        let wav = load_audio(&file, params.sample_rate)?;
        let features = extractor.extract(&wav.samples, !no_phase)?;
        let name = file.file_stem().unwrap_or_default().to_string_lossy();
        let dest = out.join(format!("{name}.{FEATURE_EXTENSION}"));
        write_features(&dest, &features, &params)?;
        log::info!("{} -> {} ({} frames)", file.display(), dest.display(), features.n_frames());
    }
    Ok(())
}

fn parse_shifts(text: &str) -> Result<Vec<i32>> {
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi): (i32, i32) = (lo.trim().parse()?, hi.trim().parse()?);
        if lo > hi {
            bail!("empty shift range {text}");
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().with_context(|| format!("bad shift '{s}'")))
        .collect()
}

fn reverb_source(spec: &str, sample_rate: u32, seed: u64) -> Result<Option<ReverbSource>> {
    if spec == "none" {
        return Ok(None);
    }
    if let Some(rest) = spec.strip_prefix("synthetic") {
        let rt60 = match rest.strip_prefix(':') {
            Some(v) => v.parse().with_context(|| format!("bad RT60 in '{spec}'"))?,
            None => 1.0,
        };
        return Ok(Some(ReverbSource {
            id: format!("synthetic{rt60}"),
            ir: synthetic_ir(sample_rate, rt60, seed),
        }));
    }
    let path = Path::new(spec);
    Ok(Some(ReverbSource {
        id: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
        ir: choirf0::audio::read_wav(path)?,
    }))
}

fn forge_cmd(args: ForgeArgs) -> Result<()> {
    let params = HcqtParams::default();
    let reverbs = args
        .reverbs
        .iter()
        .map(|r| reverb_source(r, params.sample_rate, args.seed))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let parts = match &args.parts {
        Some(p) => p.split(',').map(|s| s.trim().to_string()).collect(),
        None => DEFAULT_PARTS.iter().map(|s| s.to_string()).collect(),
    };
    let cfg = ForgeConfig {
        params,
        parts,
        shifts: parse_shifts(&args.shifts)?,
        reverbs,
        max_mixtures_per_song: args.max_mixtures_per_song,
        seed: args.seed,
        ..ForgeConfig::default()
    };
    let manifest = forge(&args.stems, &args.out, &cfg)?;
    for split in [Split::Train, Split::Validation, Split::Test] {
        println!("{split:?}: {} mixtures", manifest.split(split).len());
    }
    println!("manifest written to {}", args.out.join("manifest.jsonl").display());
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let params = HcqtParams::default();
    match (&args.spec, args.songs) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec: QuartetSpec = if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text)?
            } else {
                toml::from_str(&text)?
            };
            write_quartet(&spec, &params, &args.out)?;
        }
        (None, Some(n)) => write_stem_dataset(&args.out, n, args.duration, args.seed, &params)?,
        (None, None) => bail!("give either --spec or --songs"),
    }
    Ok(())
}

fn manifest_files(manifest: &DatasetManifest, split: Split) -> Vec<EvalFile> {
    manifest
        .split(split)
        .into_iter()
        .map(|e| EvalFile {
            id: e.audio_path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
            audio: e.audio_path.clone(),
            annotation: e.annotation_path.clone(),
        })
        .collect()
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut arch: Architecture = args.arch.parse()?;
    if args.no_phase {
        arch = match arch {
            Architecture::LateDeep | Architecture::LateDeepNoPhase => Architecture::LateDeepNoPhase,
            other => bail!("--no-phase applies to late_deep, not {other}"),
        };
    }
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => toml::from_str(&fs::read_to_string(path)?)?,
        None => TrainConfig::default(),
    };
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.max_epochs = args.epochs.unwrap_or(cfg.max_epochs);
    cfg.batch_size = args.batch_size.unwrap_or(cfg.batch_size);
    cfg.patch_frames = args.patch_frames.unwrap_or(cfg.patch_frames);
    cfg.early_stop_patience = args.patience.unwrap_or(cfg.early_stop_patience);
    cfg.learning_rate = args.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.validate()?;

    let params = HcqtParams::default();
    let store = FeatureStore::new(&params, args.cache_dir)?;
    let manifest = DatasetManifest::read(&args.manifest)?;
    let load = |split| -> Result<Vec<_>> {
        manifest_files(&manifest, split)
            .iter()
            .map(|f| Ok(store.example(&f.id, &f.audio, &f.annotation)?))
            .collect()
    };
    let (train_set, val_set) = (load(Split::Train)?, load(Split::Validation)?);
    log::info!("{arch}: {} training and {} validation files", train_set.len(), val_set.len());
    let mut model = build_model(arch, &params, cfg.seed)?;
    let history = train_with(&mut model, &train_set, &val_set, &cfg, |_| {})?;
    let ids: Vec<String> = train_set.iter().map(|e| e.id.clone()).collect();
    model.training_fingerprint = Some(training_fingerprint(arch, &cfg, &params.params_hash(), &ids));
    save_checkpoint(&model, &args.out)?;
    println!(
        "best epoch {} (validation loss {:.5}); checkpoint written to {}",
        history.best_epoch,
        history.best_val_loss,
        args.out.display()
    );
    Ok(())
}

fn tune_cmd(ckpt: &Path, manifest: &Path, cache_dir: Option<PathBuf>) -> Result<()> {
    let mut model = load_checkpoint(ckpt)?;
    let store = FeatureStore::new(&model.params, cache_dir)?;
    let manifest = DatasetManifest::read(manifest)?;
    let mut files = manifest_files(&manifest, Split::Validation);
    if files.is_empty() {
        files = [Split::Train, Split::Test]
            .into_iter()
            .flat_map(|s| manifest_files(&manifest, s))
            .collect();
    }
    let items = predict_items(&model, &store, &files)?;
    let threshold = tune_threshold(&items, &model.params)?;
    model.threshold = Some(threshold);
    save_checkpoint(&model, ckpt)?;
    println!("threshold {threshold:.2} over {} files stored in {}", files.len(), ckpt.display());
    Ok(())
}
