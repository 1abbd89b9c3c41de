use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::HcqtParams;
use crate::nn::{Architecture, TrainConfig};

/// Overrides [`ExperimentConfig::data_root`].
pub const DATA_ROOT_ENV: &str = "CHOIRF0_DATA_ROOT";
/// Overrides [`ExperimentConfig::cache_dir`].
pub const CACHE_DIR_ENV: &str = "CHOIRF0_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Every architecture on the whole corpus, scored on the test split.
    FusionStrategy,
    /// Train without one sub-corpus, evaluate only on it.
    Comparative,
    /// Train without reverberated mixtures, evaluate on an external set and on the
    /// reverberated part of the test split.
    Generalization,
    /// Train on the filtered corpus, evaluate on its test split.
    Custom,
}

impl ExperimentKind {
    pub fn default_architectures(self) -> Vec<Architecture> {
        match self {
            ExperimentKind::FusionStrategy => Architecture::ALL.to_vec(),
            _ => vec![Architecture::LateDeep],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetFilter {
    /// Keep mixtures rendered with an impulse response.
    pub include_reverb: bool,
    /// Sub-corpus (the manifest's `corpus` field) to leave out of training.
    pub exclude_corpus: Option<String>,
}

impl Default for DatasetFilter {
    fn default() -> Self {
        Self {
            include_reverb: true,
            exclude_corpus: None,
        }
    }
}

/// A declarative experiment, read from TOML.
///
/// Relative input paths (`manifest`, `external_dir`, `checkpoints`) resolve against
/// `data_root` when it is set and against the config file's directory otherwise; `output_dir`
/// and `cache_dir` always resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Defaults to all four for `fusion_strategy` and to `late_deep` otherwise.
    #[serde(default)]
    pub architectures: Option<Vec<Architecture>>,
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub filters: DatasetFilter,
    #[serde(default = "default_tolerances")]
    pub tolerances: Vec<f64>,
    /// One training run per seed and architecture.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub data_root: Option<PathBuf>,
    /// Feature cache; defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Directory of `<name>.wav` recordings with `<name>.txt` multi-F0 annotations.
    #[serde(default)]
    pub external_dir: Option<PathBuf>,
    /// Checkpoints to evaluate instead of training, keyed by architecture id.
    #[serde(default)]
    pub checkpoints: BTreeMap<Architecture, PathBuf>,
    /// Runs architectures on separate threads.
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub params: HcqtParams,
}

fn default_tolerances() -> Vec<f64> {
    vec![50.0, 100.0, 20.0]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, applies the environment overrides and resolves relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base, |k| std::env::var_os(k).map(PathBuf::from))
    }

    /// Applies overrides from `env` and makes every path absolute with respect to `base`.
    pub fn resolve(mut self, base: &Path, env: impl Fn(&str) -> Option<PathBuf>) -> Result<Self> {
        if let Some(root) = env(DATA_ROOT_ENV) {
            self.data_root = Some(root);
        }
        if let Some(cache) = env(CACHE_DIR_ENV) {
            self.cache_dir = Some(cache);
        }
        let join = |base: &Path, p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        self.data_root = self.data_root.map(|r| join(base, &r));
        let inputs = self.data_root.clone().unwrap_or_else(|| base.to_path_buf());
        self.manifest = join(&inputs, &self.manifest);
        self.external_dir = self.external_dir.map(|d| join(&inputs, &d));
        for p in self.checkpoints.values_mut() {
            *p = join(&inputs, p);
        }
        self.output_dir = join(base, &self.output_dir);
        self.cache_dir = Some(match self.cache_dir.take() {
            Some(c) => join(base, &c),
            None => self.output_dir.join("cache"),
        });
        if self.architectures.is_none() {
            self.architectures = Some(self.experiment.default_architectures());
        }
        self.validate()?;
        Ok(self)
    }

    pub fn architectures(&self) -> Vec<Architecture> {
        self.architectures
            .clone()
            .unwrap_or_else(|| self.experiment.default_architectures())
    }

    pub fn validate(&self) -> Result<()> {
        if self.architectures().is_empty() {
            return Err(Error::Config("at least one architecture is required".into()));
        }
        if self.tolerances.is_empty() || self.tolerances.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("tolerances must be a non-empty list of positive cents".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.experiment == ExperimentKind::Comparative && self.filters.exclude_corpus.is_none() {
            return Err(Error::Config("comparative experiments need filters.exclude_corpus".into()));
        }
        if let Some(arch) = self.checkpoints.keys().find(|a| !self.architectures().contains(a)) {
            return Err(Error::Config(format!("checkpoint given for {arch}, which is not in the run")));
        }
        self.params.validate()?;
        self.train.validate()
    }
}
