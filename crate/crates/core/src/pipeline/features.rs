use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::annotation::MultiF0Annotation;
use crate::audio::load_audio;
use crate::error::{Error, Result};
use crate::grid::HcqtParams;
use crate::hcqt::{read_features, write_features, HcqtExtractor, HcqtFeatures};
use crate::metrics::align_to_grid;
use crate::nn::TrainExample;
use crate::targets::annotation_to_target;

/// Extension of feature cache files.
pub const FEATURE_EXTENSION: &str = "hcqt";

/// HCQT extraction with an optional on-disk cache keyed by audio path, size and mtime.
pub struct FeatureStore {
    extractor: HcqtExtractor,
    cache_dir: Option<PathBuf>,
}

impl FeatureStore {
    pub fn new(params: &HcqtParams, cache_dir: Option<PathBuf>) -> Result<Self> {
        Ok(Self {
            extractor: HcqtExtractor::new(params)?,
            cache_dir,
        })
    }

    pub fn params(&self) -> &HcqtParams {
        self.extractor.params()
    }

    fn cache_path(&self, audio: &Path) -> Result<Option<PathBuf>> {
        let Some(dir) = &self.cache_dir else {
            return Ok(None);
        };
        let meta = fs::metadata(audio).map_err(|e| Error::io(audio, e))?;
        let mtime = meta
            .modified()
            .ok()
            .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
            .map_or(0, |d| d.as_nanos());
        let abs = fs::canonicalize(audio).map_err(|e| Error::io(audio, e))?;
        let mut h = Sha256::new();
        h.update(abs.to_string_lossy().as_bytes());
        h.update(meta.len().to_le_bytes());
        h.update(mtime.to_le_bytes());
        let key: String = h.finalize()[..12].iter().map(|b| format!("{b:02x}")).collect();
        let stem = audio.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
        Ok(Some(dir.join(format!("{stem}-{key}.{FEATURE_EXTENSION}"))))
    }

    /// Features of a recording, with phase differentials. A cache file written under other
    /// analysis parameters is recomputed and replaced.
    pub fn features(&self, audio: &Path) -> Result<HcqtFeatures> {
        if audio.extension().is_some_and(|e| e == FEATURE_EXTENSION) {
            return read_features(audio, self.params());
        }
        let cached = self.cache_path(audio)?;
        if let Some(path) = cached.as_ref().filter(|p| p.exists()) {
            match read_features(path, self.params()) {
                Ok(f) if f.phase_diff.is_some() => return Ok(f),
                Ok(_) => {}
                Err(Error::StaleCache { reason, .. }) => log::info!("{}: {reason}; recomputing", path.display()),
                Err(e) => return Err(e),
            }
        }
        let wav = load_audio(audio, self.params().sample_rate)?;
        let features = self.extractor.extract(&wav.samples, true)?;
        if let Some(path) = cached {
            write_features(&path, &features, self.params())?;
        }
        Ok(features)
    }

    /// Reference annotation moved onto the frame grid of `features`.
    pub fn reference(&self, annotation: &Path, features: &HcqtFeatures) -> Result<MultiF0Annotation> {
        align_to_grid(&MultiF0Annotation::read(annotation)?, &features.frame_times)
    }

    /// Features and salience target for one annotated recording.
    pub fn example(&self, id: impl Into<String>, audio: &Path, annotation: &Path) -> Result<TrainExample> {
        let features = self.features(audio)?;
        let reference = self.reference(annotation, &features)?;
        let target = annotation_to_target(&reference, self.params());
        TrainExample::new(id, features, target.grid)
    }
}
