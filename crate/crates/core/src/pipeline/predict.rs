use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::features::FeatureStore;
use crate::annotation::MultiF0Annotation;
use crate::decoder::{threshold_decode, DecoderConfig};
use crate::error::{Error, Result};
use crate::grid::HcqtParams;
use crate::nn::SalienceModel;

/// Threshold applied when neither the caller nor the checkpoint supplies one.
pub const FALLBACK_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Explicit,
    Checkpoint,
    Fallback,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub salience: Array2<f32>,
    pub annotation: MultiF0Annotation,
    pub threshold: f32,
    pub threshold_source: ThresholdSource,
}

/// What `predict` reports about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub audio: String,
    pub threshold: f32,
    pub threshold_source: ThresholdSource,
    pub frames: usize,
    pub voiced_frames: usize,
    pub f0_count: usize,
    pub training_fingerprint: Option<String>,
}

impl Prediction {
    pub fn summary(&self, audio: &Path, model: &SalienceModel) -> PredictionSummary {
        PredictionSummary {
            audio: audio.display().to_string(),
            threshold: self.threshold,
            threshold_source: self.threshold_source,
            frames: self.annotation.len(),
            voiced_frames: self.annotation.f0_sets.iter().filter(|s| !s.is_empty()).count(),
            f0_count: self.annotation.total_f0s(),
            training_fingerprint: model.training_fingerprint.clone(),
        }
    }
}

/// Salience and decoded F0s for one recording, or for a cached feature file. The threshold
/// is `threshold` if given, else the checkpoint's tuned value, else [`FALLBACK_THRESHOLD`].
pub fn predict_file(model: &SalienceModel, store: &FeatureStore, audio: &Path, threshold: Option<f32>) -> Result<Prediction> {
    if store.params() != &model.params {
        return Err(Error::Checkpoint(format!(
            "model analysis parameters {} differ from feature parameters {}",
            model.params.params_hash(),
            store.params().params_hash()
        )));
    }
    let (threshold, threshold_source) = match (threshold, model.threshold) {
        (Some(t), _) => (t, ThresholdSource::Explicit),
        (None, Some(t)) => (t, ThresholdSource::Checkpoint),
        (None, None) => {
            log::warn!("checkpoint has no tuned threshold; using {FALLBACK_THRESHOLD}");
            (FALLBACK_THRESHOLD, ThresholdSource::Fallback)
        }
    };
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} is outside [0, 1]")));
    }
    let features = store.features(audio)?;
    let salience = model.predict(&features)?;
    let mut annotation = threshold_decode(&salience, &model.params, &DecoderConfig { threshold });
    annotation.frame_times = features.frame_times.clone();
    Ok(Prediction {
        salience,
        annotation,
        threshold,
        threshold_source,
    })
}

/// Piecewise-linear approximation of a perceptual dark-to-bright colormap.
fn colormap(v: f32) -> Rgb<u8> {
    const STOPS: [[f32; 3]; 5] = [
        [0.0, 0.0, 4.0],
        [80.0, 18.0, 123.0],
        [183.0, 55.0, 121.0],
        [252.0, 137.0, 97.0],
        [252.0, 253.0, 191.0],
    ];
    let x = v.clamp(0.0, 1.0) * (STOPS.len() - 1) as f32;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let w = x - i as f32;
    let c = |k: usize| (STOPS[i][k] * (1.0 - w) + STOPS[i + 1][k] * w).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Salience as an image (time left to right, frequency bottom to top) with the decoded F0s
/// drawn over it in cyan.
pub fn render_salience(salience: &Array2<f32>, annotation: &MultiF0Annotation, params: &HcqtParams) -> RgbImage {
    let (bins, frames) = salience.dim();
    let mut img = RgbImage::new(frames.max(1) as u32, bins.max(1) as u32);
    for ((b, t), &v) in salience.indexed_iter() {
        img.put_pixel(t as u32, (bins - 1 - b) as u32, colormap(v));
    }
    for (t, set) in annotation.f0_sets.iter().enumerate().take(frames) {
        for &f in set {
            if let Ok(b) = params.freq_to_bin(f) {
                img.put_pixel(t as u32, (bins - 1 - b) as u32, Rgb([0, 255, 255]));
            }
        }
    }
    img
}

pub fn write_salience_png(path: &Path, prediction: &Prediction, params: &HcqtParams) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    render_salience(&prediction.salience, &prediction.annotation, params)
        .save(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}
