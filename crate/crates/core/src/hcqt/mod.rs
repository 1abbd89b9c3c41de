//! Harmonic constant-Q magnitude and phase-differential features.

mod cache;
mod cqt;

use std::f64::consts::PI;

use ndarray::{Array2, Array3, Axis};

pub use cache::{read_features, write_features, FEATURE_CACHE_VERSION};
pub use cqt::{compute_cqt, ComplexMatrix, CqtAnalyzer};

use crate::error::Result;
use crate::grid::HcqtParams;

/// Dynamic range kept by the magnitude channel, in dB below the recording peak.
pub const MAGNITUDE_FLOOR_DB: f32 = -80.0;

/// Paired HCQT inputs, each `[harmonics × bins × frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HcqtFeatures {
    /// Log-compressed magnitude rescaled to `[0, 1]`.
    pub magnitude: Array3<f32>,
    /// Unwrapped per-frame phase differences in radians; `None` when extracted without phase.
    pub phase_diff: Option<Array3<f32>>,
    pub frame_times: Vec<f64>,
}

impl HcqtFeatures {
    pub fn n_frames(&self) -> usize {
        self.magnitude.len_of(Axis(2))
    }

    pub fn n_bins(&self) -> usize {
        self.magnitude.len_of(Axis(1))
    }

    pub fn n_harmonics(&self) -> usize {
        self.magnitude.len_of(Axis(0))
    }
}

/// Reusable HCQT front end; kernels are built once.
pub struct HcqtExtractor {
    params: HcqtParams,
    analyzer: CqtAnalyzer,
}

impl HcqtExtractor {
    pub fn new(params: &HcqtParams) -> Result<Self> {
        Ok(Self {
            params: params.clone(),
            analyzer: CqtAnalyzer::new(params, &params.harmonics)?,
        })
    }

    pub fn params(&self) -> &HcqtParams {
        &self.params
    }

    pub fn extract(&self, audio: &[f32], with_phase: bool) -> Result<HcqtFeatures> {
        let channels = self.analyzer.analyze(audio)?;
        let n_frames = channels[0].ncols();
        let shape = (channels.len(), self.params.n_bins(), n_frames);

        let peak = channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f32, |m, c| m.max(c.norm()));
        let mut magnitude = Array3::<f32>::zeros(shape);
        if peak > 0.0 {
            for (h, c) in channels.iter().enumerate() {
                let mut dst = magnitude.index_axis_mut(Axis(0), h);
                dst.zip_mut_with(c, |d, z| *d = compress_magnitude(z.norm() / peak));
            }
        }
        let phase_diff = with_phase.then(|| {
            let mut pd = Array3::<f32>::zeros(shape);
            for (h, c) in channels.iter().enumerate() {
                pd.index_axis_mut(Axis(0), h).assign(&phase_differentials(c));
            }
            pd
        });
        Ok(HcqtFeatures {
            magnitude,
            phase_diff,
            frame_times: self.params.frame_times(n_frames),
        })
    }
}

/// Computes magnitude and phase-differential HCQT features for mono audio at
/// `params.sample_rate`.
pub fn compute_hcqt(audio: &[f32], params: &HcqtParams) -> Result<HcqtFeatures> {
    HcqtExtractor::new(params)?.extract(audio, true)
}

/// Maps a peak-relative linear amplitude to `[0, 1]` through a floored dB scale.
fn compress_magnitude(relative: f32) -> f32 {
    if relative <= 0.0 {
        return 0.0;
    }
    let db = (20.0 * relative.log10()).max(MAGNITUDE_FLOOR_DB);
    (db - MAGNITUDE_FLOOR_DB) / -MAGNITUDE_FLOOR_DB
}

/// Unwraps a phase sequence in place so consecutive steps lie in `[-π, π]`.
pub fn unwrap_phase(phase: &mut [f64]) {
    let mut offset = 0.0;
    let mut prev_raw = match phase.first() {
        Some(&p) => p,
        None => return,
    };
    for p in phase.iter_mut().skip(1) {
        let raw = *p;
        let d = raw - prev_raw;
        let mut dd = (d + PI).rem_euclid(2.0 * PI) - PI;
        if dd == -PI && d > 0.0 {
            dd = PI;
        }
        offset += dd - d;
        prev_raw = raw;
        *p = raw + offset;
    }
}

/// Per-bin phase unwrapped along time, then differenced. Column 0 repeats the first
/// difference so the output keeps all `T` columns.
pub fn phase_differentials(tf: &ComplexMatrix) -> Array2<f32> {
    let (n_bins, n_frames) = tf.dim();
    let mut out = Array2::<f32>::zeros((n_bins, n_frames));
    if n_frames < 2 {
        return out;
    }
    let mut phase = vec![0.0f64; n_frames];
    for (row, mut dst) in tf.outer_iter().zip(out.outer_iter_mut()) {
        for (p, z) in phase.iter_mut().zip(row.iter()) {
            *p = (z.im as f64).atan2(z.re as f64);
        }
        unwrap_phase(&mut phase);
        for t in 1..n_frames {
            dst[t] = (phase[t] - phase[t - 1]) as f32;
        }
        dst[0] = dst[1];
    }
    out
}

/// Instantaneous frequency in Hz implied by a phase differential at `bin` of the channel for
/// `harmonic`: the bin center plus the deviation `Δφ / (2π Δt)`.
pub fn instantaneous_frequency(params: &HcqtParams, harmonic: u32, bin: usize, phase_diff: f64) -> f64 {
    params.harmonic_bin_freq(harmonic, bin) + phase_diff / (2.0 * PI * params.frame_period())
}
