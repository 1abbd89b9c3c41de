//! The canonical time/frequency grid shared by features, targets and decoding.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Constants defining the harmonic constant-Q analysis grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HcqtParams {
    pub sample_rate: u32,
    pub hop_length: usize,
    pub f_min: f64,
    pub bins_per_octave: usize,
    pub n_octaves: usize,
    pub harmonics: Vec<u32>,
}

impl Default for HcqtParams {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            hop_length: 256,
            f_min: 32.70,
            bins_per_octave: 60,
            n_octaves: 6,
            harmonics: vec![1, 2, 3, 4, 5],
        }
    }
}

impl HcqtParams {
    pub fn n_bins(&self) -> usize {
        self.bins_per_octave * self.n_octaves
    }

    pub fn n_harmonics(&self) -> usize {
        self.harmonics.len()
    }

    /// Cents between adjacent bins.
    pub fn cents_per_bin(&self) -> f64 {
        1200.0 / self.bins_per_octave as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.hop_length == 0 {
            return Err(Error::InvalidParams(
                "sample rate and hop length must be positive".into(),
            ));
        }
        if !(self.f_min > 0.0) || self.bins_per_octave == 0 || self.n_octaves == 0 {
            return Err(Error::InvalidParams(
                "f_min, bins_per_octave and n_octaves must be positive".into(),
            ));
        }
        match self.harmonics.first() {
            Some(1) => {}
            _ => {
                return Err(Error::InvalidParams(
                    "harmonics must start with 1".into(),
                ))
            }
        }
        if self.harmonics.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(
                "harmonics must be strictly increasing".into(),
            ));
        }
        let top = *self.harmonics.last().unwrap();
        self.check_nyquist(top)
    }

    pub(crate) fn check_nyquist(&self, harmonic: u32) -> Result<()> {
        let top_hz = harmonic as f64 * self.f_min * 2f64.powi(self.n_octaves as i32);
        let nyquist = self.sample_rate as f64 / 2.0;
        if top_hz >= nyquist {
            return Err(Error::Nyquist {
                harmonic,
                top_hz,
                nyquist,
            });
        }
        Ok(())
    }

    /// Center frequency of `bin` on the fundamental (h = 1) grid.
    pub fn bin_to_freq(&self, bin: usize) -> f64 {
        self.f_min * 2f64.powf(bin as f64 / self.bins_per_octave as f64)
    }

    /// Center frequency of `bin` for the channel whose minimum frequency is `harmonic × f_min`.
    pub fn harmonic_bin_freq(&self, harmonic: u32, bin: usize) -> f64 {
        harmonic as f64 * self.bin_to_freq(bin)
    }

    /// Fractional bin position of `freq` (unbounded).
    pub fn freq_to_fractional_bin(&self, freq: f64) -> f64 {
        self.bins_per_octave as f64 * (freq / self.f_min).log2()
    }

    /// Accepted frequency range for [`freq_to_bin`](Self::freq_to_bin): half a bin either side
    /// of the outermost bin centers.
    pub fn freq_range(&self) -> (f64, f64) {
        let b = self.bins_per_octave as f64;
        (
            self.f_min * 2f64.powf(-0.5 / b),
            self.f_min * 2f64.powf((self.n_bins() as f64 - 0.5) / b),
        )
    }

    /// Nearest bin in log-frequency.
    pub fn freq_to_bin(&self, freq: f64) -> Result<usize> {
        let (lo, hi) = self.freq_range();
        if !(freq >= lo && freq < hi) {
            return Err(Error::OutOfRange { freq, lo, hi });
        }
        let bin = self.freq_to_fractional_bin(freq).round().max(0.0) as usize;
        Ok(bin.min(self.n_bins() - 1))
    }

    /// Number of centered analysis frames for a signal of `n_samples`.
    pub fn n_frames(&self, n_samples: usize) -> usize {
        n_samples / self.hop_length + 1
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        frame as f64 * self.hop_length as f64 / self.sample_rate as f64
    }

    pub fn frame_times(&self, n_frames: usize) -> Vec<f64> {
        (0..n_frames).map(|t| self.frame_time(t)).collect()
    }

    /// Seconds between consecutive frames.
    pub fn frame_period(&self) -> f64 {
        self.hop_length as f64 / self.sample_rate as f64
    }

    /// Short stable digest identifying this grid, used to detect stale caches and checkpoints.
    pub fn params_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("params serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Signed distance in cents from `reference` to `estimate`.
pub fn cents(estimate: f64, reference: f64) -> f64 {
    1200.0 * (estimate / reference).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn defaults_give_360_bins() {
        let p = HcqtParams::default();
        assert_eq!(p.n_bins(), 360);
        p.validate().unwrap();
    }

    #[test]
    fn bin_frequencies() {
        let p = HcqtParams::default();
        assert_abs_diff_eq!(p.bin_to_freq(0), 32.70, epsilon = 1e-12);
        assert_abs_diff_eq!(p.bin_to_freq(60), 65.40, epsilon = 1e-9);
        assert_eq!(p.freq_to_bin(440.0).unwrap(), 225);
        assert_abs_diff_eq!(p.harmonic_bin_freq(2, 0), 65.40, epsilon = 1e-9);
    }

    #[test]
    fn roundtrip_and_spacing() {
        let p = HcqtParams::default();
        for b in 0..p.n_bins() {
            assert_eq!(p.freq_to_bin(p.bin_to_freq(b)).unwrap(), b);
        }
        for b in 0..p.n_bins() - 1 {
            let c = cents(p.bin_to_freq(b + 1), p.bin_to_freq(b));
            assert!((c - 20.0).abs() < 1e-9, "bin {b}: {c}");
        }
    }

    #[test]
    fn out_of_range_frequencies_are_rejected() {
        let p = HcqtParams::default();
        assert!(matches!(p.freq_to_bin(20.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(p.freq_to_bin(2100.0), Err(Error::OutOfRange { .. })));
        assert!(p.freq_to_bin(0.0).is_err());
        assert!(p.freq_to_bin(f64::NAN).is_err());
        let (lo, hi) = p.freq_range();
        assert_eq!(p.freq_to_bin(lo).unwrap(), 0);
        assert_eq!(p.freq_to_bin(hi * 0.999_999).unwrap(), 359);
    }

    #[test]
    fn invalid_params() {
        let mut p = HcqtParams::default();
        p.harmonics = vec![2, 3];
        assert!(p.validate().is_err());
        p.harmonics = vec![1, 3, 3];
        assert!(p.validate().is_err());
        p.harmonics = vec![1, 2, 3, 4, 5, 6];
        assert!(matches!(p.validate(), Err(Error::Nyquist { harmonic: 6, .. })));
    }

    #[test]
    fn frame_grid() {
        let p = HcqtParams::default();
        assert_eq!(p.n_frames(220_500), 862);
        assert_abs_diff_eq!(p.frame_time(86), 86.0 * 256.0 / 22050.0);
        assert_eq!(p.params_hash().len(), 16);
        let mut q = p.clone();
        q.hop_length = 512;
        assert_ne!(p.params_hash(), q.params_hash());
    }
}
