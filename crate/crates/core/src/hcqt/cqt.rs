//! Constant-Q analysis with spectral-domain kernels.
//!
//! Each bin owns a Hann-windowed complex exponential whose length is `Q·sr/f`. Kernels are
//! transformed once into sparse spectral form; every frame is then a single real FFT per
//! kernel-size class followed by sparse dot products. Bins of several harmonic channels share
//! the same frame FFTs.
//!
//! Phase is referenced to the absolute time origin, so a stationary sinusoid at frequency
//! `f` advances the phase of bin `k` by `2π (f − f_k) · hop / sr` per frame.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use realfft::num_complex::Complex32;
use realfft::{RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::grid::HcqtParams;

pub type ComplexMatrix = Array2<Complex32>;

/// Fraction of each spectral kernel's L1 mass that may be discarded when sparsifying.
const SPARSITY_QUANTILE: f64 = 0.01;

struct SparseKernel {
    channel: usize,
    bin: usize,
    freq: f64,
    index: Vec<u32>,
    coef: Vec<Complex32>,
}

struct SizeClass {
    fft_len: usize,
    fft: Arc<dyn RealToComplex<f32>>,
    kernels: Vec<SparseKernel>,
}

/// Precomputed kernels for one or more harmonic channels; reusable across recordings.
pub struct CqtAnalyzer {
    params: HcqtParams,
    harmonics: Vec<u32>,
    classes: Vec<SizeClass>,
}

impl CqtAnalyzer {
    /// Builds kernels for the given harmonics (each must belong to `params.harmonics`).
    pub fn new(params: &HcqtParams, harmonics: &[u32]) -> Result<Self> {
        params.validate()?;
        for &h in harmonics {
            if !params.harmonics.contains(&h) {
                return Err(Error::UnknownHarmonic(h));
            }
            params.check_nyquist(h)?;
        }
        let sr = params.sample_rate as f64;
        let q = 1.0 / (2f64.powf(1.0 / params.bins_per_octave as f64) - 1.0);
        let mut planner = RealFftPlanner::<f32>::new();
        let mut cplanner = rustfft::FftPlanner::<f64>::new();
        let mut classes: Vec<SizeClass> = Vec::new();

        for (channel, &h) in harmonics.iter().enumerate() {
            for bin in 0..params.n_bins() {
                let freq = params.harmonic_bin_freq(h, bin);
                let win_len = ((q * sr / freq).ceil() as usize).max(2);
                let fft_len = win_len.next_power_of_two();
                let kernel = spectral_kernel(&mut cplanner, freq, sr, win_len, fft_len, channel, bin);
                match classes.iter_mut().find(|c| c.fft_len == fft_len) {
                    Some(class) => class.kernels.push(kernel),
                    None => classes.push(SizeClass {
                        fft_len,
                        fft: planner.plan_fft_forward(fft_len),
                        kernels: vec![kernel],
                    }),
                }
            }
        }
        classes.sort_by_key(|c| c.fft_len);
        Ok(Self {
            params: params.clone(),
            harmonics: harmonics.to_vec(),
            classes,
        })
    }

    pub fn harmonics(&self) -> &[u32] {
        &self.harmonics
    }

    /// One complex `[n_bins × T]` matrix per configured harmonic, `T = len / hop + 1`.
    pub fn analyze(&self, audio: &[f32]) -> Result<Vec<ComplexMatrix>> {
        if audio.is_empty() {
            return Err(Error::EmptyAudio);
        }
        let hop = self.params.hop_length;
        let sr = self.params.sample_rate as f64;
        let n_frames = self.params.n_frames(audio.len());
        let mut out =
            vec![ComplexMatrix::zeros((self.params.n_bins(), n_frames)); self.harmonics.len()];

        for class in &self.classes {
            let len = class.fft_len;
            let mut input = class.fft.make_input_vec();
            let mut spectrum = class.fft.make_output_vec();
            let mut scratch = class.fft.make_scratch_vec();
            for t in 0..n_frames {
                let center = (t * hop) as isize;
                fill_segment(audio, center - (len / 2) as isize, &mut input);
                class
                    .fft
                    .process_with_scratch(&mut input, &mut spectrum, &mut scratch)
                    .map_err(|e| Error::InvalidParams(e.to_string()))?;
                for k in &class.kernels {
                    let mut acc = Complex32::new(0.0, 0.0);
                    for (&j, &c) in k.index.iter().zip(&k.coef) {
                        acc += spectrum[j as usize] * c;
                    }
                    // shift the window-centered phase to the absolute time origin
                    let cycles = (k.freq * (t * hop) as f64 / sr).fract();
                    let (s, c) = (-2.0 * PI * cycles).sin_cos();
                    out[k.channel][[k.bin, t]] = acc * Complex32::new(c as f32, s as f32);
                }
            }
        }
        Ok(out)
    }
}

fn fill_segment(audio: &[f32], start: isize, buf: &mut [f32]) {
    buf.iter_mut().for_each(|v| *v = 0.0);
    let n = audio.len() as isize;
    let lo = start.max(0);
    let hi = (start + buf.len() as isize).min(n);
    if lo < hi {
        let dst = (lo - start) as usize;
        buf[dst..dst + (hi - lo) as usize].copy_from_slice(&audio[lo as usize..hi as usize]);
    }
}

/// Sparse spectral form of a centered, L1-normalized Hann-windowed exponential at `freq`.
fn spectral_kernel(
    planner: &mut rustfft::FftPlanner<f64>,
    freq: f64,
    sr: f64,
    win_len: usize,
    fft_len: usize,
    channel: usize,
    bin: usize,
) -> SparseKernel {
    use rustfft::num_complex::Complex64;

    let half = fft_len / 2;
    let start = half - win_len / 2;
    let norm: f64 = (0..win_len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / win_len as f64).cos())
        .sum();
    // conj(g) so that a forward FFT yields conj of the kernel spectrum
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    for i in 0..win_len {
        let w = (0.5 - 0.5 * (2.0 * PI * i as f64 / win_len as f64).cos()) / norm;
        let n = (start + i) as f64 - half as f64;
        let phase = 2.0 * PI * freq * n / sr;
        buf[start + i] = Complex64::from_polar(w, phase);
    }
    planner.plan_fft_forward(fft_len).process(&mut buf);
    let spec: Vec<Complex64> = buf[..=half]
        .iter()
        .map(|c| c.conj() / fft_len as f64)
        .collect();

    let mut mags: Vec<(usize, f64)> = spec.iter().map(|c| c.norm()).enumerate().collect();
    let total: f64 = mags.iter().map(|m| m.1).sum();
    mags.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let mut dropped = 0.0;
    let mut cut = 0;
    for (i, &(_, m)) in mags.iter().enumerate() {
        if dropped + m > SPARSITY_QUANTILE * total {
            cut = i;
            break;
        }
        dropped += m;
    }
    let mut keep: Vec<usize> = mags[cut..].iter().map(|m| m.0).collect();
    keep.sort_unstable();
    SparseKernel {
        channel,
        bin,
        freq,
        coef: keep
            .iter()
            .map(|&j| Complex32::new(spec[j].re as f32, spec[j].im as f32))
            .collect(),
        index: keep.into_iter().map(|j| j as u32).collect(),
    }
}

/// Constant-Q transform of one harmonic channel: minimum frequency `harmonic × f_min`.
pub fn compute_cqt(audio: &[f32], params: &HcqtParams, harmonic: u32) -> Result<ComplexMatrix> {
    let analyzer = CqtAnalyzer::new(params, &[harmonic])?;
    Ok(analyzer.analyze(audio)?.pop().unwrap())
}
