use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realfft::RealFftPlanner;

use crate::audio::{peak, Audio};
use crate::error::{Error, Result};

/// Peak level, in dBFS, that clipping mixtures are normalized to.
pub const NORMALIZED_PEAK_DBFS: f32 = -1.0;

/// Audio plus the normalization factor that was applied to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixed {
    pub audio: Audio,
    pub gain: f32,
}

/// Scales down to -1 dBFS peak only when the signal would clip.
fn normalize_if_clipping(samples: &mut [f32]) -> f32 {
    let p = peak(samples);
    if p <= 1.0 {
        return 1.0;
    }
    let gain = 10f32.powf(NORMALIZED_PEAK_DBFS / 20.0) / p;
    samples.iter_mut().for_each(|s| *s *= gain);
    gain
}

/// Sums stems sample-wise, zero-padding to the longest one. `gains` defaults to unity.
pub fn mix_stems(stems: &[Audio], gains: Option<&[f32]>) -> Result<Mixed> {
    let Some(first) = stems.first() else {
        return Err(Error::EmptyAudio);
    };
    let sr = first.sample_rate;
    if let Some(bad) = stems.iter().find(|a| a.sample_rate != sr) {
        return Err(Error::SampleRateMismatch {
            expected: sr,
            found: bad.sample_rate,
        });
    }
    if let Some(g) = gains {
        if g.len() != stems.len() {
            return Err(Error::Shape(format!("{} gains for {} stems", g.len(), stems.len())));
        }
    }
    let len = stems.iter().map(|a| a.samples.len()).max().unwrap_or(0);
    let mut out = vec![0f32; len];
    for (i, stem) in stems.iter().enumerate() {
        let g = gains.map_or(1.0, |g| g[i]);
        for (o, &s) in out.iter_mut().zip(&stem.samples) {
            *o += g * s;
        }
    }
    let gain = normalize_if_clipping(&mut out);
    Ok(Mixed {
        audio: Audio::new(out, sr),
        gain,
    })
}

/// Linear convolution with `ir`, truncated to the dry length and normalized like a mixture.
/// The impulse response is resampled when its rate differs.
pub fn apply_reverb(audio: &Audio, ir: &Audio) -> Result<Mixed> {
    if ir.samples.is_empty() {
        return Err(Error::EmptyImpulseResponse);
    }
    let ir = if ir.sample_rate != audio.sample_rate {
        ir.resampled(audio.sample_rate)?
    } else {
        ir.clone()
    };
    let n = audio.samples.len();
    if n == 0 {
        return Ok(Mixed {
            audio: audio.clone(),
            gain: 1.0,
        });
    }
    // Only the first `n` output samples are kept, so the IR beyond that is irrelevant.
    let h = &ir.samples[..ir.samples.len().min(n)];
    let size = (n + h.len() - 1).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let spectrum = |x: &[f32]| {
        let mut buf = vec![0f64; size];
        buf.iter_mut().zip(x).for_each(|(b, &v)| *b = v as f64);
        let mut spec = fwd.make_output_vec();
        fwd.process(&mut buf, &mut spec).expect("fft length is fixed");
        spec
    };
    let a = spectrum(&audio.samples);
    let b = spectrum(h);
    let mut prod: Vec<_> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let mut wet = inv.make_output_vec();
    inv.process(&mut prod, &mut wet).expect("fft length is fixed");
    let scale = 1.0 / size as f64;
    let mut out: Vec<f32> = wet[..n].iter().map(|&v| (v * scale) as f32).collect();
    let gain = normalize_if_clipping(&mut out);
    Ok(Mixed {
        audio: Audio::new(out, audio.sample_rate),
        gain,
    })
}

/// Exponentially decaying noise tail after a unit direct path, reaching -60 dB at `rt60`.
pub fn synthetic_ir(sample_rate: u32, rt60: f64, seed: u64) -> Audio {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (rt60 * sample_rate as f64).ceil().max(1.0) as usize;
    let decay = (1e-3f64).ln() / (rt60 * sample_rate as f64);
    let predelay = (0.01 * sample_rate as f64) as usize;
    let mut samples = vec![0f32; len];
    samples[0] = 1.0;
    for (i, s) in samples.iter_mut().enumerate().skip(predelay.max(1)) {
        let noise: f64 = rng.gen_range(-1.0..1.0);
        *s = (0.3 * noise * (decay * i as f64).exp()) as f32;
    }
    Audio::new(samples, sample_rate)
}
