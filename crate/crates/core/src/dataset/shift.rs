use std::f64::consts::PI;

use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;

use crate::annotation::F0Track;
use crate::audio::{resample_ratio, Audio};
use crate::error::{Error, Result};

/// Largest supported shift magnitude, in semitones.
pub const MAX_SHIFT_SEMITONES: i32 = 2;

const N_FFT: usize = 2048;
const HOP: usize = 512;

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn wrap(x: f64) -> f64 {
    x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor()
}

/// Phase-vocoder time stretch; the output is `factor` times as long.
fn stretch(samples: &[f32], factor: f64) -> Vec<f32> {
    let window = hann(N_FFT);
    let pad = N_FFT / 2;
    let mut padded = vec![0f64; samples.len() + 2 * pad];
    for (d, &s) in padded[pad..].iter_mut().zip(samples) {
        *d = s as f64;
    }
    let n_frames = 1 + (padded.len() - N_FFT) / HOP;
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(N_FFT);
    let inv = planner.plan_fft_inverse(N_FFT);
    let n_freq = N_FFT / 2 + 1;

    let mut frames: Vec<Vec<Complex64>> = Vec::with_capacity(n_frames + 1);
    let mut buf = vec![0f64; N_FFT];
    for f in 0..n_frames {
        let seg = &padded[f * HOP..f * HOP + N_FFT];
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = x * w;
        }
        let mut spec = fwd.make_output_vec();
        fwd.process(&mut buf, &mut spec).expect("fft length is fixed");
        frames.push(spec);
    }
    frames.push(vec![Complex64::new(0.0, 0.0); n_freq]);

    let advance: Vec<f64> = (0..n_freq)
        .map(|k| 2.0 * PI * k as f64 * HOP as f64 / N_FFT as f64)
        .collect();
    let rate = 1.0 / factor;
    let mut phase: Vec<f64> = frames[0].iter().map(|c| c.arg()).collect();
    let out_len = (samples.len() as f64 * factor).round() as usize;
    let mut out = vec![0f64; out_len + 2 * pad + N_FFT];
    let mut norm = vec![0f64; out.len()];
    let mut t = 0.0f64;
    let mut k = 0usize;
    while t < n_frames as f64 {
        let i = t.floor() as usize;
        let alpha = t - i as f64;
        let (a, b) = (&frames[i], &frames[i + 1]);
        let mut col: Vec<Complex64> = (0..n_freq)
            .map(|j| {
                let mag = (1.0 - alpha) * a[j].norm() + alpha * b[j].norm();
                Complex64::from_polar(mag, phase[j])
            })
            .collect();
        for j in 0..n_freq {
            let dphi = wrap(b[j].arg() - a[j].arg() - advance[j]);
            phase[j] += advance[j] + dphi;
        }
        col[0].im = 0.0;
        col[n_freq - 1].im = 0.0;
        inv.process(&mut col, &mut buf).expect("fft length is fixed");
        let start = k * HOP;
        if start + N_FFT > out.len() {
            break;
        }
        for n in 0..N_FFT {
            out[start + n] += buf[n] / N_FFT as f64 * window[n];
            norm[start + n] += window[n] * window[n];
        }
        t += rate;
        k += 1;
    }
    (0..out_len)
        .map(|i| {
            let w = norm[i + pad];
            if w > 1e-8 {
                (out[i + pad] / w) as f32
            } else {
                0.0
            }
        })
        .collect()
}

/// Shifts pitch by `semitones` while keeping the duration: time-stretch by the pitch ratio,
/// then resample back to the original length.
pub fn pitch_shift_audio(samples: &[f32], semitones: f64) -> Result<Vec<f32>> {
    if semitones == 0.0 || samples.is_empty() {
        return Ok(samples.to_vec());
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let stretched = stretch(samples, ratio);
    let mut out = resample_ratio(&stretched, 1.0 / ratio)?;
    out.resize(samples.len(), 0.0);
    Ok(out)
}

/// Pitch-shifts a stem and scales its voiced F0 values by `2^(semitones/12)`.
pub fn pitch_shift_stem(audio: &Audio, track: &F0Track, semitones: i32) -> Result<(Audio, F0Track)> {
    if semitones.abs() > MAX_SHIFT_SEMITONES {
        return Err(Error::Dataset(format!(
            "pitch shift of {semitones} semitones exceeds ±{MAX_SHIFT_SEMITONES}"
        )));
    }
    if semitones == 0 {
        return Ok((audio.clone(), track.clone()));
    }
    let factor = 2f64.powf(semitones as f64 / 12.0);
    let samples = pitch_shift_audio(&audio.samples, semitones as f64)?;
    Ok((Audio::new(samples, audio.sample_rate), track.scaled(factor)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::rms;

    fn tone(f: f64, secs: f64) -> Vec<f32> {
        let sr = 22050.0;
        (0..(secs * sr) as usize)
            .map(|i| (0.5 * (2.0 * PI * f * i as f64 / sr).sin()) as f32)
            .collect()
    }

    fn dominant_freq(x: &[f32]) -> f64 {
        let n = 16384;
        let start = (x.len() - n) / 2;
        let mut buf: Vec<f64> = x[start..start + n]
            .iter()
            .zip(hann(n))
            .map(|(&v, w)| v as f64 * w)
            .collect();
        let mut planner = RealFftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(n);
        let mut spec = fft.make_output_vec();
        fft.process(&mut buf, &mut spec).unwrap();
        let k = (1..spec.len() - 1)
            .max_by(|&a, &b| spec[a].norm().partial_cmp(&spec[b].norm()).unwrap())
            .unwrap();
        // Parabolic interpolation on log magnitude.
        let (l, c, r) = (spec[k - 1].norm().ln(), spec[k].norm().ln(), spec[k + 1].norm().ln());
        let off = 0.5 * (l - r) / (l - 2.0 * c + r);
        (k as f64 + off) * 22050.0 / n as f64
    }

    #[test]
    fn stretch_changes_length_not_pitch() {
        let x = tone(300.0, 2.0);
        let y = stretch(&x, 1.25);
        assert_eq!(y.len(), (x.len() as f64 * 1.25).round() as usize);
        assert!((dominant_freq(&y) - 300.0).abs() < 1.0);
    }

    #[test]
    fn shift_moves_pitch_and_keeps_duration() {
        let x = tone(220.0, 2.0);
        for s in [-2, -1, 1, 2] {
            let y = pitch_shift_audio(&x, s as f64).unwrap();
            assert_eq!(y.len(), x.len());
            let want = 220.0 * 2f64.powf(s as f64 / 12.0);
            let got = dominant_freq(&y);
            assert!(crate::grid::cents(got, want).abs() < 5.0, "{s}: {got} vs {want}");
            let level = rms(&y[5000..35000]) / rms(&x[5000..35000]);
            assert!((0.7..1.3).contains(&level), "{s}: level {level}");
        }
    }

    #[test]
    fn zero_shift_is_passthrough() {
        let a = Audio::new(tone(220.0, 0.5), 22050);
        let tr = F0Track::new(vec![0.0, 0.1], vec![220.0, 0.0]).unwrap();
        let (b, t) = pitch_shift_stem(&a, &tr, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(tr, t);
    }

    #[test]
    fn annotation_scales_exactly() {
        let a = Audio::new(tone(220.0, 0.5), 22050);
        let tr = F0Track::new(vec![0.0, 0.1, 0.2], vec![220.0, 0.0, 110.0]).unwrap();
        let (_, t) = pitch_shift_stem(&a, &tr, 2).unwrap();
        let f = 2f64.powf(2.0 / 12.0);
        assert_eq!(t.f0, vec![220.0 * f, 0.0, 110.0 * f]);
        assert!((t.f0[0] - 246.94).abs() < 0.01);
        assert!(pitch_shift_stem(&a, &tr, 3).is_err());
    }
}
