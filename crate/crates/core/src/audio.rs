//! WAV input/output, channel downmix and sample-rate conversion.

use std::path::Path;

use rubato::{
    Resampler, SincFixedIn, SincInterpolationParameters, SincInterpolationType, WindowFunction,
};

use crate::error::{Error, Result};

/// Mono audio at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Audio {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        peak(&self.samples)
    }

    /// Returns a copy converted to `target` Hz.
    pub fn resampled(&self, target: u32) -> Result<Audio> {
        Ok(Audio::new(
            resample(&self.samples, self.sample_rate, target)?,
            target,
        ))
    }
}

pub fn peak(samples: &[f32]) -> f32 {
    samples.iter().fold(0.0f32, |m, &s| m.max(s.abs()))
}

pub fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
    (sum / samples.len() as f64).sqrt()
}

/// Reads a WAV file and averages its channels to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Audio> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
    };
    let channels = spec.channels.max(1) as usize;
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    Ok(Audio::new(samples, spec.sample_rate))
}

/// Reads a WAV file, downmixes to mono and converts it to `sample_rate`.
pub fn load_audio(path: impl AsRef<Path>, sample_rate: u32) -> Result<Audio> {
    let audio = read_wav(path)?;
    if audio.sample_rate == sample_rate {
        Ok(audio)
    } else {
        audio.resampled(sample_rate)
    }
}

/// Writes mono 32-bit float WAV.
pub fn write_wav(path: impl AsRef<Path>, audio: &Audio) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &audio.samples {
        writer.write_sample(s).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

/// Band-limited sinc resampling of a whole buffer by the ratio `to / from`.
///
/// The output length is `round(len × to / from)`; output sample `i` lines up with input time
/// `i × from / to` to within one output sample.
pub fn resample(samples: &[f32], from: u32, to: u32) -> Result<Vec<f32>> {
    resample_ratio(samples, to as f64 / from as f64)
}

/// Resamples by an arbitrary positive `ratio` (output rate / input rate).
pub fn resample_ratio(samples: &[f32], ratio: f64) -> Result<Vec<f32>> {
    if (ratio - 1.0).abs() < 1e-12 {
        return Ok(samples.to_vec());
    }
    let target_len = (samples.len() as f64 * ratio).round() as usize;
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let params = SincInterpolationParameters {
        sinc_len: 256,
        f_cutoff: 0.95,
        interpolation: SincInterpolationType::Cubic,
        oversampling_factor: 256,
        window: WindowFunction::BlackmanHarris2,
    };
    let chunk = 4096;
    let mut resampler = SincFixedIn::<f64>::new(ratio, 1.0, params, chunk, 1)
        .map_err(|e| Error::Resample(e.to_string()))?;
    // rubato 0.16 already aligns the sinc filter on its output, so `output_delay` is not
    // trimmed here; the tail is flushed until the expected length is reached.
    let input: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
    let mut out: Vec<f64> = Vec::with_capacity(target_len + 2 * chunk);
    let mut pos = 0;
    while pos + chunk <= input.len() {
        let block = resampler
            .process(&[&input[pos..pos + chunk]], None)
            .map_err(|e| Error::Resample(e.to_string()))?;
        out.extend_from_slice(&block[0]);
        pos += chunk;
    }
    if pos < input.len() {
        let block = resampler
            .process_partial(Some(&[&input[pos..]]), None)
            .map_err(|e| Error::Resample(e.to_string()))?;
        out.extend_from_slice(&block[0]);
    }
    while out.len() < target_len {
        let block = resampler
            .process_partial::<&[f64]>(None, None)
            .map_err(|e| Error::Resample(e.to_string()))?;
        if block[0].is_empty() {
            break;
        }
        out.extend_from_slice(&block[0]);
    }
    let mut result: Vec<f32> = out
        .into_iter()
        .take(target_len)
        .map(|s| s as f32)
        .collect();
    result.resize(target_len, 0.0);
    Ok(result)
}
