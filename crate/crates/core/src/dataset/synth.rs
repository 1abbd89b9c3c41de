use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{merge_tracks, F0Track};
use crate::audio::{write_wav, Audio};
use crate::error::{Error, Result};
use crate::grid::HcqtParams;

/// MIDI note ranges used by [`random_quartet_spec`] for soprano, alto, tenor and bass.
pub const SATB_RANGES: [(&str, u8, u8); 4] = [("S", 60, 77), ("A", 53, 72), ("T", 48, 69), ("B", 40, 64)];

const ATTACK_SEC: f64 = 0.04;
const RELEASE_SEC: f64 = 0.06;
const MAX_VIBRATO_CENTS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub start: f64,
    pub duration: f64,
    /// Fractional MIDI pitch (69 = 440 Hz).
    pub midi: f64,
}

impl Note {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn hz(&self) -> f64 {
        440.0 * 2f64.powf((self.midi - 69.0) / 12.0)
    }
}

fn default_partials() -> usize {
    8
}
fn default_gain() -> f32 {
    0.2
}
fn default_vibrato_rate() -> f64 {
    5.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceSpec {
    pub name: String,
    pub notes: Vec<Note>,
    #[serde(default = "default_gain")]
    pub gain: f32,
    #[serde(default = "default_partials")]
    pub partials: usize,
    #[serde(default)]
    pub vibrato_cents: f64,
    #[serde(default = "default_vibrato_rate")]
    pub vibrato_hz: f64,
}

impl VoiceSpec {
    pub fn new(name: &str, notes: Vec<Note>) -> Self {
        Self {
            name: name.to_string(),
            notes,
            gain: default_gain(),
            partials: default_partials(),
            vibrato_cents: 0.0,
            vibrato_hz: default_vibrato_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartetSpec {
    /// Total length in seconds; notes past the end are cut.
    pub duration: f64,
    pub voices: Vec<VoiceSpec>,
    #[serde(default)]
    pub seed: u64,
}

/// Renders one voice as a harmonic tone and returns it with its F0 track on the hop grid.
pub fn render_voice(voice: &VoiceSpec, duration: f64, params: &HcqtParams, seed: u64) -> Result<(Audio, F0Track)> {
    let sr = params.sample_rate as f64;
    let (lo, hi) = params.freq_range();
    let mut notes = voice.notes.clone();
    notes.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
    for w in notes.windows(2) {
        if w[1].start < w[0].end() - 1e-9 {
            return Err(Error::Dataset(format!(
                "voice {}: note at {:.3}s overlaps the note starting at {:.3}s",
                voice.name, w[1].start, w[0].start
            )));
        }
    }
    for n in &notes {
        let f = n.hz();
        let worst = [f * 2f64.powf(-MAX_VIBRATO_CENTS / 1200.0), f * 2f64.powf(MAX_VIBRATO_CENTS / 1200.0)];
        if worst[0] < lo || worst[1] >= hi {
            return Err(Error::OutOfRange { freq: f, lo, hi });
        }
        if n.duration <= 0.0 || n.start < 0.0 {
            return Err(Error::Dataset(format!("voice {}: invalid note timing", voice.name)));
        }
    }
    if voice.vibrato_cents.abs() > MAX_VIBRATO_CENTS {
        return Err(Error::Dataset(format!(
            "voice {}: vibrato depth {} exceeds {MAX_VIBRATO_CENTS} cents",
            voice.name, voice.vibrato_cents
        )));
    }
    if voice.partials == 0 {
        return Err(Error::Dataset(format!("voice {}: needs at least one partial", voice.name)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vib_phase = rng.gen_range(0.0..2.0 * PI);
    // Spectral envelope: gentle tilt times a fixed random colouring per voice.
    let amps: Vec<f64> = (1..=voice.partials)
        .map(|k| rng.gen_range(0.5..1.0) / (k as f64).powf(0.9))
        .collect();
    let amp_norm: f64 = amps.iter().sum();
    let f0_at = |note: &Note, t: f64| {
        let vib = voice.vibrato_cents * (2.0 * PI * voice.vibrato_hz * t + vib_phase).sin();
        note.hz() * 2f64.powf(vib / 1200.0)
    };

    let n = (duration * sr).round() as usize;
    let mut samples = vec![0f32; n];
    for note in &notes {
        let s0 = (note.start * sr).round() as usize;
        let s1 = ((note.end() * sr).round() as usize).min(n);
        let mut phase = rng.gen_range(0.0..2.0 * PI);
        for i in s0..s1 {
            let t = i as f64 / sr;
            let local = t - note.start;
            let env = (local / ATTACK_SEC).min(1.0).min((note.end() - t) / RELEASE_SEC).clamp(0.0, 1.0);
            let env = 0.5 - 0.5 * (PI * env).cos();
            let f = f0_at(note, t);
            let mut v = 0.0;
            for (k, a) in amps.iter().enumerate() {
                let fk = f * (k + 1) as f64;
                if fk >= 0.45 * sr {
                    break;
                }
                v += a * ((k + 1) as f64 * phase).sin();
            }
            samples[i] = (voice.gain as f64 * env * v / amp_norm) as f32;
            phase += 2.0 * PI * f / sr;
            if phase > 2.0 * PI * 64.0 {
                phase -= 2.0 * PI * 64.0;
            }
        }
    }

    let times = params.frame_times(params.n_frames(n));
    let f0 = times
        .iter()
        .map(|&t| {
            notes
                .iter()
                .find(|nt| t >= nt.start && t < nt.end())
                .map_or(0.0, |nt| f0_at(nt, t))
        })
        .collect();
    Ok((Audio::new(samples, params.sample_rate), F0Track::new(times, f0)?))
}

/// Renders every voice and sums them. Returns the mixture, the individual voices and their
/// F0 tracks in voice order.
pub fn synth_quartet(spec: &QuartetSpec, params: &HcqtParams) -> Result<(Audio, Vec<Audio>, Vec<F0Track>)> {
    let mut stems = Vec::with_capacity(spec.voices.len());
    let mut tracks = Vec::with_capacity(spec.voices.len());
    for (i, v) in spec.voices.iter().enumerate() {
        let (a, t) = render_voice(v, spec.duration, params, spec.seed.wrapping_mul(31).wrapping_add(i as u64))?;
        stems.push(a);
        tracks.push(t);
    }
    let mixed = super::mix_stems(&stems, None)?;
    Ok((mixed.audio, stems, tracks))
}

/// A random homophonic SATB passage: chords of 0.4-1.2 s, voices kept at least two semitones
/// apart in S > A > T > B order, occasional rests, per-note intonation error up to ±15 cents
/// and vibrato of 5-15 cents.
pub fn random_quartet_spec(seed: u64, duration: f64) -> QuartetSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut voices: Vec<VoiceSpec> = SATB_RANGES
        .iter()
        .map(|&(name, _, _)| {
            let mut v = VoiceSpec::new(name, Vec::new());
            v.vibrato_cents = rng.gen_range(5.0..15.0);
            v.vibrato_hz = rng.gen_range(4.5..6.0);
            v.partials = rng.gen_range(8..=10);
            v.gain = rng.gen_range(0.15..0.25);
            v
        })
        .collect();
    let mut t = rng.gen_range(0.0..0.3);
    while t < duration - 0.2 {
        let len = rng.gen_range(0.4..1.2f64).min(duration - t);
        let gap = if rng.gen_bool(0.2) { rng.gen_range(0.05..0.25) } else { 0.0 };
        // Bass upwards, each voice at least two semitones above the one below.
        let mut below: Option<u8> = None;
        let mut pitches = [0u8; 4];
        for idx in (0..4).rev() {
            let (_, lo, hi) = SATB_RANGES[idx];
            let lo = below.map_or(lo, |b| lo.max(b + 2));
            let hi = hi.max(lo);
            let p = rng.gen_range(lo..=hi);
            pitches[idx] = p;
            below = Some(p);
        }
        for (v, &p) in voices.iter_mut().zip(&pitches) {
            if rng.gen_bool(0.1) {
                continue;
            }
            v.notes.push(Note {
                start: t,
                duration: (len - gap).max(0.1),
                midi: p as f64 + rng.gen_range(-0.15..0.15),
            });
        }
        t += len;
    }
    QuartetSpec { duration, voices, seed }
}

/// Renders a quartet into `out_dir`: `mix.wav` with its multi-F0 annotation `mix.txt` on the
/// analysis frame grid, and per voice `<name>.wav` plus its F0 track `<name>.csv`.
pub fn write_quartet(spec: &QuartetSpec, params: &HcqtParams, out_dir: &Path) -> Result<()> {
    let (mix, stems, tracks) = synth_quartet(spec, params)?;
    write_wav(out_dir.join("mix.wav"), &mix)?;
    let times = params.frame_times(params.n_frames(mix.samples.len()));
    merge_tracks(&tracks, &times).write(out_dir.join("mix.txt"))?;
    for ((voice, audio), track) in spec.voices.iter().zip(&stems).zip(&tracks) {
        write_wav(out_dir.join(format!("{}.wav", voice.name)), audio)?;
        track.write(out_dir.join(format!("{}.csv", voice.name)))?;
    }
    Ok(())
}

/// Writes `n_songs` random quartets as a stem dataset, `<dir>/song_NNN/<part>_synth.wav` with
/// sibling `.csv` F0 tracks, ready for forging. Song `i` is drawn with seed `seed + i`.
pub fn write_stem_dataset(dir: &Path, n_songs: usize, duration: f64, seed: u64, params: &HcqtParams) -> Result<()> {
    for i in 0..n_songs {
        let spec = random_quartet_spec(seed + i as u64, duration);
        let (_, stems, tracks) = synth_quartet(&spec, params)?;
        let song = dir.join(format!("song_{i:03}"));
        for ((voice, audio), track) in spec.voices.iter().zip(&stems).zip(&tracks) {
            write_wav(song.join(format!("{}_synth.wav", voice.name)), audio)?;
            track.write(song.join(format!("{}_synth.csv", voice.name)))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::merge_tracks;

    #[test]
    fn single_note_track_is_constant() {
        let p = HcqtParams::default();
        let v = VoiceSpec::new(
            "S",
            vec![Note {
                start: 0.0,
                duration: 2.0,
                midi: 57.0,
            }],
        );
        let (audio, track) = render_voice(&v, 2.0, &p, 1).unwrap();
        assert_eq!(audio.samples.len(), 44100);
        let voiced: Vec<f64> = track.f0.iter().copied().filter(|&f| f > 0.0).collect();
        assert!(voiced.len() >= track.len() - 2);
        assert!(voiced.iter().all(|&f| (f - 220.0).abs() < 1e-9));
    }

    #[test]
    fn chord_gives_four_f0s_per_interior_frame() {
        let p = HcqtParams::default();
        let voices = [("S", 72.0), ("A", 67.0), ("T", 64.0), ("B", 48.0)]
            .iter()
            .map(|&(n, m)| {
                let mut v = VoiceSpec::new(
                    n,
                    vec![Note {
                        start: 0.1,
                        duration: 1.8,
                        midi: m,
                    }],
                );
                v.vibrato_cents = 10.0;
                v
            })
            .collect();
        let spec = QuartetSpec {
            duration: 2.0,
            voices,
            seed: 4,
        };
        let (mix, stems, tracks) = synth_quartet(&spec, &p).unwrap();
        assert_eq!(stems.len(), 4);
        assert!(mix.peak() > 0.1 && mix.peak() <= 1.0);
        let ann = merge_tracks(&tracks, &tracks[0].times);
        for (t, set) in ann.frame_times.iter().zip(&ann.f0_sets) {
            if *t > 0.15 && *t < 1.85 {
                assert_eq!(set.len(), 4, "{t}");
            }
        }
    }

    #[test]
    fn overlapping_notes_rejected() {
        let p = HcqtParams::default();
        let v = VoiceSpec::new(
            "S",
            vec![
                Note {
                    start: 0.0,
                    duration: 1.0,
                    midi: 60.0,
                },
                Note {
                    start: 0.5,
                    duration: 1.0,
                    midi: 62.0,
                },
            ],
        );
        assert!(render_voice(&v, 2.0, &p, 0).is_err());
    }

    #[test]
    fn random_specs_are_valid_and_ordered() {
        let p = HcqtParams::default();
        for seed in 0..5 {
            let spec = random_quartet_spec(seed, 4.0);
            let (_, _, tracks) = synth_quartet(&spec, &p).unwrap();
            assert_eq!(tracks.len(), 4);
            assert_eq!(spec, random_quartet_spec(seed, 4.0));
        }
    }
}
