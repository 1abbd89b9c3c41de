//! Per-voice F0 tracks and frame-wise multi-F0 annotations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Voiced values outside this band are treated as unvoiced when a track is loaded.
pub const VOICED_RANGE_HZ: (f64, f64) = (20.0, 2000.0);

/// A single voice's F0 contour; `f0 <= 0` marks unvoiced samples.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub times: Vec<f64>,
    pub f0: Vec<f64>,
}

impl F0Track {
    pub fn new(times: Vec<f64>, f0: Vec<f64>) -> Result<Self> {
        if times.len() != f0.len() {
            return Err(Error::Shape(format!(
                "{} times vs {} f0 values",
                times.len(),
                f0.len()
            )));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Parse {
                path: "<track>".into(),
                line: i + 2,
                msg: "times are not strictly increasing".into(),
            });
        }
        Ok(Self { times, f0 })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Parses `time_sec,f0_hz` rows. A non-numeric first line is taken as a header; blank
    /// lines are ignored.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut f0 = Vec::new();
        let mut out_of_band = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: origin.to_string(),
                line: line_no,
                msg,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match fields.as_slice() {
                [t, f] => t.parse::<f64>().ok().zip(f.parse::<f64>().ok()),
                _ => None,
            };
            let (t, f) = match parsed {
                Some(v) => v,
                None if times.is_empty() && idx == first_content_line(text) && line.chars().any(char::is_alphabetic) => continue,
                None => return Err(parse_err(format!("expected `time_sec,f0_hz`, got {line:?}"))),
            };
            if !t.is_finite() || !f.is_finite() {
                return Err(parse_err("non-finite value".into()));
            }
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(parse_err(format!("time {t} does not increase (previous {prev})")));
                }
            }
            let f = if f > 0.0 && !(VOICED_RANGE_HZ.0..=VOICED_RANGE_HZ.1).contains(&f) {
                out_of_band += 1;
                0.0
            } else {
                f.max(0.0)
            };
            times.push(t);
            f0.push(f);
        }
        if out_of_band > 0 {
            log::warn!("{origin}: {out_of_band} voiced values outside {VOICED_RANGE_HZ:?} Hz marked unvoiced");
        }
        Ok(Self { times, f0 })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_sec,f0_hz\n");
        for (t, f) in self.times.iter().zip(&self.f0) {
            let _ = writeln!(s, "{t:.6},{f:.6}");
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_csv())
    }

    /// Median spacing between samples, if there are at least two.
    pub fn median_step(&self) -> Option<f64> {
        let mut d: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        if d.is_empty() {
            return None;
        }
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(d[d.len() / 2])
    }

    /// Voiced F0 of the sample nearest to `t`, if that sample lies within `max_dist` seconds.
    pub fn voiced_near(&self, t: f64, max_dist: f64) -> Option<f64> {
        let i = nearest_index(&self.times, t)?;
        let f = self.f0[i];
        ((self.times[i] - t).abs() <= max_dist && f > 0.0).then_some(f)
    }

    /// Multiplies every voiced value by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            times: self.times.clone(),
            f0: self
                .f0
                .iter()
                .map(|&f| if f > 0.0 { f * factor } else { f })
                .collect(),
        }
    }
}

fn first_content_line(text: &str) -> usize {
    text.lines().position(|l| !l.trim().is_empty()).unwrap_or(0)
}

pub(crate) fn nearest_index(sorted: &[f64], t: f64) -> Option<usize> {
    if sorted.is_empty() {
        return None;
    }
    let i = sorted.partition_point(|&x| x < t);
    if i == 0 {
        Some(0)
    } else if i == sorted.len() {
        Some(i - 1)
    } else if (sorted[i] - t) < (t - sorted[i - 1]) {
        Some(i)
    } else {
        Some(i - 1)
    }
}

/// Frame-wise sets of concurrent F0 values on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiF0Annotation {
    pub frame_times: Vec<f64>,
    pub f0_sets: Vec<Vec<f64>>,
}

impl MultiF0Annotation {
    pub fn new(frame_times: Vec<f64>, f0_sets: Vec<Vec<f64>>) -> Result<Self> {
        if frame_times.len() != f0_sets.len() {
            return Err(Error::Shape(format!(
                "{} frame times vs {} f0 sets",
                frame_times.len(),
                f0_sets.len()
            )));
        }
        Ok(Self {
            frame_times,
            f0_sets,
        })
    }

    /// All frames empty.
    pub fn empty(frame_times: Vec<f64>) -> Self {
        let n = frame_times.len();
        Self {
            frame_times,
            f0_sets: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.frame_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_times.is_empty()
    }

    pub fn total_f0s(&self) -> usize {
        self.f0_sets.iter().map(Vec::len).sum()
    }

    /// Drops trailing frames beyond `n`.
    pub fn truncate(&mut self, n: usize) {
        self.frame_times.truncate(n);
        self.f0_sets.truncate(n);
    }

    /// One line per frame: time, then tab-separated Hz values, 6 decimal places.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (t, set) in self.frame_times.iter().zip(&self.f0_sets) {
            let _ = write!(s, "{t:.6}");
            for f in set {
                let _ = write!(s, "\t{f:.6}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut frame_times = Vec::new();
        let mut f0_sets = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let values: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let values = values.map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
            frame_times.push(values[0]);
            f0_sets.push(values[1..].iter().copied().filter(|&f| f > 0.0).collect());
        }
        Ok(Self {
            frame_times,
            f0_sets,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_text())
    }

    /// Copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            frame_times: self.frame_times.clone(),
            f0_sets: self
                .f0_sets
                .iter()
                .map(|s| s.iter().map(|f| f * factor).collect())
                .collect(),
        }
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Resamples each track onto `frame_times` by nearest neighbour and takes the per-frame union
/// of voiced values, sorted ascending.
///
/// A frame takes a track's nearest sample only when it lies within half of the coarser of the
/// frame step and the track's median sample step; otherwise that track is unvoiced there.
pub fn merge_tracks(tracks: &[F0Track], frame_times: &[f64]) -> MultiF0Annotation {
    let frame_step = frame_times
        .windows(2)
        .next()
        .map(|w| w[1] - w[0])
        .unwrap_or(f64::INFINITY);
    let windows: Vec<f64> = tracks
        .iter()
        .map(|tr| 0.5 * tr.median_step().map_or(frame_step, |s| s.max(frame_step)))
        .collect();
    let f0_sets = frame_times
        .iter()
        .map(|&t| {
            let mut set: Vec<f64> = tracks
                .iter()
                .zip(&windows)
                .filter_map(|(tr, &w)| tr.voiced_near(t, w + 1e-9))
                .collect();
            set.sort_by(|a, b| a.partial_cmp(b).unwrap());
            set
        })
        .collect();
    MultiF0Annotation {
        frame_times: frame_times.to_vec(),
        f0_sets,
    }
}
