//! Versioned binary container for extracted features.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! b"HCQTFEAT"        magic, 8 bytes
//! u32                format version
//! u32                header length in bytes
//! [u8]               JSON header: params, params_hash, harmonics, bins, frames, has_phase
//! f32 × H·F·T        magnitude, harmonic-major then bin then frame
//! f32 × H·F·T        phase differentials (only when has_phase)
//! f64 × T            frame times in seconds
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::HcqtFeatures;
use crate::error::{Error, Result};
use crate::grid::HcqtParams;

const MAGIC: &[u8; 8] = b"HCQTFEAT";
pub const FEATURE_CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    params: HcqtParams,
    params_hash: String,
    harmonics: usize,
    bins: usize,
    frames: usize,
    has_phase: bool,
}

pub fn write_features(path: impl AsRef<Path>, features: &HcqtFeatures, params: &HcqtParams) -> Result<()> {
    let path = path.as_ref();
    let (h, f, t) = features.magnitude.dim();
    let header = serde_json::to_vec(&Header {
        params: params.clone(),
        params_hash: params.params_hash(),
        harmonics: h,
        bins: f,
        frames: t,
        has_phase: features.phase_diff.is_some(),
    })?;
    let mut buf = Vec::with_capacity(16 + header.len() + 8 * h * f * t + 8 * t);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FEATURE_CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    let mut put = |a: &Array3<f32>| {
        for v in a.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    put(&features.magnitude);
    if let Some(pd) = &features.phase_diff {
        put(pd);
    }
    for v in &features.frame_times {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads a cache, rejecting it when it was computed with different parameters.
pub fn read_features(path: impl AsRef<Path>, params: &HcqtParams) -> Result<HcqtFeatures> {
    let path = path.as_ref();
    let stale = |reason: String| Error::StaleCache {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(stale("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FEATURE_CACHE_VERSION {
        return Err(stale(format!("format version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(
        bytes
            .get(16..16 + hlen)
            .ok_or_else(|| stale("truncated header".into()))?,
    )?;
    if header.params_hash != params.params_hash() {
        return Err(stale(format!(
            "params hash {} != expected {}",
            header.params_hash,
            params.params_hash()
        )));
    }
    let n = header.harmonics * header.bins * header.frames;
    let n_tensors = if header.has_phase { 2 } else { 1 };
    let expected = 16 + hlen + 4 * n * n_tensors + 8 * header.frames;
    if bytes.len() != expected {
        return Err(stale(format!("size {} != expected {expected}", bytes.len())));
    }
    let mut pos = 16 + hlen;
    let shape = (header.harmonics, header.bins, header.frames);
    let mut take_tensor = || {
        let v: Vec<f32> = bytes[pos..pos + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        pos += 4 * n;
        Array3::from_shape_vec(shape, v).expect("shape checked")
    };
    let magnitude = take_tensor();
    let phase_diff = header.has_phase.then(&mut take_tensor);
    let frame_times = bytes[pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(HcqtFeatures {
        magnitude,
        phase_diff,
        frame_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_stale_detection() {
        let params = HcqtParams::default();
        let features = HcqtFeatures {
            magnitude: Array3::from_shape_fn((5, 360, 3), |(h, f, t)| (h + f + t) as f32 / 400.0),
            phase_diff: Some(Array3::from_elem((5, 360, 3), -0.25)),
            frame_times: params.frame_times(3),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.hcqt");
        write_features(&path, &features, &params).unwrap();
        assert_eq!(read_features(&path, &params).unwrap(), features);

        let mut other = params.clone();
        other.hop_length = 512;
        assert!(matches!(read_features(&path, &other), Err(Error::StaleCache { .. })));

        let no_phase = HcqtFeatures {
            phase_diff: None,
            ..features
        };
        write_features(&path, &no_phase, &params).unwrap();
        assert_eq!(read_features(&path, &params).unwrap(), no_phase);
    }
}
