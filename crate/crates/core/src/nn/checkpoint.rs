//! Versioned model container: magic, version, JSON header, then little-endian `f32` values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{build_model, Architecture, LayerSpec, PhaseNorm, SalienceModel};
use crate::error::{Error, Result};
use crate::grid::HcqtParams;

const MAGIC: &[u8; 8] = b"CHOIRF0M";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    params: HcqtParams,
    params_hash: String,
    threshold: Option<f32>,
    phase_norm: Option<PhaseNorm>,
    training_fingerprint: Option<String>,
    layers: Vec<LayerSpec>,
    n_values: usize,
}

/// Every stored tensor of a model in file order: per block the convolution weight and bias,
/// then the normalization scale, shift, running mean and running variance.
fn stored_tensors(model: &SalienceModel) -> Vec<&[f32]> {
    model
        .blocks()
        .flat_map(|b| {
            [
                &b.conv.weight[..],
                &b.conv.bias[..],
                &b.bn.gamma[..],
                &b.bn.beta[..],
                &b.bn.running_mean[..],
                &b.bn.running_var[..],
            ]
        })
        .collect()
}

fn stored_tensors_mut(model: &mut SalienceModel) -> Vec<&mut [f32]> {
    model
        .blocks_mut()
        .flat_map(|b| {
            let super::model::Block { bn, conv, .. } = b;
            [
                &mut conv.weight[..],
                &mut conv.bias[..],
                &mut bn.gamma[..],
                &mut bn.beta[..],
                &mut bn.running_mean[..],
                &mut bn.running_var[..],
            ]
        })
        .collect()
}

/// Short SHA-256 digest of the weights and running statistics.
pub fn weights_fingerprint(model: &SalienceModel) -> String {
    let mut h = Sha256::new();
    h.update(model.architecture.as_str().as_bytes());
    for t in stored_tensors(model) {
        for v in t {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(model: &SalienceModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tensors = stored_tensors(model);
    let header = Header {
        architecture: model.architecture,
        params: model.params.clone(),
        params_hash: model.params.params_hash(),
        threshold: model.threshold,
        phase_norm: model.phase_norm.clone(),
        training_fingerprint: model.training_fingerprint.clone(),
        layers: model.layers(),
        n_values: tensors.iter().map(|t| t.len()).sum(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 4 * header.n_values);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in tensors {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SalienceModel> {
    let path = path.as_ref();
    let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a model checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.params.params_hash() != header.params_hash {
        return Err(bad("analysis parameters do not match their recorded hash".into()));
    }
    let mut model = build_model(header.architecture, &header.params, 0)?;
    if model.layers() != header.layers {
        return Err(bad(format!("layer listing does not match architecture {}", header.architecture)));
    }
    let data = &bytes[16 + hlen..];
    if data.len() != 4 * header.n_values {
        return Err(bad(format!("expected {} values, found {} bytes", header.n_values, data.len())));
    }
    let mut values = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for t in stored_tensors_mut(&mut model) {
        for v in t.iter_mut() {
            *v = values.next().ok_or_else(|| bad("value count mismatch".into()))?;
        }
    }
    if values.next().is_some() {
        return Err(bad("value count mismatch".into()));
    }
    model.threshold = header.threshold;
    model.phase_norm = header.phase_norm;
    model.training_fingerprint = header.training_fingerprint;
    Ok(model)
}
