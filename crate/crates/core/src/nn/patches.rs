use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::model::{ModelInput, SalienceModel};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::hcqt::HcqtFeatures;

/// Features of one recording paired with its salience target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub id: String,
    pub features: HcqtFeatures,
    /// `[bins × frames]`
    pub target: Array2<f32>,
}

impl TrainExample {
    pub fn new(id: impl Into<String>, features: HcqtFeatures, target: Array2<f32>) -> Result<Self> {
        let id = id.into();
        let t = features.n_frames().min(target.ncols());
        if features.n_frames().abs_diff(target.ncols()) > 1 || features.n_bins() != target.nrows() {
            return Err(Error::Shape(format!(
                "{id}: features {}×{} vs target {:?}",
                features.n_bins(),
                features.n_frames(),
                target.dim()
            )));
        }
        // A one-frame disagreement comes from rounding of the file length; trim the longer.
        let mut features = features;
        if features.n_frames() > t {
            features.magnitude = features.magnitude.slice(ndarray::s![.., .., ..t]).to_owned();
            features.phase_diff = features.phase_diff.map(|p| p.slice(ndarray::s![.., .., ..t]).to_owned());
            features.frame_times.truncate(t);
        }
        let target = if target.ncols() > t {
            target.slice(ndarray::s![.., ..t]).to_owned()
        } else {
            target
        };
        Ok(Self { id, features, target })
    }

    pub fn n_frames(&self) -> usize {
        self.target.ncols()
    }
}

/// A window of `patch_frames` frames starting at `offset` in example `file`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRef {
    pub file: usize,
    pub offset: usize,
}

/// `count` offsets drawn uniformly from `0..=n_frames - patch_frames`.
pub fn patch_offsets(n_frames: usize, patch_frames: usize, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    assert!(n_frames >= patch_frames);
    (0..count).map(|_| rng.gen_range(0..=n_frames - patch_frames)).collect()
}

/// One epoch of patches: files visited in shuffled order, `per_file` random windows each.
/// Files shorter than a patch are skipped with a warning.
pub fn sample_patches(frames: &[usize], patch_frames: usize, per_file: usize, rng: &mut impl Rng) -> Vec<PatchRef> {
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.shuffle(rng);
    let mut out = Vec::with_capacity(frames.len() * per_file);
    for file in order {
        if frames[file] < patch_frames {
            log::warn!("file {file} has {} frames, fewer than one {patch_frames}-frame patch; skipped", frames[file]);
            continue;
        }
        for offset in patch_offsets(frames[file], patch_frames, per_file, rng) {
            out.push(PatchRef { file, offset });
        }
    }
    out
}

/// Stacks patches into network inputs and a `[N × 1 × F × T]` target.
pub fn assemble_batch(
    model: &SalienceModel,
    examples: &[TrainExample],
    patches: &[PatchRef],
    patch_frames: usize,
) -> Result<(ModelInput, Tensor)> {
    let first = &examples[patches[0].file].features;
    let (h, f) = (first.n_harmonics(), first.n_bins());
    let n = patches.len();
    let mut input = ModelInput {
        magnitude: Tensor::zeros([n, h, f, patch_frames]),
        phase: None,
    };
    let mut target = Tensor::zeros([n, 1, f, patch_frames]);
    for (i, p) in patches.iter().enumerate() {
        let ex = &examples[p.file];
        model.fill_input(&mut input, i, &ex.features, p.offset)?;
        let window = ex.target.slice(ndarray::s![.., p.offset..p.offset + patch_frames]);
        for (d, v) in target.sample_mut(i).iter_mut().zip(window.iter()) {
            *d = *v;
        }
    }
    Ok((input, target))
}
