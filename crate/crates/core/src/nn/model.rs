use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batchnorm::{BatchNorm, BnGrad, BnStats};
use super::conv::{Conv2d, ConvGrad};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::grid::HcqtParams;
use crate::hcqt::HcqtFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    EarlyShallow,
    EarlyDeep,
    LateDeep,
    LateDeepNoPhase,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::EarlyShallow,
        Architecture::EarlyDeep,
        Architecture::LateDeep,
        Architecture::LateDeepNoPhase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::EarlyShallow => "early_shallow",
            Architecture::EarlyDeep => "early_deep",
            Architecture::LateDeep => "late_deep",
            Architecture::LateDeepNoPhase => "late_deep_no_phase",
        }
    }

    pub fn uses_phase(self) -> bool {
        self != Architecture::LateDeepNoPhase
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '/'], "_");
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown architecture '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Batch normalization, convolution, activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub bn: BatchNorm,
    pub conv: Conv2d,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrad {
    pub conv: ConvGrad,
    pub bn: BnGrad,
}

impl Block {
    fn new(name: String, cin: usize, cout: usize, kh: usize, kw: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        Self {
            name,
            bn: BatchNorm::new(cin),
            conv: Conv2d::new(cin, cout, kh, kw, rng),
            activation,
        }
    }

    fn activate(&self, z: &mut Tensor) {
        match self.activation {
            Activation::Relu => z.data.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.data.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
        }
    }

    fn forward_eval(&self, x: &Tensor) -> Tensor {
        let mut z = self.conv.forward(&self.bn.forward_eval(x));
        self.activate(&mut z);
        z
    }

    fn forward_train(&mut self, x: &Tensor) -> (Tensor, BnStats) {
        let (y, stats) = self.bn.forward_train(x);
        let mut z = self.conv.forward(&y);
        self.activate(&mut z);
        (z, stats)
    }

    /// `dz` is the gradient with respect to the pre-activation output.
    fn backward(&self, x: &Tensor, stats: &BnStats, dz: &Tensor, grad: &mut BlockGrad) -> Tensor {
        let y = self.bn.normalize_with(x, stats);
        let dy = self.conv.backward(&y, dz, &mut grad.conv, true).expect("input gradient requested");
        self.bn.backward(x, stats, &dy, &mut grad.bn)
    }

    fn zero_grad(&self) -> BlockGrad {
        BlockGrad {
            conv: self.conv.zero_grad(),
            bn: self.bn.zero_grad(),
        }
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec {
            name: self.name.clone(),
            filters: self.conv.cout,
            kernel: [self.conv.kh, self.conv.kw],
            in_channels: self.conv.cin,
        }
    }
}

/// One row of a model's layer listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub filters: usize,
    /// `[freq, time]`
    pub kernel: [usize; 2],
    pub in_channels: usize,
}

/// Per-harmonic standardization of the phase-differential input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl PhaseNorm {
    pub fn identity(harmonics: usize) -> Self {
        Self {
            mean: vec![0.0; harmonics],
            std: vec![1.0; harmonics],
        }
    }

    /// Pools every frame and bin of each harmonic over all arrays.
    pub fn fit<'a>(phases: impl IntoIterator<Item = &'a Array3<f32>>) -> Self {
        let mut acc: Vec<(f64, f64, f64)> = Vec::new();
        for p in phases {
            if acc.is_empty() {
                acc = vec![(0.0, 0.0, 0.0); p.dim().0];
            }
            for (h, plane) in p.outer_iter().enumerate() {
                for &v in plane.iter() {
                    acc[h].0 += 1.0;
                    acc[h].1 += v as f64;
                    acc[h].2 += (v as f64) * (v as f64);
                }
            }
        }
        let mean: Vec<f32> = acc.iter().map(|&(n, s, _)| if n > 0.0 { (s / n) as f32 } else { 0.0 }).collect();
        let std = acc
            .iter()
            .map(|&(n, s, ss)| {
                if n == 0.0 {
                    return 1.0;
                }
                let m = s / n;
                let sd = (ss / n - m * m).max(0.0).sqrt();
                if sd > 1e-6 {
                    sd as f32
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub blocks: Vec<Block>,
}

/// Network inputs for a batch: magnitude and, for phase-aware models, phase differentials,
/// each `[N × H × F × T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub magnitude: Tensor,
    pub phase: Option<Tensor>,
}

/// A salience network together with everything needed to run it on new audio.
#[derive(Debug, Clone, PartialEq)]
pub struct SalienceModel {
    pub architecture: Architecture,
    pub params: HcqtParams,
    pub branches: Vec<Branch>,
    pub trunk: Vec<Block>,
    pub phase_norm: Option<PhaseNorm>,
    /// Decoding threshold chosen on validation data.
    pub threshold: Option<f32>,
    pub training_fingerprint: Option<String>,
}

/// Gradients for every block in [`SalienceModel::blocks`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub blocks: Vec<BlockGrad>,
}

impl ModelGrads {
    pub fn tensors(&self) -> Vec<&[f32]> {
        self.blocks
            .iter()
            .flat_map(|g| [&g.conv.weight[..], &g.conv.bias[..], &g.bn.gamma[..], &g.bn.beta[..]])
            .collect()
    }
}

/// Activations and statistics from a training forward pass.
pub struct Trace {
    /// Per branch: the block inputs followed by the final branch output.
    branch_acts: Vec<Vec<Tensor>>,
    branch_stats: Vec<Vec<BnStats>>,
    /// Trunk inputs (the first is the concatenation) followed by the network output.
    trunk_acts: Vec<Tensor>,
    trunk_stats: Vec<BnStats>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.trunk_acts.last().expect("trunk is never empty")
    }
}

type LayerPlan = Vec<(usize, usize, usize)>;

fn plan(arch: Architecture, n_bins: usize) -> (Vec<(&'static str, LayerPlan)>, LayerPlan) {
    let front = (16, 5, 5);
    let wide = (32, 70, 3);
    let deep = [(64, 3, 3), (64, 3, 3)];
    let collapse = (8, n_bins, 1);
    match arch {
        Architecture::EarlyShallow => (
            vec![("magnitude", vec![front]), ("phase", vec![front])],
            vec![wide, wide, collapse],
        ),
        Architecture::EarlyDeep => (
            vec![("magnitude", vec![front]), ("phase", vec![front])],
            vec![wide, wide, deep[0], deep[1], collapse],
        ),
        Architecture::LateDeep => (
            vec![("magnitude", vec![front, wide]), ("phase", vec![front, wide])],
            vec![wide, deep[0], deep[1], collapse],
        ),
        Architecture::LateDeepNoPhase => (vec![("magnitude", vec![front, wide])], vec![wide, deep[0], deep[1], collapse]),
    }
}

/// Builds a freshly initialized network. Every hidden convolution is preceded by batch
/// normalization and followed by a ReLU; a 1×1 single-filter convolution with sigmoid
/// produces the salience map.
pub fn build_model(arch: Architecture, params: &HcqtParams, seed: u64) -> Result<SalienceModel> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = params.n_harmonics();
    let (branch_plan, trunk_plan) = plan(arch, params.n_bins());
    let mut branches = Vec::new();
    let mut concat = 0;
    for (name, layers) in branch_plan {
        let mut cin = h;
        let mut blocks = Vec::new();
        for (i, &(cout, kh, kw)) in layers.iter().enumerate() {
            blocks.push(Block::new(format!("{name}/conv{}", i + 1), cin, cout, kh, kw, Activation::Relu, &mut rng));
            cin = cout;
        }
        concat += cin;
        branches.push(Branch {
            name: name.to_string(),
            blocks,
        });
    }
    let mut cin = concat;
    let mut trunk = Vec::new();
    for (i, &(cout, kh, kw)) in trunk_plan.iter().enumerate() {
        trunk.push(Block::new(format!("trunk/conv{}", i + 1), cin, cout, kh, kw, Activation::Relu, &mut rng));
        cin = cout;
    }
    let mut output = Block::new("output".into(), cin, 1, 1, 1, Activation::Sigmoid, &mut rng);
    // LeCun scaling for the sigmoid output instead of He.
    output.conv.weight.iter_mut().for_each(|w| *w *= std::f32::consts::FRAC_1_SQRT_2);
    trunk.push(output);
    Ok(SalienceModel {
        architecture: arch,
        params: params.clone(),
        branches,
        trunk,
        phase_norm: arch.uses_phase().then(|| PhaseNorm::identity(h)),
        threshold: None,
        training_fingerprint: None,
    })
}

impl SalienceModel {
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.branches.iter().flat_map(|b| b.blocks.iter()).chain(self.trunk.iter())
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Block> {
        self.branches
            .iter_mut()
            .flat_map(|b| b.blocks.iter_mut())
            .chain(self.trunk.iter_mut())
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        self.blocks().map(Block::spec).collect()
    }

    /// Trainable values (convolution weights and biases, normalization scales and shifts).
    pub fn n_params(&self) -> usize {
        self.blocks().map(|b| b.conv.n_params() + 2 * b.bn.channels()).sum()
    }

    /// Trainable tensors, in the same order as [`ModelGrads::tensors`].
    pub fn param_tensors_mut(&mut self) -> Vec<&mut [f32]> {
        self.blocks_mut()
            .flat_map(|b| {
                let Block { bn, conv, .. } = b;
                [&mut conv.weight[..], &mut conv.bias[..], &mut bn.gamma[..], &mut bn.beta[..]]
            })
            .collect()
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            blocks: self.blocks().map(Block::zero_grad).collect(),
        }
    }

    /// Frames of context on each side that influence one output frame.
    pub fn time_radius(&self) -> usize {
        let r = |blocks: &[Block]| blocks.iter().map(|b| (b.conv.kw - 1) / 2).sum::<usize>();
        self.branches.iter().map(|b| r(&b.blocks)).max().unwrap_or(0) + r(&self.trunk)
    }

    fn branch_inputs<'a>(&self, input: &'a ModelInput) -> Result<Vec<&'a Tensor>> {
        let mut out = vec![&input.magnitude];
        if self.branches.len() > 1 {
            out.push(
                input
                    .phase
                    .as_ref()
                    .ok_or_else(|| Error::Shape(format!("{} needs phase-differential input", self.architecture)))?,
            );
        }
        for t in &out {
            if t.channels() != self.params.n_harmonics() || t.freq() != self.params.n_bins() {
                return Err(Error::Shape(format!(
                    "input {:?} does not match {} harmonics × {} bins",
                    t.shape,
                    self.params.n_harmonics(),
                    self.params.n_bins()
                )));
            }
        }
        Ok(out)
    }

    /// Inference-mode forward pass; returns `[N × 1 × F × T]` salience.
    pub fn forward(&self, input: &ModelInput) -> Result<Tensor> {
        let inputs = self.branch_inputs(input)?;
        let outs: Vec<Tensor> = self
            .branches
            .iter()
            .zip(inputs)
            .map(|(br, x)| {
                let mut h = br.blocks[0].forward_eval(x);
                for b in &br.blocks[1..] {
                    h = b.forward_eval(&h);
                }
                h
            })
            .collect();
        let mut h = if outs.len() == 1 {
            outs.into_iter().next().unwrap()
        } else {
            Tensor::concat_channels(&outs.iter().collect::<Vec<_>>())
        };
        for b in &self.trunk {
            h = b.forward_eval(&h);
        }
        Ok(h)
    }

    /// Training-mode forward pass using batch statistics; running statistics are updated.
    pub fn forward_train(&mut self, input: &ModelInput) -> Result<Trace> {
        let inputs: Vec<Tensor> = self.branch_inputs(input)?.into_iter().cloned().collect();
        let mut branch_acts = Vec::new();
        let mut branch_stats = Vec::new();
        for (br, x) in self.branches.iter_mut().zip(inputs) {
            let mut acts = vec![x];
            let mut stats = Vec::new();
            for b in br.blocks.iter_mut() {
                let (a, s) = b.forward_train(acts.last().unwrap());
                acts.push(a);
                stats.push(s);
            }
            branch_acts.push(acts);
            branch_stats.push(stats);
        }
        let outs: Vec<&Tensor> = branch_acts.iter().map(|a| a.last().unwrap()).collect();
        let concat = if outs.len() == 1 {
            outs[0].clone()
        } else {
            Tensor::concat_channels(&outs)
        };
        let mut trunk_acts = vec![concat];
        let mut trunk_stats = Vec::new();
        for b in self.trunk.iter_mut() {
            let (a, s) = b.forward_train(trunk_acts.last().unwrap());
            trunk_acts.push(a);
            trunk_stats.push(s);
        }
        Ok(Trace {
            branch_acts,
            branch_stats,
            trunk_acts,
            trunk_stats,
        })
    }

    /// Backpropagates the gradient with respect to the output logits through a training trace.
    pub fn backward(&self, trace: &Trace, dlogits: &Tensor) -> ModelGrads {
        let mut grads = self.zero_grads();
        let n_branch_blocks: usize = self.branches.iter().map(|b| b.blocks.len()).sum();
        let mut dz = dlogits.clone();
        let mut dx = Tensor::zeros([0, 0, 0, 0]);
        for (i, b) in self.trunk.iter().enumerate().rev() {
            if i + 1 < self.trunk.len() {
                dz = relu_grad(dx, &trace.trunk_acts[i + 1]);
            }
            dx = b.backward(&trace.trunk_acts[i], &trace.trunk_stats[i], &dz, &mut grads.blocks[n_branch_blocks + i]);
        }
        let sizes: Vec<usize> = trace.branch_acts.iter().map(|a| a.last().unwrap().channels()).collect();
        let parts = if sizes.len() == 1 { vec![dx] } else { dx.split_channels(&sizes) };
        let mut offset = 0;
        for ((br, acts), (stats, mut d)) in self
            .branches
            .iter()
            .zip(&trace.branch_acts)
            .zip(trace.branch_stats.iter().zip(parts))
        {
            for (i, b) in br.blocks.iter().enumerate().rev() {
                let dz = relu_grad(d, &acts[i + 1]);
                d = b.backward(&acts[i], &stats[i], &dz, &mut grads.blocks[offset + i]);
            }
            offset += br.blocks.len();
        }
        grads
    }

    /// Builds a single-sample input from `frames` of a feature set, applying phase
    /// normalization.
    pub fn input_from_features(&self, features: &HcqtFeatures, start: usize, len: usize) -> Result<ModelInput> {
        let mut input = ModelInput {
            magnitude: Tensor::zeros([1, features.n_harmonics(), features.n_bins(), len]),
            phase: None,
        };
        self.fill_input(&mut input, 0, features, start)?;
        Ok(input)
    }

    /// Writes frames `start..start + T` of `features` into sample `n` of `input`.
    pub fn fill_input(&self, input: &mut ModelInput, n: usize, features: &HcqtFeatures, start: usize) -> Result<()> {
        input.magnitude.fill_sample_from(n, features.magnitude.view(), start);
        if self.architecture.uses_phase() {
            let phase = features
                .phase_diff
                .as_ref()
                .ok_or_else(|| Error::Shape(format!("{} needs phase-differential features", self.architecture)))?;
            let shape = input.magnitude.shape;
            let t = input.phase.get_or_insert_with(|| Tensor::zeros(shape));
            t.fill_sample_from(n, phase.view(), start);
            if let Some(norm) = &self.phase_norm {
                for h in 0..shape[1] {
                    let (m, sd) = (norm.mean[h], norm.std[h]);
                    t.channel_mut(n, h).iter_mut().for_each(|v| *v = (*v - m) / sd);
                }
            }
        }
        Ok(())
    }

    fn check_features(&self, features: &HcqtFeatures) -> Result<()> {
        if features.n_bins() != self.params.n_bins() || features.n_harmonics() != self.params.n_harmonics() {
            return Err(Error::Shape(format!(
                "features have {} harmonics × {} bins; model expects {} × {}",
                features.n_harmonics(),
                features.n_bins(),
                self.params.n_harmonics(),
                self.params.n_bins()
            )));
        }
        Ok(())
    }

    /// Salience map `[bins × frames]` for a whole recording. Long inputs are processed in
    /// overlapping time chunks wide enough that the result equals a single full-length pass.
    pub fn predict(&self, features: &HcqtFeatures) -> Result<Array2<f32>> {
        const CHUNK: usize = 128;
        self.check_features(features)?;
        let t_total = features.n_frames();
        let f = features.n_bins();
        let mut out = Array2::<f32>::zeros((f, t_total));
        let r = self.time_radius();
        let mut start = 0;
        while start < t_total {
            let end = (start + CHUNK).min(t_total);
            let lo = start.saturating_sub(r);
            let hi = (end + r).min(t_total);
            let input = self.input_from_features(features, lo, hi - lo)?;
            let y = self.forward(&input)?;
            let plane = y.channel(0, 0);
            let width = hi - lo;
            for fi in 0..f {
                let row = &plane[fi * width..(fi + 1) * width];
                out.slice_mut(s![fi, start..end])
                    .iter_mut()
                    .zip(&row[start - lo..end - lo])
                    .for_each(|(o, v)| *o = *v);
            }
            start = end;
        }
        Ok(out)
    }
}

fn relu_grad(mut d: Tensor, act: &Tensor) -> Tensor {
    d.data.iter_mut().zip(&act.data).for_each(|(g, &a)| {
        if a <= 0.0 {
            *g = 0.0
        }
    });
    d
}
