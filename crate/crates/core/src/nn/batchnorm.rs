use super::tensor::Tensor;

pub const BN_EPS: f32 = 1e-5;
/// Weight of the newest batch in the running statistics.
pub const BN_MOMENTUM: f32 = 0.1;

/// Per-channel batch normalization over batch, frequency and time.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

/// Batch statistics kept from the training forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrad {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn zero_grad(&self) -> BnGrad {
        BnGrad {
            gamma: vec![0.0; self.channels()],
            beta: vec![0.0; self.channels()],
        }
    }

    /// Per-channel `(scale, shift)` such that `y = scale·x + shift`.
    fn affine(&self, mean: &[f32], inv_std: &[f32]) -> Vec<(f32, f32)> {
        (0..self.channels())
            .map(|c| {
                let s = self.gamma[c] * inv_std[c];
                (s, self.beta[c] - s * mean[c])
            })
            .collect()
    }

    fn apply(&self, x: &Tensor, coef: &[(f32, f32)]) -> Tensor {
        let mut y = x.clone();
        for b in 0..x.batch() {
            for (c, &(s, o)) in coef.iter().enumerate() {
                y.channel_mut(b, c).iter_mut().for_each(|v| *v = s * *v + o);
            }
        }
        y
    }

    /// Batch statistics of `x`, without touching the running averages.
    pub fn batch_stats(&self, x: &Tensor) -> BnStats {
        let c = x.channels();
        assert_eq!(c, self.channels());
        let count = (x.batch() * x.plane()) as f64;
        let mut mean = vec![0f32; c];
        let mut inv_std = vec![0f32; c];
        for ch in 0..c {
            let (mut s, mut ss) = (0f64, 0f64);
            for b in 0..x.batch() {
                let (ps, pss) = x
                    .channel(b, ch)
                    .iter()
                    .fold((0f64, 0f64), |(a, q), &v| (a + v as f64, q + (v as f64) * (v as f64)));
                s += ps;
                ss += pss;
            }
            let m = s / count;
            let var = (ss / count - m * m).max(0.0);
            mean[ch] = m as f32;
            inv_std[ch] = (1.0 / (var + BN_EPS as f64).sqrt()) as f32;
        }
        BnStats { mean, inv_std }
    }

    /// Normalizes with batch statistics and updates the running averages.
    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, BnStats) {
        let stats = self.batch_stats(x);
        let count = (x.batch() * x.plane()) as f32;
        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        for c in 0..self.channels() {
            let var = 1.0 / (stats.inv_std[c] * stats.inv_std[c]) - BN_EPS;
            self.running_mean[c] = (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * stats.mean[c];
            self.running_var[c] = (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * var.max(0.0) * unbias;
        }
        (self.normalize_with(x, &stats), stats)
    }

    /// Output for given statistics (used to recompute the forward result during backprop).
    pub fn normalize_with(&self, x: &Tensor, stats: &BnStats) -> Tensor {
        self.apply(x, &self.affine(&stats.mean, &stats.inv_std))
    }

    /// Inference mode: running statistics.
    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        let inv: Vec<f32> = self.running_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        self.apply(x, &self.affine(&self.running_mean, &inv))
    }

    /// Gradient w.r.t. the input given the gradient w.r.t. the output; parameter gradients are
    /// accumulated into `grad`.
    pub fn backward(&self, x: &Tensor, stats: &BnStats, dy: &Tensor, grad: &mut BnGrad) -> Tensor {
        let count = (x.batch() * x.plane()) as f64;
        let mut dx = Tensor::zeros(x.shape);
        for c in 0..self.channels() {
            let (m, is) = (stats.mean[c], stats.inv_std[c]);
            let (mut sum_dy, mut sum_dy_xhat) = (0f64, 0f64);
            for b in 0..x.batch() {
                for (&xv, &g) in x.channel(b, c).iter().zip(dy.channel(b, c)) {
                    sum_dy += g as f64;
                    sum_dy_xhat += g as f64 * ((xv - m) * is) as f64;
                }
            }
            grad.gamma[c] += sum_dy_xhat as f32;
            grad.beta[c] += sum_dy as f32;
            let k = self.gamma[c] * is;
            let mean_dy = (sum_dy / count) as f32;
            let mean_dy_xhat = (sum_dy_xhat / count) as f32;
            for b in 0..x.batch() {
                let out = dx.channel_mut(b, c);
                for ((o, &xv), &g) in out.iter_mut().zip(x.channel(b, c)).zip(dy.channel(b, c)) {
                    let xhat = (xv - m) * is;
                    *o = k * (g - mean_dy - xhat * mean_dy_xhat);
                }
            }
        }
        dx
    }
}
