//! Same-padded 2-D convolution over `[channel, freq, time]` maps.
//!
//! The input is unfolded along time only: row `(ci, dt)` of the column buffer holds channel
//! `ci` shifted by `dt` frames, with the frequency axis zero-padded by `kh - 1` rows. Each
//! frequency tap `df` is then one matrix product against a strided view of that buffer that
//! starts `df` frequency rows down.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::kernels::{shifted_gemm, shifted_gemm_nt, PackedA};
use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    /// Kernel extent along frequency.
    pub kh: usize,
    /// Kernel extent along time.
    pub kw: usize,
    /// `[kh][cout][cin][kw]`
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Gradients for one [`Conv2d`], same layouts as its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    /// He-normal weights, zero bias.
    pub fn new(cin: usize, cout: usize, kh: usize, kw: usize, rng: &mut impl Rng) -> Self {
        let fan_in = (cin * kh * kw) as f32;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
        let weight = (0..kh * cout * cin * kw).map(|_| normal.sample(rng)).collect();
        Self {
            cin,
            cout,
            kh,
            kw,
            weight,
            bias: vec![0.0; cout],
        }
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn zero_grad(&self) -> ConvGrad {
        ConvGrad {
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.cout],
        }
    }

    fn pads(&self) -> (usize, usize) {
        ((self.kh - 1) / 2, (self.kw - 1) / 2)
    }

    fn k(&self) -> usize {
        self.cin * self.kw
    }

    /// Time-unfolded, frequency-padded copy of one `[cin, F, T]` sample.
    fn unfold(&self, x: &[f32], f: usize, t: usize) -> Vec<f32> {
        let (pf, pt) = self.pads();
        let fp = f + self.kh - 1;
        let mut col = vec![0f32; self.k() * fp * t];
        for ci in 0..self.cin {
            for dt in 0..self.kw {
                let row = &mut col[(ci * self.kw + dt) * fp * t..][..fp * t];
                // out[t0] reads in[t0 + dt - pt]
                let lo = pt.saturating_sub(dt);
                let hi = (t + pt).saturating_sub(dt).min(t);
                if lo >= hi {
                    continue;
                }
                for fi in 0..f {
                    let src = &x[(ci * f + fi) * t..][..t];
                    let dst = &mut row[(fi + pf) * t..][..t];
                    dst[lo..hi].copy_from_slice(&src[lo + dt - pt..hi + dt - pt]);
                }
            }
        }
        col
    }

    /// Adds a column-buffer gradient back onto the input gradient of one sample. Unlike the
    /// buffer built by `unfold`, `col` carries no frequency padding: rows are `f·t` long.
    fn fold(&self, col: &[f32], dx: &mut [f32], f: usize, t: usize) {
        let (_, pt) = self.pads();
        for ci in 0..self.cin {
            for dt in 0..self.kw {
                let row = &col[(ci * self.kw + dt) * f * t..][..f * t];
                let lo = pt.saturating_sub(dt);
                let hi = (t + pt).saturating_sub(dt).min(t);
                if lo >= hi {
                    continue;
                }
                for fi in 0..f {
                    let src = &row[fi * t..][..t];
                    let dst = &mut dx[(ci * f + fi) * t..][..t];
                    for (d, s) in dst[lo + dt - pt..hi + dt - pt].iter_mut().zip(&src[lo..hi]) {
                        *d += s;
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let [n, c, f, t] = x.shape;
        assert_eq!(c, self.cin, "conv expects {} input channels, got {c}", self.cin);
        let fp = f + self.kh - 1;
        let w = PackedA::new(&self.weight, self.kh, self.cout, self.k());
        let mut out = Tensor::zeros([n, self.cout, f, t]);
        for b in 0..n {
            let col = self.unfold(x.sample(b), f, t);
            let y = out.sample_mut(b);
            for (co, plane) in y.chunks_mut(f * t).enumerate() {
                plane.fill(self.bias[co]);
            }
            shifted_gemm(&w, f * t, &col, fp * t, t, y, f * t);
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient when asked.
    pub fn backward(&self, x: &Tensor, dout: &Tensor, grad: &mut ConvGrad, need_dx: bool) -> Option<Tensor> {
        let [n, _, f, t] = x.shape;
        let k = self.k();
        let fp = f + self.kh - 1;
        let (pf, _) = self.pads();
        let mut dx = need_dx.then(|| Tensor::zeros(x.shape));
        // Input gradient as a forward pass of the output gradient through the flipped,
        // transposed kernel; `dy` is padded so every tap reads inside the buffer.
        let wt = need_dx.then(|| PackedA::transposed_reversed(&self.weight, self.kh, self.cout, k));
        let pad = (self.kh - 1) * t;
        let ldp = f * t + 2 * pad;
        let mut dyp = if need_dx { vec![0f32; self.cout * ldp] } else { Vec::new() };
        for b in 0..n {
            let dy = dout.sample(b);
            for (co, plane) in dy.chunks(f * t).enumerate() {
                grad.bias[co] += plane.iter().sum::<f32>();
            }
            let col = self.unfold(x.sample(b), f, t);
            shifted_gemm_nt(self.cout, k, self.kh, f * t, dy, f * t, &col, fp * t, t, &mut grad.weight);
            drop(col);
            if let (Some(dx), Some(wt)) = (dx.as_mut(), wt.as_ref()) {
                for (co, plane) in dy.chunks(f * t).enumerate() {
                    dyp[co * ldp + pad..][..f * t].copy_from_slice(plane);
                }
                let mut dcol = vec![0f32; k * f * t];
                shifted_gemm(wt, f * t, &dyp[pf * t..], ldp, t, &mut dcol, f * t);
                self.fold(&dcol, dx.sample_mut(b), f, t);
            }
        }
        dx
    }
}
