use ndarray::{s, Array3, ArrayView3};

/// Dense `[batch, channel, freq, time]` tensor, time fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: [usize; 4],
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor data does not match shape {shape:?}");
        Self { shape, data }
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn freq(&self) -> usize {
        self.shape[2]
    }

    pub fn time(&self) -> usize {
        self.shape[3]
    }

    /// Elements in one sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    /// Elements in one channel plane.
    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, n: usize) -> &[f32] {
        let l = self.sample_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f32] {
        let l = self.sample_len();
        &mut self.data[n * l..(n + 1) * l]
    }

    pub fn channel(&self, n: usize, c: usize) -> &[f32] {
        let p = self.plane();
        let off = n * self.sample_len() + c * p;
        &self.data[off..off + p]
    }

    pub fn channel_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let p = self.plane();
        let off = n * self.sample_len() + c * p;
        &mut self.data[off..off + p]
    }

    /// Stacks tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
        let [n, _, f, t] = parts[0].shape;
        let c: usize = parts.iter().map(|p| p.channels()).sum();
        let mut out = Tensor::zeros([n, c, f, t]);
        for b in 0..n {
            let mut off = 0;
            let dst = out.sample_mut(b);
            for p in parts {
                assert_eq!((p.batch(), p.freq(), p.time()), (n, f, t));
                let src = p.sample(b);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        out
    }

    /// Inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, sizes: &[usize]) -> Vec<Tensor> {
        assert_eq!(sizes.iter().sum::<usize>(), self.channels());
        let [n, _, f, t] = self.shape;
        let mut out: Vec<Tensor> = sizes.iter().map(|&c| Tensor::zeros([n, c, f, t])).collect();
        for b in 0..n {
            let src = self.sample(b);
            let mut off = 0;
            for part in out.iter_mut() {
                let dst = part.sample_mut(b);
                dst.copy_from_slice(&src[off..off + dst.len()]);
                off += dst.len();
            }
        }
        out
    }

    /// Copies frames `start..start + len` of a `[C × F × T]` array into sample `n`.
    pub fn fill_sample_from(&mut self, n: usize, src: ArrayView3<'_, f32>, start: usize) {
        let [_, c, f, len] = self.shape;
        assert_eq!((src.shape()[0], src.shape()[1]), (c, f));
        let window = src.slice(s![.., .., start..start + len]);
        let dst = self.sample_mut(n);
        for (d, v) in dst.iter_mut().zip(window.iter()) {
            *d = *v;
        }
    }

    /// Single-sample tensor from a `[C × F × T]` array.
    pub fn from_array3(a: &Array3<f32>) -> Tensor {
        let (c, f, t) = a.dim();
        let mut out = Tensor::zeros([1, c, f, t]);
        out.fill_sample_from(0, a.view(), 0);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_split_roundtrip() {
        let a = Tensor::from_vec([2, 1, 2, 2], (0..8).map(|v| v as f32).collect());
        let b = Tensor::from_vec([2, 2, 2, 2], (100..116).map(|v| v as f32).collect());
        let c = Tensor::concat_channels(&[&a, &b]);
        assert_eq!(c.shape, [2, 3, 2, 2]);
        assert_eq!(c.channel(1, 0), a.channel(1, 0));
        assert_eq!(c.channel(1, 2), b.channel(1, 1));
        let back = c.split_channels(&[1, 2]);
        assert_eq!(back[0], a);
        assert_eq!(back[1], b);
    }
}
