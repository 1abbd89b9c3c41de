//! Rasterizing multi-F0 annotations into blurred salience targets.

use ndarray::Array2;

use crate::annotation::MultiF0Annotation;
use crate::decoder::{threshold_decode, DecoderConfig};
use crate::grid::HcqtParams;

/// Gaussian blur width along frequency, in bins.
pub const BLUR_SIGMA_BINS: f64 = 1.0;
/// Blur support either side of the annotated bin; stays inside half a semitone.
pub const BLUR_RADIUS_BINS: usize = 2;

/// `[bins × frames]` training target with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SalienceTarget {
    pub grid: Array2<f32>,
    pub params_hash: String,
    /// Annotated values that fell outside the analysis range and were skipped.
    pub skipped: usize,
}

/// Kernel values for distances `0..=BLUR_RADIUS_BINS`, peak equal to 1.
pub fn blur_kernel() -> [f32; BLUR_RADIUS_BINS + 1] {
    let mut k = [0.0f32; BLUR_RADIUS_BINS + 1];
    for (d, v) in k.iter_mut().enumerate() {
        let x = d as f64 / BLUR_SIGMA_BINS;
        *v = (-0.5 * x * x).exp() as f32;
    }
    k
}

/// Each F0 lights its nearest bin at 1.0 with a frequency-only Gaussian around it; overlapping
/// activations combine by maximum. Out-of-range values are counted in `skipped`.
pub fn annotation_to_target(ann: &MultiF0Annotation, params: &HcqtParams) -> SalienceTarget {
    let n_bins = params.n_bins();
    let kernel = blur_kernel();
    let mut grid = Array2::<f32>::zeros((n_bins, ann.len()));
    let mut skipped = 0;
    for (t, set) in ann.f0_sets.iter().enumerate() {
        for &f in set {
            let Ok(center) = params.freq_to_bin(f) else {
                skipped += 1;
                continue;
            };
            let lo = center.saturating_sub(BLUR_RADIUS_BINS);
            let hi = (center + BLUR_RADIUS_BINS).min(n_bins - 1);
            for b in lo..=hi {
                let v = kernel[b.abs_diff(center)];
                let cell = &mut grid[[b, t]];
                *cell = cell.max(v);
            }
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} annotated F0 values outside the analysis range were skipped");
    }
    SalienceTarget {
        grid,
        params_hash: params.params_hash(),
        skipped,
    }
}

/// Decodes a target back to frame-wise F0 sets with the production decoder.
pub fn target_to_annotation(
    target: &SalienceTarget,
    params: &HcqtParams,
    threshold: f32,
) -> MultiF0Annotation {
    threshold_decode(&target.grid, params, &DecoderConfig { threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(f: f64) -> MultiF0Annotation {
        MultiF0Annotation::new(vec![0.0], vec![vec![f]]).unwrap()
    }

    #[test]
    fn single_f0_column() {
        let params = HcqtParams::default();
        let t = annotation_to_target(&single(440.0), &params);
        let col = t.grid.column(0);
        assert_eq!(col[225], 1.0);
        assert!((col[224] - 0.6065307).abs() < 1e-6);
        assert!((col[226] - 0.6065307).abs() < 1e-6);
        assert!((col[223] - 0.1353353).abs() < 1e-6);
        assert!((col[227] - 0.1353353).abs() < 1e-6);
        assert_eq!(col.iter().filter(|&&v| v > 0.0).count(), 5);
    }

    #[test]
    fn empty_annotation_gives_zero_target() {
        let params = HcqtParams::default();
        let ann = MultiF0Annotation::empty(params.frame_times(10));
        let t = annotation_to_target(&ann, &params);
        assert!(t.grid.iter().all(|&v| v == 0.0));
        assert_eq!(t.grid.dim(), (360, 10));
    }

    #[test]
    fn adjacent_f0s_combine_by_max() {
        let params = HcqtParams::default();
        let ann = MultiF0Annotation::new(
            vec![0.0],
            vec![vec![params.bin_to_freq(100), params.bin_to_freq(101)]],
        )
        .unwrap();
        let t = annotation_to_target(&ann, &params);
        assert_eq!(t.grid[[100, 0]], 1.0);
        assert_eq!(t.grid[[101, 0]], 1.0);
        assert!(t.grid.iter().all(|&v| v <= 1.0));
    }

    #[test]
    fn out_of_range_values_are_counted() {
        let params = HcqtParams::default();
        let ann = MultiF0Annotation::new(vec![0.0], vec![vec![10.0, 5000.0, 220.0]]).unwrap();
        let t = annotation_to_target(&ann, &params);
        assert_eq!(t.skipped, 2);
        assert_eq!(t.grid.iter().filter(|&&v| v == 1.0).count(), 1);
    }

    #[test]
    fn edge_bins_are_clipped() {
        let params = HcqtParams::default();
        let t = annotation_to_target(&single(params.bin_to_freq(0)), &params);
        assert_eq!(t.grid[[0, 0]], 1.0);
        assert_eq!(t.grid.iter().filter(|&&v| v > 0.0).count(), 3);
    }

    #[test]
    fn decode_examples() {
        let params = HcqtParams::default();
        let zero = SalienceTarget {
            grid: Array2::zeros((360, 4)),
            params_hash: params.params_hash(),
            skipped: 0,
        };
        assert_eq!(target_to_annotation(&zero, &params, 0.5).total_f0s(), 0);
        let t = annotation_to_target(&single(300.0), &params);
        let ann = target_to_annotation(&t, &params, 0.99);
        assert_eq!(ann.f0_sets[0].len(), 1);
    }
}
