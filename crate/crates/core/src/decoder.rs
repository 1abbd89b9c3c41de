//! Peak picking and thresholding of salience maps into frame-wise F0 sets.

use ndarray::{Array2, ArrayView1};

use crate::annotation::MultiF0Annotation;
use crate::grid::HcqtParams;
use crate::metrics::{frame_scores, mean_accuracy};

/// Tolerance used when scoring candidate thresholds.
pub const THRESHOLD_SEARCH_TOLERANCE_CENTS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub threshold: f32,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

/// Strict local maxima along frequency. A plateau of equal values counts once, at its
/// lower-median bin, when it is strictly above every neighbour it has; a plateau covering the
/// whole column has no neighbours and is not a peak.
pub fn pick_peaks(column: ArrayView1<'_, f32>) -> Vec<usize> {
    let n = column.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let v = column[i];
        let mut j = i;
        while j + 1 < n && column[j + 1] == v {
            j += 1;
        }
        let left = (i > 0).then(|| column[i - 1]);
        let right = (j + 1 < n).then(|| column[j + 1]);
        let is_peak = (left.is_some() || right.is_some())
            && left.map_or(true, |l| v > l)
            && right.map_or(true, |r| v > r);
        if is_peak {
            peaks.push((i + j) / 2);
        }
        i = j + 1;
    }
    peaks
}

/// Keeps peaks whose salience is at least the threshold and reports their bin-center
/// frequencies.
pub fn threshold_decode(salience: &Array2<f32>, params: &HcqtParams, cfg: &DecoderConfig) -> MultiF0Annotation {
    let n_frames = salience.ncols();
    let f0_sets = (0..n_frames)
        .map(|t| {
            let col = salience.column(t);
            pick_peaks(col)
                .into_iter()
                .filter(|&b| col[b] >= cfg.threshold)
                .map(|b| params.bin_to_freq(b))
                .collect()
        })
        .collect();
    MultiF0Annotation {
        frame_times: params.frame_times(n_frames),
        f0_sets,
    }
}

/// Candidate thresholds 0.01, 0.02, …, 0.99.
pub fn threshold_grid() -> Vec<f32> {
    (1..=99).map(|i| i as f32 / 100.0).collect()
}

/// Grid-searches the threshold maximizing the unweighted mean accuracy over
/// `(salience, reference)` pairs; ties go to the larger threshold.
pub fn optimize_threshold(pairs: &[(Array2<f32>, MultiF0Annotation)], params: &HcqtParams) -> f32 {
    let mut best = (f64::NEG_INFINITY, threshold_grid()[0]);
    for threshold in threshold_grid() {
        let cfg = DecoderConfig { threshold };
        let scores: Vec<_> = pairs
            .iter()
            .map(|(sal, reference)| {
                let est = threshold_decode(sal, params, &cfg);
                frame_scores(reference, &est, THRESHOLD_SEARCH_TOLERANCE_CENTS)
                    .expect("salience and reference share the frame grid")
            })
            .collect();
        let acc = mean_accuracy(&scores);
        if acc >= best.0 {
            best = (acc, threshold);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::annotation_to_target;
    use ndarray::{arr1, Array2};

    #[test]
    fn peaks_basic() {
        assert_eq!(pick_peaks(arr1(&[0.0, 1.0, 0.0]).view()), vec![1]);
        assert_eq!(pick_peaks(arr1(&[1.0, 0.5, 0.7]).view()), vec![0, 2]);
        assert!(pick_peaks(arr1(&[0.3; 6]).view()).is_empty());
        assert!(pick_peaks(arr1(&[0.0f32; 0]).view()).is_empty());
        assert!(pick_peaks(arr1(&[0.4]).view()).is_empty());
    }

    #[test]
    fn plateau_lower_median() {
        assert_eq!(pick_peaks(arr1(&[0.0, 1.0, 1.0, 0.0]).view()), vec![1]);
        assert_eq!(pick_peaks(arr1(&[0.0, 1.0, 1.0, 1.0, 0.0]).view()), vec![2]);
        assert_eq!(pick_peaks(arr1(&[1.0, 1.0, 0.0]).view()), vec![0]);
        assert!(pick_peaks(arr1(&[0.0, 1.0, 1.0, 2.0]).view()) == vec![3]);
    }

    #[test]
    fn blurred_targets_have_one_peak_per_f0() {
        let params = HcqtParams::default();
        let f = params.bin_to_freq(100);
        let ann = MultiF0Annotation::new(vec![0.0], vec![vec![f]]).unwrap();
        let t = annotation_to_target(&ann, &params);
        assert_eq!(pick_peaks(t.grid.column(0)), vec![100]);

        let two = MultiF0Annotation::new(
            vec![0.0],
            vec![vec![params.bin_to_freq(100), params.bin_to_freq(105)]],
        )
        .unwrap();
        let t = annotation_to_target(&two, &params);
        assert_eq!(pick_peaks(t.grid.column(0)), vec![100, 105]);
    }

    #[test]
    fn decode_examples() {
        let params = HcqtParams::default();
        let zeros = Array2::<f32>::zeros((360, 5));
        assert_eq!(threshold_decode(&zeros, &params, &DecoderConfig::default()).total_f0s(), 0);
        let flat = Array2::<f32>::from_elem((360, 5), 0.1);
        assert_eq!(threshold_decode(&flat, &params, &DecoderConfig { threshold: 0.2 }).total_f0s(), 0);
    }

    #[test]
    fn empty_predictions_choose_top_threshold() {
        let params = HcqtParams::default();
        let reference = MultiF0Annotation::new(params.frame_times(3), vec![vec![220.0]; 3]).unwrap();
        let pairs = vec![(Array2::<f32>::zeros((360, 3)), reference)];
        assert_eq!(optimize_threshold(&pairs, &params), 0.99);
    }
}
