//! Frame-wise multiple-F0 scores: precision, recall, F-score and accuracy with one-to-one
//! matching inside a pitch tolerance.

use serde::{Deserialize, Serialize};

use crate::annotation::{nearest_index, MultiF0Annotation};
use crate::error::{Error, Result};
use crate::grid::cents;

/// Allowed deviation between two frame time axes before they count as different grids.
const GRID_TIME_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub accuracy: f64,
    pub tolerance_cents: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl EvalScores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tolerance_cents: f64) -> Self {
        let n_est = tp + fp;
        let n_ref = tp + fn_;
        let precision = if n_est > 0 {
            tp as f64 / n_est as f64
        } else if n_ref == 0 {
            1.0
        } else {
            0.0
        };
        let recall = if n_ref > 0 {
            tp as f64 / n_ref as f64
        } else if n_est == 0 {
            1.0
        } else {
            0.0
        };
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let denom = tp + fp + fn_;
        let accuracy = if denom > 0 { tp as f64 / denom as f64 } else { 1.0 };
        Self {
            precision,
            recall,
            f_score,
            accuracy,
            tolerance_cents,
            tp,
            fp,
            fn_,
        }
    }
}

/// Maximum number of one-to-one pairs with `|cents(est, ref)| <= tolerance`.
pub fn match_count(reference: &[f64], estimate: &[f64], tolerance_cents: f64) -> usize {
    let adj: Vec<Vec<usize>> = reference
        .iter()
        .map(|&r| {
            estimate
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0.0 && r > 0.0 && cents(e, r).abs() <= tolerance_cents)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; estimate.len()];
    let mut matched = 0;
    for r in 0..reference.len() {
        let mut seen = vec![false; estimate.len()];
        if augment(r, &adj, &mut owner, &mut seen) {
            matched += 1;
        }
    }
    matched
}

fn augment(r: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &e in &adj[r] {
        if seen[e] {
            continue;
        }
        seen[e] = true;
        if owner[e].map_or(true, |other| augment(other, adj, owner, seen)) {
            owner[e] = Some(r);
            return true;
        }
    }
    false
}

/// Scores `estimate` against `reference`; both must share the same frame grid.
pub fn frame_scores(
    reference: &MultiF0Annotation,
    estimate: &MultiF0Annotation,
    tolerance_cents: f64,
) -> Result<EvalScores> {
    if reference.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "reference has {} frames, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if let Some(t) = reference
        .frame_times
        .iter()
        .zip(&estimate.frame_times)
        .position(|(a, b)| (a - b).abs() > GRID_TIME_TOLERANCE)
    {
        return Err(Error::Shape(format!("frame {t}: time grids differ")));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (r, e) in reference.f0_sets.iter().zip(&estimate.f0_sets) {
        let m = match_count(r, e, tolerance_cents);
        tp += m;
        fp += e.len() - m;
        fn_ += r.len() - m;
    }
    Ok(EvalScores::from_counts(tp, fp, fn_, tolerance_cents))
}

/// Moves an annotation onto a uniform time grid: each grid frame copies the nearest source
/// frame within half a grid step, otherwise it is empty.
pub fn align_to_grid(ann: &MultiF0Annotation, grid_times: &[f64]) -> Result<MultiF0Annotation> {
    let step = match grid_times {
        [a, b, ..] => b - a,
        _ => f64::INFINITY,
    };
    if grid_times.len() > 2 {
        let uniform = grid_times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-3 * step.abs());
        if !uniform || step <= 0.0 {
            return Err(Error::NonUniformGrid);
        }
    }
    let half = 0.5 * step + 1e-9;
    let f0_sets = grid_times
        .iter()
        .map(|&t| match nearest_index(&ann.frame_times, t) {
            Some(i) if (ann.frame_times[i] - t).abs() <= half => ann.f0_sets[i].clone(),
            _ => Vec::new(),
        })
        .collect();
    Ok(MultiF0Annotation {
        frame_times: grid_times.to_vec(),
        f0_sets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics (divisor `n`).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub files: usize,
    pub tolerance_cents: f64,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f_score: MeanStd,
    pub accuracy: MeanStd,
}

/// Unweighted mean and standard deviation of each metric over files.
pub fn aggregate(per_file: &[EvalScores]) -> Result<ScoreSummary> {
    if per_file.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let col = |f: fn(&EvalScores) -> f64| MeanStd::of(&per_file.iter().map(f).collect::<Vec<_>>());
    Ok(ScoreSummary {
        files: per_file.len(),
        tolerance_cents: per_file[0].tolerance_cents,
        precision: col(|s| s.precision),
        recall: col(|s| s.recall),
        f_score: col(|s| s.f_score),
        accuracy: col(|s| s.accuracy),
    })
}

pub(crate) fn mean_accuracy(scores: &[EvalScores]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().map(|s| s.accuracy).sum::<f64>() / scores.len() as f64
}
