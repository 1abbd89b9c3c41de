use ndarray::Array2;

use crate::error::{Error, Result};

/// Predictions are clipped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

fn clip(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

/// Mean binary cross-entropy between targets and predicted probabilities.
pub fn bce_loss_slice<T: Copy + Into<f64>>(target: &[T], pred: &[T]) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::Shape(format!("{} targets vs {} predictions", target.len(), pred.len())));
    }
    if target.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = target
        .iter()
        .zip(pred)
        .map(|(&y, &p)| {
            let (y, p) = (y.into(), clip(p.into()));
            -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(sum / target.len() as f64)
}

/// Derivative of [`bce_loss_slice`] with respect to each prediction; zero where clipped.
pub fn bce_grad_slice<T: Copy + Into<f64>>(target: &[T], pred: &[T]) -> Result<Vec<f64>> {
    if target.len() != pred.len() {
        return Err(Error::Shape(format!("{} targets vs {} predictions", target.len(), pred.len())));
    }
    let m = target.len() as f64;
    Ok(target
        .iter()
        .zip(pred)
        .map(|(&y, &p)| {
            let (y, p) = (y.into(), p.into());
            if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                0.0
            } else {
                (-y / p + (1.0 - y) / (1.0 - p)) / m
            }
        })
        .collect())
}

/// Mean binary cross-entropy between a target map and a salience map of the same shape.
pub fn bce_loss(target: &Array2<f32>, pred: &Array2<f32>) -> Result<f64> {
    if target.dim() != pred.dim() {
        return Err(Error::Shape(format!("target {:?} vs prediction {:?}", target.dim(), pred.dim())));
    }
    let t: Vec<f32> = target.iter().copied().collect();
    let p: Vec<f32> = pred.iter().copied().collect();
    bce_loss_slice(&t, &p)
}

/// Loss and its gradient with respect to the logits of a sigmoid output.
pub(crate) fn bce_with_sigmoid_grad(target: &[f32], pred: &[f32]) -> (f64, Vec<f32>) {
    let m = target.len() as f64;
    let mut loss = 0f64;
    let grad = target
        .iter()
        .zip(pred)
        .map(|(&y, &p)| {
            let (yd, pd) = (y as f64, p as f64);
            let pc = clip(pd);
            loss += -yd * pc.ln() - (1.0 - yd) * (1.0 - pc).ln();
            if pd <= BCE_EPS || pd >= 1.0 - BCE_EPS {
                0.0
            } else {
                ((pd - yd) / m) as f32
            }
        })
        .collect();
    (loss / m, grad)
}
