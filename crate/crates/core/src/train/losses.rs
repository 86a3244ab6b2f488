//! Loss functions on plain values. The training graph computes the same
//! quantities with autograd; these are the reference definitions.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn batch_norms(a: &[&[f64]], b: &[&[f64]]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions for {} targets", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x.len() != y.len() {
                return Err(Error::DimensionMismatch(format!("length {} != {}", x.len(), y.len())));
            }
            Ok(l2(x, y))
        })
        .collect()
}

/// Mean over the batch of the L2 norm of each flattened pose error.
pub fn loss_reconstruction(pred: &[Matrix], target: &[Matrix]) -> Result<f64> {
    for (p, t) in pred.iter().zip(target) {
        if p.shape() != t.shape() {
            return Err(Error::DimensionMismatch(format!("pred {:?} vs target {:?}", p.shape(), t.shape())));
        }
    }
    let a: Vec<&[f64]> = pred.iter().map(Matrix::as_slice).collect();
    let b: Vec<&[f64]> = target.iter().map(Matrix::as_slice).collect();
    let n = batch_norms(&a, &b)?;
    Ok(n.iter().sum::<f64>() / n.len() as f64)
}

/// Per-sample style prediction errors `‖h_style − ĥ_style‖`.
pub fn style_errors(h_true: &[Vec<f64>], h_pred: &[Vec<f64>]) -> Result<Vec<f64>> {
    let a: Vec<&[f64]> = h_true.iter().map(Vec::as_slice).collect();
    let b: Vec<&[f64]> = h_pred.iter().map(Vec::as_slice).collect();
    batch_norms(&a, &b)
}

/// Mean style prediction error.
pub fn loss_discriminator(h_true: &[Vec<f64>], h_pred: &[Vec<f64>]) -> Result<f64> {
    let e = style_errors(h_true, h_pred)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// `e_i / (max_j e_j + eps)`.
pub fn normalize_style_error(errors: &[f64], eps: f64) -> Vec<f64> {
    let max = errors.iter().cloned().fold(0.0, f64::max);
    errors.iter().map(|e| e / (max + eps)).collect()
}

/// Adversarial loss `mean (1 − ẽ_i)²` and its derivative with respect to each raw error.
///
/// The derivative includes the dependence of the normalizer on the largest error.
pub fn adversarial_from_errors(errors: &[f64], eps: f64) -> (f64, Vec<f64>) {
    let b = errors.len() as f64;
    if errors.is_empty() {
        return (0.0, Vec::new());
    }
    let (arg, max) = errors
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(ai, am), (i, &e)| if e > am { (i, e) } else { (ai, am) });
    let z = max + eps;
    let u: Vec<f64> = errors.iter().map(|e| e / z).collect();
    let loss = u.iter().map(|v| (1.0 - v) * (1.0 - v)).sum::<f64>() / b;
    let mut grad: Vec<f64> = u.iter().map(|v| -2.0 * (1.0 - v) / (z * b)).collect();
    let through_max: f64 = u.iter().zip(errors).map(|(v, e)| 2.0 * (1.0 - v) * e / (z * z * b)).sum();
    grad[arg] += through_max;
    (loss, grad)
}

pub fn loss_adversarial(h_true: &[Vec<f64>], h_pred: &[Vec<f64>], eps: f64) -> Result<f64> {
    Ok(adversarial_from_errors(&style_errors(h_true, h_pred)?, eps).0)
}

pub fn loss_total(l_rec: f64, l_adv: f64, lambda: f64) -> f64 {
    l_rec + lambda * l_adv
}
