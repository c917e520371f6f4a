//! Loss primitives with their gradients with respect to the predictions.
//!
//! Sequence losses take row-aligned matrices (one row per slot) plus a mask;
//! they average over masked-in rows only and never read masked-out rows.

use super::{NeuralError, Tensor};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_CLAMP {
        (PROB_CLAMP, false)
    } else if p > 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, false)
    } else {
        (p, true)
    }
}

/// A scalar loss with the gradient with respect to its prediction input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWithGrad {
    pub value: f64,
    pub grad: Tensor,
}

/// Mean binary cross-entropy over the batch.
pub fn loss_bce(y_true: &[f64], y_pred: &[f64]) -> Result<f64, NeuralError> {
    bce_with_grad(y_true, y_pred).map(|l| l.value)
}

pub fn bce_with_grad(y_true: &[f64], y_pred: &[f64]) -> Result<LossWithGrad, NeuralError> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(NeuralError::Shape(format!(
            "bce: {} labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let n = y_true.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(y_true.len());
    for (&y, &p) in y_true.iter().zip(y_pred) {
        let (pc, live) = clamp_prob(p);
        total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        grad.push(if live {
            -(y / pc - (1.0 - y) / (1.0 - pc)) / n
        } else {
            0.0
        });
    }
    Ok(LossWithGrad {
        value: total / n,
        grad: Tensor::from_vec(&[y_true.len()], grad)?,
    })
}

fn check_rows(a: &Tensor, b: &Tensor, mask: &[f64], what: &str) -> Result<(), NeuralError> {
    if a.shape() != b.shape() || a.rows() != mask.len() {
        return Err(NeuralError::Shape(format!(
            "{what}: truth {:?}, prediction {:?}, mask {}",
            a.shape(),
            b.shape(),
            mask.len()
        )));
    }
    Ok(())
}

/// Masked mean over real slots of `-sum_k true_k ln pred_k`.
pub fn loss_sce(truth: &Tensor, pred: &Tensor, mask: &[f64]) -> Result<f64, NeuralError> {
    sce_with_grad(truth, pred, mask).map(|l| l.value)
}

pub fn sce_with_grad(truth: &Tensor, pred: &Tensor, mask: &[f64]) -> Result<LossWithGrad, NeuralError> {
    check_rows(truth, pred, mask, "sce")?;
    let k = truth.cols();
    let count: f64 = mask.iter().sum();
    let mut grad = Tensor::zeros(pred.shape());
    if count == 0.0 {
        return Ok(LossWithGrad { value: 0.0, grad });
    }
    let mut total = 0.0;
    for (r, &m) in mask.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let t = truth.row(r);
        let p = pred.row(r);
        let g = &mut grad.data_mut()[r * k..(r + 1) * k];
        for j in 0..k {
            if t[j] == 0.0 {
                continue;
            }
            let (pc, live) = clamp_prob(p[j]);
            total -= m * t[j] * pc.ln();
            if live {
                g[j] = -m * t[j] / pc / count;
            }
        }
    }
    Ok(LossWithGrad {
        value: total / count,
        grad,
    })
}

/// Masked mean over real slots of the squared Euclidean error.
pub fn loss_l2_spatial(truth: &Tensor, pred: &Tensor, mask: &[f64]) -> Result<f64, NeuralError> {
    l2_with_grad(truth, pred, mask).map(|l| l.value)
}

pub fn l2_with_grad(truth: &Tensor, pred: &Tensor, mask: &[f64]) -> Result<LossWithGrad, NeuralError> {
    check_rows(truth, pred, mask, "l2")?;
    let k = truth.cols();
    let count: f64 = mask.iter().sum();
    let mut grad = Tensor::zeros(pred.shape());
    if count == 0.0 {
        return Ok(LossWithGrad { value: 0.0, grad });
    }
    let mut total = 0.0;
    for (r, &m) in mask.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let t = truth.row(r);
        let p = pred.row(r);
        let g = &mut grad.data_mut()[r * k..(r + 1) * k];
        for j in 0..k {
            let d = p[j] - t[j];
            total += m * d * d;
            g[j] = 2.0 * m * d / count;
        }
    }
    Ok(LossWithGrad {
        value: total / count,
        grad,
    })
}
