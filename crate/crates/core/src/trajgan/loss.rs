use std::str::FromStr;

use super::{BatchGrad, TrajGanError};
use crate::encoding::EncodedBatch;
use crate::neural::{bce_with_grad, l2_with_grad, sce_with_grad, NeuralError, Tensor};

/// Weights of the adversarial, spatial, temporal and categorical terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 10.0,
            gamma: 1.0,
            c: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.alpha, self.beta, self.gamma, self.c];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(format!("loss weights {all:?} must be finite and non-negative"));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err("at least one loss weight must be positive".into());
        }
        Ok(())
    }
}

/// Parses `alpha,beta,gamma,c`.
impl FromStr for LossWeights {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("loss weights `{s}` are not four comma-separated numbers"))?;
        let [alpha, beta, gamma, c] = parts[..] else {
            return Err(format!("expected four loss weights, got {}", parts.len()));
        };
        let w = Self { alpha, beta, gamma, c };
        w.validate()?;
        Ok(w)
    }
}

/// Unweighted terms of the generator loss and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajLossTerms {
    pub bce: f64,
    pub l2: f64,
    pub sce_day: f64,
    pub sce_hour: f64,
    pub sce_cat: f64,
    pub total: f64,
}

fn check_aligned(real: &EncodedBatch, synthetic: &EncodedBatch) -> Result<(), TrajGanError> {
    if real.dev.shape() != synthetic.dev.shape()
        || real.category.shape() != synthetic.category.shape()
        || real.mask != synthetic.mask
    {
        return Err(NeuralError::Shape("real and synthetic batches are not aligned".into()).into());
    }
    Ok(())
}

/// Generator loss: `alpha * BCE(y_r, y_p) + beta * L2 + gamma * (SCE_day +
/// SCE_hour) + c * SCE_cat`, with the sequence terms averaged over real slots.
pub fn traj_loss(
    y_r: &[f64],
    y_p: &[f64],
    real: &EncodedBatch,
    synthetic: &EncodedBatch,
    weights: &LossWeights,
) -> Result<TrajLossTerms, TrajGanError> {
    traj_loss_with_grad(y_r, y_p, real, synthetic, weights).map(|(terms, _, _)| terms)
}

/// [`traj_loss`] plus its gradients with respect to `y_p` and to every
/// block of `synthetic`.
pub fn traj_loss_with_grad(
    y_r: &[f64],
    y_p: &[f64],
    real: &EncodedBatch,
    synthetic: &EncodedBatch,
    w: &LossWeights,
) -> Result<(TrajLossTerms, Vec<f64>, BatchGrad), TrajGanError> {
    check_aligned(real, synthetic)?;
    let mask = &real.mask;
    let bce = bce_with_grad(y_r, y_p)?;
    let l2 = l2_with_grad(&real.dev, &synthetic.dev, mask)?;
    let day = sce_with_grad(&real.day, &synthetic.day, mask)?;
    let hour = sce_with_grad(&real.hour, &synthetic.hour, mask)?;
    let cat = sce_with_grad(&real.category, &synthetic.category, mask)?;
    let terms = TrajLossTerms {
        bce: bce.value,
        l2: l2.value,
        sce_day: day.value,
        sce_hour: hour.value,
        sce_cat: cat.value,
        total: w.alpha * bce.value + w.beta * l2.value + w.gamma * (day.value + hour.value) + w.c * cat.value,
    };
    let scaled = |mut t: Tensor, k: f64| {
        t.data_mut().iter_mut().for_each(|g| *g *= k);
        t
    };
    let d_y_p = bce.grad.data().iter().map(|g| g * w.alpha).collect();
    let grad = BatchGrad {
        dev: scaled(l2.grad, w.beta),
        day: scaled(day.grad, w.gamma),
        hour: scaled(hour.grad, w.gamma),
        category: scaled(cat.grad, w.c),
    };
    Ok((terms, d_y_p, grad))
}
