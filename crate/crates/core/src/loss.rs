//! Training objective: per-head cross-entropy plus a truncated temporal
//! smoothing penalty on log-probabilities, summed over every head.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the smoothing term.
    pub lambda: f64,
    /// Bound on each adjacent-frame log-probability difference.
    pub tau: f64,
    /// Treat frame `t−1` as a constant in the smoothing term.
    pub detach_prev_frame: bool,
}

impl LossConfig {
    pub fn new(lambda: f64) -> Self {
        LossConfig {
            lambda,
            tau: 4.0,
            detach_prev_frame: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("loss.lambda must be ≥ 0, got {}", self.lambda)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("loss.tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Loss of one head: `y_hat` is `C × T` probabilities, `labels` has `T`
/// entries in `[0, C)`.
pub fn head_loss<F: Real>(g: &mut Graph<F>, y_hat: Var, labels: &[usize], cfg: &LossConfig) -> Result<Var> {
    let shape = g.shape(y_hat).to_vec();
    if shape.len() != 2 || shape[1] != labels.len() {
        return Err(Error::shape(
            "head_loss",
            format!("prediction {shape:?} against {} labels", labels.len()),
        ));
    }
    let (c, t) = (shape[0], shape[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("label {bad} outside [0, {c})")));
    }
    let log_y = g.log(y_hat);

    let weight = F::c(1.0 / t as f64);
    let mut target = Tensor::zeros(vec![c, t]);
    for (i, &l) in labels.iter().enumerate() {
        target.data_mut()[l * t + i] = weight;
    }
    let target = g.constant(target);
    let picked = g.mul(log_y, target)?;
    let picked = g.sum(picked);
    let ce = g.scale(picked, -F::one());
    if t < 2 || cfg.lambda == 0.0 {
        return Ok(ce);
    }

    let cur = g.narrow(log_y, 1, 1, t - 1)?;
    let prev_src = if cfg.detach_prev_frame { g.detach(log_y) } else { log_y };
    let prev = g.narrow(prev_src, 1, 0, t - 1)?;
    let diff = g.sub(cur, prev)?;
    let tau = F::c(cfg.tau);
    let clamped = g.clamp(diff, -tau, tau);
    let sq = g.mul(clamped, clamped)?;
    let total = g.sum(sq);
    let smooth = g.scale(total, F::c(cfg.lambda / (t * c) as f64));
    g.add(ce, smooth)
}

/// Unweighted sum of [`head_loss`] over `(prediction, labels)` pairs.
pub fn total_loss<F: Real>(g: &mut Graph<F>, heads: &[(Var, &[usize])], cfg: &LossConfig) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &(y, labels) in heads {
        let l = head_loss(g, y, labels, cfg)?;
        total = Some(match total {
            None => l,
            Some(acc) => g.add(acc, l)?,
        });
    }
    total.ok_or_else(|| Error::invalid("no prediction heads"))
}

/// Labels at the model's working resolution: every `factor`-th frame.
pub fn downsample_labels(labels: &[usize], factor: usize) -> Vec<usize> {
    labels.iter().copied().step_by(factor.max(1)).collect()
}
