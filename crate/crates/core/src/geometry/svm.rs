//! Soft-margin linear SVM in the plane, solved in the dual with sequential
//! minimal optimization (maximal violating pair selection).

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            max_iter: 100_000,
            tol: 1e-10,
        }
    }
}

/// Decision function `w·x + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSvm {
    pub w: [f64; 2],
    pub b: f64,
}

impl LinearSvm {
    pub fn decision(&self, p: [f64; 2]) -> f64 {
        self.w[0] * p[0] + self.w[1] * p[1] + self.b
    }
}

fn kernel(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Trains on `positive` (label +1) against `negative` (label −1).
///
/// The data are centred before solving. When the trained direction
/// separates the two sets, the offset is replaced by the midline between the
/// innermost points of each class along `w`.
pub fn fit_linear_svm(positive: &[[f64; 2]], negative: &[[f64; 2]], params: SvmParams) -> Result<LinearSvm> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::invalid("both point sets must be non-empty"));
    }
    let n = positive.len() + negative.len();
    let mean = positive
        .iter()
        .chain(negative)
        .fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
    let mean = [mean[0] / n as f64, mean[1] / n as f64];
    let x: Vec<[f64; 2]> = positive
        .iter()
        .chain(negative)
        .map(|p| [p[0] - mean[0], p[1] - mean[1]])
        .collect();
    let y: Vec<f64> = (0..n).map(|i| if i < positive.len() { 1.0 } else { -1.0 }).collect();

    let c = params.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * kernel(x[i], x[j]);
    const TAU: f64 = 1e-12;

    for _ in 0..params.max_iter {
        let mut i_best = None;
        let mut g_max = f64::NEG_INFINITY;
        let mut j_best = None;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] < 0.0 && alpha[t] < c) || (y[t] > 0.0 && alpha[t] > 0.0);
            let v = -y[t] * grad[t];
            if up && v > g_max {
                g_max = v;
                i_best = Some(t);
            }
            if low && v < g_min {
                g_min = v;
                j_best = Some(t);
            }
        }
        let (Some(i), Some(j)) = (i_best, j_best) else { break };
        if g_max - g_min < params.tol {
            break;
        }
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        if y[i] != y[j] {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for k in 0..n {
            grad[k] += q(i, k) * di + q(j, k) * dj;
        }
    }

    let mut w = [0.0, 0.0];
    for k in 0..n {
        w[0] += alpha[k] * y[k] * x[k][0];
        w[1] += alpha[k] * y[k] * x[k][1];
    }
    if w[0] == 0.0 && w[1] == 0.0 {
        return Err(Error::invalid("point sets admit no separating direction"));
    }

    // Offset from free support vectors, falling back to the bracket midpoint.
    let (mut ub, mut lb, mut sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for k in 0..n {
        let yg = y[k] * grad[k];
        if alpha[k] > 0.0 && alpha[k] < c {
            sum += yg;
            free += 1;
        } else if (alpha[k] >= c && y[k] < 0.0) || (alpha[k] <= 0.0 && y[k] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    let mut b = -rho;

    let proj = |p: &[f64; 2]| w[0] * p[0] + w[1] * p[1];
    let pos_min = x[..positive.len()].iter().map(proj).fold(f64::INFINITY, f64::min);
    let neg_max = x[positive.len()..].iter().map(proj).fold(f64::NEG_INFINITY, f64::max);
    if pos_min > neg_max {
        b = -(pos_min + neg_max) / 2.0;
    }
    Ok(LinearSvm {
        w,
        b: b - (w[0] * mean[0] + w[1] * mean[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pair_is_bisected() {
        let svm = fit_linear_svm(&[[0.0, 2.0]], &[[0.0, -2.0]], SvmParams::default()).unwrap();
        assert!(svm.w[0].abs() < 1e-12);
        assert!(svm.decision([5.0, 0.0]).abs() < 1e-12);
        assert!(svm.decision([0.0, 2.0]) > 0.0);
    }

    #[test]
    fn overlapping_sets_still_fit() {
        let pos = [[0.0, 1.0], [1.0, 1.2], [2.0, -0.1]];
        let neg = [[0.0, -1.0], [1.0, 0.1], [2.0, -1.1]];
        let svm = fit_linear_svm(&pos, &neg, SvmParams::default()).unwrap();
        let correct = pos.iter().filter(|p| svm.decision(**p) > 0.0).count()
            + neg.iter().filter(|p| svm.decision(**p) < 0.0).count();
        assert!(correct >= 5);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(fit_linear_svm(&[], &[[0.0, 0.0]], SvmParams::default()).is_err());
    }
}
