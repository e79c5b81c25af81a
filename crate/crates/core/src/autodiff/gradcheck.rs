//! Central finite-difference validation of the reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::rnn::CellKind;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Maximum relative error accepted for single operations.
pub const OP_TOLERANCE: f64 = 1e-4;
/// Magnitudes below this floor are compared absolutely.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn eval_loss<B>(inputs: &[Tensor<f64>], build: &B) -> Result<f64>
where
    B: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let v = g.value(loss);
    if v.numel() != 1 {
        return Err(Error::shape("gradcheck", "loss must be scalar"));
    }
    Ok(v.data()[0])
}

/// Compares analytic gradients of `build` against central differences for
/// every element of every input whose `requires_grad` flag is set.
pub fn check_gradients<B>(name: &str, inputs: &[Tensor<f64>], tolerance: f64, build: B) -> Result<GradCheckReport>
where
    B: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut work = inputs.to_vec();
    for (k, t) in inputs.iter().enumerate() {
        if !t.requires_grad() {
            continue;
        }
        let zeros = vec![0.0; t.numel()];
        let analytic = grads.get(vars[k]).unwrap_or(&zeros).to_vec();
        for i in 0..t.numel() {
            let orig = t.data()[i];
            work[k].data_mut()[i] = orig + FD_STEP;
            let up = eval_loss(&work, &build)?;
            work[k].data_mut()[i] = orig - FD_STEP;
            let down = eval_loss(&work, &build)?;
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[i], numeric));
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        checked,
        max_rel_error: worst,
        tolerance,
    })
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi)).with_requires_grad(true)
}

/// Values with magnitude in `[lo, hi]` and random sign, keeping away from
/// kinks at zero.
fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.random_range(lo..hi);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
    .with_requires_grad(true)
}

/// `sum(out ⊙ R)` for a fixed random projection `R`, turning any output into
/// a scalar with non-trivial upstream gradient.
pub fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.shape(out).to_vec();
    let r = g.constant(Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)));
    let p = g.mul(out, r)?;
    Ok(g.sum(p))
}

/// Runs the finite-difference check on every differentiable operation.
pub fn op_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = OP_TOLERANCE;
    let mut out = Vec::new();

    let x = rand_tensor(&mut rng, &[3, 9], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[2, 3, 3], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[2], -1.0, 1.0);
    out.push(check_gradients("conv1d k3 d2", &[x.clone(), w, b.clone()], tol, |g, v| {
        let y = g.conv1d(v[0], v[1], Some(v[2]), 2)?;
        project(g, y, 1)
    })?);
    let w1 = rand_tensor(&mut rng, &[2, 3, 1], -1.0, 1.0);
    out.push(check_gradients("conv1d k1", &[x.clone(), w1, b], tol, |g, v| {
        let y = g.conv1d(v[0], v[1], Some(v[2]), 1)?;
        project(g, y, 2)
    })?);
    let w5 = rand_tensor(&mut rng, &[2, 3, 3], -1.0, 1.0);
    out.push(check_gradients("conv1d d16 (beyond length)", &[x.clone(), w5], tol, |g, v| {
        let y = g.conv1d(v[0], v[1], None, 16)?;
        project(g, y, 3)
    })?);

    let xa = rand_away_from_zero(&mut rng, &[4, 5], 0.05, 1.5);
    out.push(check_gradients("relu", std::slice::from_ref(&xa), tol, |g, v| {
        let y = g.relu(v[0]);
        project(g, y, 4)
    })?);
    out.push(check_gradients("sigmoid", std::slice::from_ref(&xa), tol, |g, v| {
        let y = g.sigmoid(v[0]);
        project(g, y, 5)
    })?);
    out.push(check_gradients("tanh", std::slice::from_ref(&xa), tol, |g, v| {
        let y = g.tanh(v[0]);
        project(g, y, 6)
    })?);
    let xp = rand_tensor(&mut rng, &[4, 5], 0.2, 2.0);
    out.push(check_gradients("log", &[xp], tol, |g, v| {
        let y = g.log(v[0]);
        project(g, y, 7)
    })?);
    let ya = rand_tensor(&mut rng, &[4, 5], -1.0, 1.0);
    out.push(check_gradients("add", &[xa.clone(), ya.clone()], tol, |g, v| {
        let y = g.add(v[0], v[1])?;
        project(g, y, 8)
    })?);
    out.push(check_gradients("sub", &[xa.clone(), ya.clone()], tol, |g, v| {
        let y = g.sub(v[0], v[1])?;
        project(g, y, 9)
    })?);
    out.push(check_gradients("mul", &[xa.clone(), ya.clone()], tol, |g, v| {
        let y = g.mul(v[0], v[1])?;
        project(g, y, 10)
    })?);
    out.push(check_gradients("scale", std::slice::from_ref(&xa), tol, |g, v| {
        let y = g.scale(v[0], -1.7);
        project(g, y, 11)
    })?);
    let za = rand_tensor(&mut rng, &[2, 5], -1.0, 1.0);
    out.push(check_gradients("concat axis0", &[xa.clone(), za], tol, |g, v| {
        let y = g.concat(&[v[0], v[1]], 0)?;
        project(g, y, 12)
    })?);
    let zb = rand_tensor(&mut rng, &[4, 2], -1.0, 1.0);
    out.push(check_gradients("concat axis1", &[xa.clone(), zb], tol, |g, v| {
        let y = g.concat(&[v[1], v[0]], 1)?;
        project(g, y, 13)
    })?);
    for axis in 0..2 {
        out.push(check_gradients(&format!("softmax axis{axis}"), std::slice::from_ref(&ya), tol, |g, v| {
            let y = g.softmax(v[0], axis)?;
            project(g, y, 14)
        })?);
    }
    out.push(check_gradients("dropout (fixed mask)", std::slice::from_ref(&ya), tol, |g, v| {
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let y = g.dropout(v[0], 0.4, true, &mut r)?;
        project(g, y, 15)
    })?);
    out.push(check_gradients("mean", std::slice::from_ref(&ya), tol, |g, v| {
        let sq = g.mul(v[0], v[0])?;
        Ok(g.mean(sq))
    })?);
    out.push(check_gradients("narrow", std::slice::from_ref(&ya), tol, |g, v| {
        let y = g.narrow(v[0], 1, 1, 3)?;
        project(g, y, 16)
    })?);
    out.push(check_gradients("clamp", std::slice::from_ref(&xa), tol, |g, v| {
        let y = g.clamp(v[0], -0.8, 0.9);
        let y2 = g.mul(y, y)?;
        project(g, y2, 17)
    })?);
    let xs = rand_tensor(&mut rng, &[3, 8], -1.0, 1.0);
    out.push(check_gradients("subsample", std::slice::from_ref(&xs), tol, |g, v| {
        let y = g.subsample(v[0], 3)?;
        project(g, y, 18)
    })?);
    let xu = rand_tensor(&mut rng, &[3, 3], -1.0, 1.0);
    out.push(check_gradients("upsample", &[xu], tol, |g, v| {
        let y = g.upsample(v[0], 3, 8)?;
        project(g, y, 19)
    })?);

    for kind in [CellKind::Lstm, CellKind::Gru] {
        for reverse in [false, true] {
            let (cin, q, n) = (3, 4, 6);
            let gq = kind.gates() * q;
            let mut inputs = vec![
                rand_tensor(&mut rng, &[cin, n], -1.0, 1.0),
                rand_tensor(&mut rng, &[gq, cin], -0.8, 0.8),
                rand_tensor(&mut rng, &[gq, q], -0.8, 0.8),
                rand_tensor(&mut rng, &[gq], -0.5, 0.5),
            ];
            if kind == CellKind::Gru {
                inputs.push(rand_tensor(&mut rng, &[q], -0.5, 0.5));
            }
            let name = format!("{kind:?} {}", if reverse { "reverse" } else { "forward" });
            out.push(check_gradients(&name, &inputs, tol, |g, v| {
                let y = g.rnn(kind, v[0], v[1], v[2], v[3], v.get(4).copied(), reverse)?;
                project(g, y, 20)
            })?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_finite_differences() {
        let reports = op_suite(2024).unwrap();
        assert!(reports.len() >= 20);
        for r in &reports {
            assert!(r.checked > 0, "{}", r.name);
            assert!(r.passed(), "{}: max rel err {:.3e}", r.name, r.max_rel_error);
        }
    }
}
