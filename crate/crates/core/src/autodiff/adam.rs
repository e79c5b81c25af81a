use super::params::ParamStore;
use super::tensor::Real;

/// Moment buffers and hyperparameters of the Adam optimizer.
#[derive(Clone, Debug)]
pub struct AdamState<F = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update to `param` given `grad` for the
    /// parameter slot `slot`. Call [`AdamState::advance`] once per step first.
    fn update(&mut self, slot: usize, param: &mut [F], grad: Option<&[F]>) {
        if self.m.len() <= slot {
            self.m.resize_with(slot + 1, Vec::new);
            self.v.resize_with(slot + 1, Vec::new);
        }
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        if m.len() != param.len() {
            *m = vec![F::zero(); param.len()];
            *v = vec![F::zero(); param.len()];
        }
        let t = self.step as i32;
        let b1 = F::c(self.beta1);
        let b2 = F::c(self.beta2);
        let c1 = F::c(1.0 - self.beta1.powi(t));
        let c2 = F::c(1.0 - self.beta2.powi(t));
        let lr = F::c(self.lr);
        let eps = F::c(self.epsilon);
        let one = F::one();
        for i in 0..param.len() {
            let g = grad.map_or(F::zero(), |g| g[i]);
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    fn advance(&mut self) {
        self.step += 1;
    }
}

/// One Adam step over every parameter of `params`, reading the gradients
/// accumulated in each tensor. Missing gradients count as zero.
pub fn adam_step<F: Real>(params: &mut ParamStore<F>, state: &mut AdamState<F>) {
    state.advance();
    for (slot, (_, tensor)) in params.iter_mut().enumerate() {
        let grad = tensor.grad().map(<[F]>::to_vec);
        state.update(slot, tensor.data_mut(), grad.as_deref());
    }
}
