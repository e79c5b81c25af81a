//! Fused single-direction LSTM and GRU layers with hand-written
//! backpropagation through time.
//!
//! Inputs are channel-major (`C_in × N`), outputs are `Q × N`. Weight layouts
//! follow the gate order `i, f, g, o` (LSTM) and `r, z, n` (GRU):
//! `w_ih` is `G·Q × C_in`, `w_hh` is `G·Q × Q` and `bias` is `G·Q`. The GRU
//! additionally carries `b_hn` (length `Q`), the bias inside the reset product.

use serde::{Deserialize, Serialize};

use super::kernels::{axpy, dot, sigmoid};
use super::tensor::Real;

/// Recurrent cell family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct RnnDims {
    pub c_in: usize,
    pub hidden: usize,
    pub len: usize,
    pub reverse: bool,
}

impl RnnDims {
    #[inline]
    fn time(&self, step: usize) -> usize {
        if self.reverse {
            self.len - 1 - step
        } else {
            step
        }
    }
}

/// Activations saved by the forward pass, all time-major (`N × …`).
#[derive(Clone, Debug)]
pub(crate) struct RnnCache<F> {
    /// Post-activation gates, `N × G·Q`.
    acts: Vec<F>,
    /// LSTM cell states or GRU `W_hn h + b_hn`, `N × Q`.
    cells: Vec<F>,
    /// Hidden states, `N × Q`.
    hidden: Vec<F>,
}

pub(crate) struct RnnWeights<'a, F> {
    pub w_ih: &'a [F],
    pub w_hh: &'a [F],
    pub bias: &'a [F],
    pub b_hn: Option<&'a [F]>,
}

pub(crate) struct RnnGrads<F> {
    pub dx: Vec<F>,
    pub dw_ih: Vec<F>,
    pub dw_hh: Vec<F>,
    pub dbias: Vec<F>,
    pub db_hn: Option<Vec<F>>,
}

fn input_projection<F: Real>(x: &[F], w: &RnnWeights<'_, F>, gq: usize, d: RnnDims) -> Vec<F> {
    let n = d.len;
    let mut xp = vec![F::zero(); gq * n];
    for j in 0..gq {
        let row = &mut xp[j * n..(j + 1) * n];
        row.fill(w.bias[j]);
        for i in 0..d.c_in {
            let wv = w.w_ih[j * d.c_in + i];
            if wv != F::zero() {
                axpy(wv, &x[i * n..(i + 1) * n], row);
            }
        }
    }
    xp
}

pub(crate) fn rnn_forward<F: Real>(
    kind: CellKind,
    x: &[F],
    w: &RnnWeights<'_, F>,
    d: RnnDims,
) -> (Vec<F>, RnnCache<F>) {
    let (q, n) = (d.hidden, d.len);
    let gq = kind.gates() * q;
    let xp = input_projection(x, w, gq, d);

    let mut acts = vec![F::zero(); n * gq];
    let mut cells = vec![F::zero(); n * q];
    let mut hidden = vec![F::zero(); n * q];
    let zeros = vec![F::zero(); q];
    let mut hp = vec![F::zero(); gq];

    for s in 0..n {
        let t = d.time(s);
        let prev = (s > 0).then(|| d.time(s - 1));
        let h_prev: Vec<F> = prev.map_or_else(|| zeros.clone(), |p| hidden[p * q..(p + 1) * q].to_vec());
        for (j, v) in hp.iter_mut().enumerate() {
            *v = dot(&w.w_hh[j * q..(j + 1) * q], &h_prev);
        }
        let a = &mut acts[t * gq..(t + 1) * gq];
        match kind {
            CellKind::Lstm => {
                for j in 0..gq {
                    let pre = xp[j * n + t] + hp[j];
                    a[j] = if (2 * q..3 * q).contains(&j) { pre.tanh() } else { sigmoid(pre) };
                }
                for k in 0..q {
                    let c_prev = prev.map_or(F::zero(), |p| cells[p * q + k]);
                    let (ig, fg, gg, og) = (a[k], a[q + k], a[2 * q + k], a[3 * q + k]);
                    let c = fg * c_prev + ig * gg;
                    cells[t * q + k] = c;
                    hidden[t * q + k] = og * c.tanh();
                }
            }
            CellKind::Gru => {
                let b_hn = w.b_hn.expect("GRU needs b_hn");
                for k in 0..q {
                    let r = sigmoid(xp[k * n + t] + hp[k]);
                    let z = sigmoid(xp[(q + k) * n + t] + hp[q + k]);
                    let hn = hp[2 * q + k] + b_hn[k];
                    let nn = (xp[(2 * q + k) * n + t] + r * hn).tanh();
                    a[k] = r;
                    a[q + k] = z;
                    a[2 * q + k] = nn;
                    cells[t * q + k] = hn;
                    hidden[t * q + k] = (F::one() - z) * nn + z * h_prev[k];
                }
            }
        }
    }

    let mut out = vec![F::zero(); q * n];
    for t in 0..n {
        for k in 0..q {
            out[k * n + t] = hidden[t * q + k];
        }
    }
    (out, RnnCache { acts, cells, hidden })
}

pub(crate) fn rnn_backward<F: Real>(
    kind: CellKind,
    x: &[F],
    w: &RnnWeights<'_, F>,
    cache: &RnnCache<F>,
    dout: &[F],
    d: RnnDims,
) -> RnnGrads<F> {
    let (q, n) = (d.hidden, d.len);
    let gq = kind.gates() * q;
    let mut da_all = vec![F::zero(); gq * n];
    let mut dw_hh = vec![F::zero(); gq * q];
    let mut db_hn = w.b_hn.map(|_| vec![F::zero(); q]);
    let mut dh_next = vec![F::zero(); q];
    let mut dc_next = vec![F::zero(); q];
    let mut dhp = vec![F::zero(); gq];
    let mut dh = vec![F::zero(); q];
    let mut dh_direct = vec![F::zero(); q];
    let one = F::one();

    for s in (0..n).rev() {
        let t = d.time(s);
        let prev = (s > 0).then(|| d.time(s - 1));
        for k in 0..q {
            dh[k] = dout[k * n + t] + dh_next[k];
        }
        let a = &cache.acts[t * gq..(t + 1) * gq];
        let h_prev = |k: usize| prev.map_or(F::zero(), |p| cache.hidden[p * q + k]);
        match kind {
            CellKind::Lstm => {
                for k in 0..q {
                    let (ig, fg, gg, og) = (a[k], a[q + k], a[2 * q + k], a[3 * q + k]);
                    let c = cache.cells[t * q + k];
                    let c_prev = prev.map_or(F::zero(), |p| cache.cells[p * q + k]);
                    let tc = c.tanh();
                    let d_o = dh[k] * tc;
                    let dc = dc_next[k] + dh[k] * og * (one - tc * tc);
                    dc_next[k] = dc * fg;
                    dhp[k] = dc * gg * ig * (one - ig);
                    dhp[q + k] = dc * c_prev * fg * (one - fg);
                    dhp[2 * q + k] = dc * ig * (one - gg * gg);
                    dhp[3 * q + k] = d_o * og * (one - og);
                    dh_direct[k] = F::zero();
                }
                for j in 0..gq {
                    da_all[j * n + t] = dhp[j];
                }
            }
            CellKind::Gru => {
                let db_hn = db_hn.as_mut().expect("GRU needs b_hn");
                for k in 0..q {
                    let (r, z, nn) = (a[k], a[q + k], a[2 * q + k]);
                    let hn = cache.cells[t * q + k];
                    let hp = h_prev(k);
                    let dn = dh[k] * (one - z);
                    let dz = dh[k] * (hp - nn);
                    dh_direct[k] = dh[k] * z;
                    let dan = dn * (one - nn * nn);
                    let dhn = dan * r;
                    let dar = dan * hn * r * (one - r);
                    let daz = dz * z * (one - z);
                    da_all[k * n + t] = dar;
                    da_all[(q + k) * n + t] = daz;
                    da_all[(2 * q + k) * n + t] = dan;
                    dhp[k] = dar;
                    dhp[q + k] = daz;
                    dhp[2 * q + k] = dhn;
                    db_hn[k] += dhn;
                }
            }
        }
        dh_next.copy_from_slice(&dh_direct);
        if let Some(p) = prev {
            let hprev = &cache.hidden[p * q..(p + 1) * q];
            for j in 0..gq {
                let g = dhp[j];
                if g != F::zero() {
                    axpy(g, hprev, &mut dw_hh[j * q..(j + 1) * q]);
                    axpy(g, &w.w_hh[j * q..(j + 1) * q], &mut dh_next);
                }
            }
        }
    }

    let dbias = (0..gq).map(|j| da_all[j * n..(j + 1) * n].iter().copied().sum()).collect();
    let mut dw_ih = vec![F::zero(); gq * d.c_in];
    let mut dx = vec![F::zero(); d.c_in * n];
    for j in 0..gq {
        let dr = &da_all[j * n..(j + 1) * n];
        for i in 0..d.c_in {
            let xr = &x[i * n..(i + 1) * n];
            dw_ih[j * d.c_in + i] = dot(dr, xr);
            let wv = w.w_ih[j * d.c_in + i];
            if wv != F::zero() {
                axpy(wv, dr, &mut dx[i * n..(i + 1) * n]);
            }
        }
    }
    RnnGrads {
        dx,
        dw_ih,
        dw_hh,
        dbias,
        db_hn,
    }
}
