//! Dynamic reverse-mode tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so walking the node list backwards is a valid
//! topological order for backpropagation.

use rand::Rng;

use super::kernels::{conv1d_backward, conv1d_forward, sigmoid, ConvDims};
use super::rnn::{rnn_backward, rnn_forward, CellKind, RnnCache, RnnDims, RnnWeights};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Probabilities are clamped to this floor before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-10;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    Conv1d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        dims: ConvDims,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Log {
        input: Var,
        floor: F,
    },
    Clamp {
        input: Var,
        lo: F,
        hi: F,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Softmax {
        input: Var,
        axis: usize,
    },
    Dropout {
        input: Var,
        mask: Vec<F>,
    },
    Sum(Var),
    Narrow {
        input: Var,
        axis: usize,
        start: usize,
    },
    Subsample {
        input: Var,
        factor: usize,
    },
    Upsample {
        input: Var,
        factor: usize,
    },
    Rnn {
        kind: CellKind,
        input: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        b_hn: Option<Var>,
        dims: RnnDims,
        cache: RnnCache<F>,
    },
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Recorded computation over [`Tensor`] values.
#[derive(Debug, Default)]
pub struct Graph<F: Real = f32> {
    nodes: Vec<Node<F>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Splits a shape around `axis` into `(outer, axis_len, inner)`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn map_unary<F: Real>(x: &Tensor<F>, f: impl Fn(F) -> F) -> Tensor<F> {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

fn accumulate<F: Real>(slot: &mut Option<Vec<F>>, g: &[F]) {
    match slot {
        Some(buf) => {
            for (b, &v) in buf.iter_mut().zip(g) {
                *b += v;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Adds an input tensor. Gradients are tracked when the tensor's
    /// `requires_grad` flag is set.
    pub fn leaf(&mut self, t: Tensor<F>) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    /// Adds a value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(t.with_requires_grad(false), Op::Leaf, false)
    }

    /// Copies `v`'s value into a new constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.clone();
        self.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// "Same"-padded dilated convolution: `input` is `C_in × T`, `weight` is
    /// `C_out × C_in × K` with odd `K`, `bias` is `C_out`. The input is
    /// zero-padded by `dilation·(K−1)/2` on both sides so the output is
    /// `C_out × T`.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Option<Var>, dilation: usize) -> Result<Var> {
        let xs = self.shape(input);
        let ws = self.shape(weight);
        if xs.len() != 2 || ws.len() != 3 {
            return Err(Error::shape("conv1d", format!("input {xs:?}, weight {ws:?}")));
        }
        if ws[1] != xs[0] {
            return Err(Error::shape("conv1d", format!("weight {ws:?} vs input channels {}", xs[0])));
        }
        if ws[2].is_multiple_of(2) || dilation == 0 {
            return Err(Error::shape("conv1d", format!("kernel {} must be odd, dilation {dilation} positive", ws[2])));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ws[0]] {
                return Err(Error::shape("conv1d", format!("bias {:?} vs {} out channels", self.shape(b), ws[0])));
            }
        }
        let dims = ConvDims {
            c_in: xs[0],
            c_out: ws[0],
            kernel: ws[2],
            len: xs[1],
            dilation,
        };
        let out = conv1d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            dims,
        );
        let needs = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        let t = Tensor::new(vec![dims.c_out, dims.len], out)?;
        Ok(self.push(
            t,
            Op::Conv1d {
                input,
                weight,
                bias,
                dims,
            },
            needs,
        ))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(F, F) -> F) -> Result<(Tensor<F>, bool)> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(name, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok((Tensor::new(ta.shape().to_vec(), data)?, self.needs(a) || self.needs(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, n) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), n))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, n) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), n))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, n) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), n))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let t = map_unary(self.value(a), |v| v * c);
        let n = self.needs(a);
        self.push(t, Op::Scale(a, c), n)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = map_unary(self.value(a), |v| if v > F::zero() { v } else { F::zero() });
        let n = self.needs(a);
        self.push(t, Op::Relu(a), n)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = map_unary(self.value(a), sigmoid);
        let n = self.needs(a);
        self.push(t, Op::Sigmoid(a), n)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = map_unary(self.value(a), F::tanh);
        let n = self.needs(a);
        self.push(t, Op::Tanh(a), n)
    }

    /// Natural logarithm of `max(x, LOG_FLOOR)`.
    pub fn log(&mut self, a: Var) -> Var {
        let floor = F::c(LOG_FLOOR);
        let t = map_unary(self.value(a), |v| v.max(floor).ln());
        let n = self.needs(a);
        self.push(t, Op::Log { input: a, floor }, n)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: F, hi: F) -> Var {
        let t = map_unary(self.value(a), |v| v.max(lo).min(hi));
        let n = self.needs(a);
        self.push(t, Op::Clamp { input: a, lo, hi }, n)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} for shape {base:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", format!("{s:?} vs {base:?} along axis {axis}")));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let n = t.shape()[axis];
                data.extend_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let needs = inputs.iter().any(|&v| self.needs(v));
        let t = Tensor::new(shape, data)?;
        Ok(self.push(
            t,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            needs,
        ))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.shape().len() {
            return Err(Error::shape("softmax", format!("axis {axis} for shape {:?}", x.shape())));
        }
        let (outer, n, inner) = split_axis(x.shape(), axis);
        let src = x.data();
        let mut out = vec![F::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let m = (0..n).map(|j| src[idx(j)]).fold(F::neg_infinity(), F::max);
                let mut s = F::zero();
                for j in 0..n {
                    let e = (src[idx(j)] - m).exp();
                    out[idx(j)] = e;
                    s += e;
                }
                for j in 0..n {
                    out[idx(j)] /= s;
                }
            }
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Softmax { input: a, axis }, needs))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1−p)`. Outside
    /// training, or with `p == 0`, returns `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout probability {p} outside [0,1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = F::c(1.0 / (1.0 - p));
        let n = self.value(a).numel();
        let mask: Vec<F> = (0..n)
            .map(|_| if rng.random::<f64>() < p { F::zero() } else { keep })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Dropout { input: a, mask }, needs))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: F = self.value(a).data().iter().copied().sum();
        let n = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), n)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel();
        let s = self.sum(a);
        self.scale(s, F::one() / F::c(n as f64))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let shape = x.shape();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape("narrow", format!("[{start}, {}) on axis {axis} of {shape:?}", start + len)));
        }
        let (outer, n, inner) = split_axis(shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let t = Tensor::new(out_shape, data)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Narrow { input: a, axis, start }, needs))
    }

    /// Keeps every `factor`-th step along the last (time) axis starting at
    /// index 0, giving `⌊(T−1)/factor⌋ + 1` steps.
    pub fn subsample(&mut self, a: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(Error::invalid("subsample factor must be positive"));
        }
        if factor == 1 {
            return Ok(a);
        }
        let x = self.value(a);
        let t = *x.shape().last().ok_or_else(|| Error::shape("subsample", "scalar input"))?;
        let rows = x.numel() / t;
        let n_out = (t - 1) / factor + 1;
        let mut data = Vec::with_capacity(rows * n_out);
        for r in 0..rows {
            data.extend((0..n_out).map(|j| x.data()[r * t + j * factor]));
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("non-scalar") = n_out;
        let out = Tensor::new(shape, data)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::Subsample { input: a, factor }, needs))
    }

    /// Repeats every time step `factor` times and truncates to `len` steps.
    pub fn upsample(&mut self, a: Var, factor: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let t = *x.shape().last().ok_or_else(|| Error::shape("upsample", "scalar input"))?;
        if factor == 0 || len == 0 || len > t * factor {
            return Err(Error::shape("upsample", format!("{t} steps ×{factor} cannot cover {len}")));
        }
        if factor == 1 && len == t {
            return Ok(a);
        }
        let rows = x.numel() / t;
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend((0..len).map(|j| x.data()[r * t + j / factor]));
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("non-scalar") = len;
        let out = Tensor::new(shape, data)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::Upsample { input: a, factor }, needs))
    }

    /// One direction of a recurrent layer over a `C_in × N` input, returning
    /// the hidden states as `Q × N`. When `reverse` is set the recurrence
    /// runs from the last step to the first; outputs stay time-aligned.
    #[allow(clippy::too_many_arguments)]
    pub fn rnn(
        &mut self,
        kind: CellKind,
        input: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        b_hn: Option<Var>,
        reverse: bool,
    ) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let wi = self.shape(w_ih).to_vec();
        let wh = self.shape(w_hh).to_vec();
        if xs.len() != 2 || wi.len() != 2 || wh.len() != 2 {
            return Err(Error::shape("rnn", "expected 2-D input and weights"));
        }
        let q = wh[1];
        let gq = kind.gates() * q;
        let ok = wi == [gq, xs[0]] && wh == [gq, q] && self.shape(bias) == [gq];
        let hn_ok = match (kind, b_hn) {
            (CellKind::Gru, Some(b)) => self.shape(b) == [q],
            (CellKind::Lstm, None) => true,
            _ => false,
        };
        if !ok || !hn_ok {
            return Err(Error::shape(
                "rnn",
                format!("{kind:?}: input {xs:?}, w_ih {wi:?}, w_hh {wh:?}, bias {:?}", self.shape(bias)),
            ));
        }
        let dims = RnnDims {
            c_in: xs[0],
            hidden: q,
            len: xs[1],
            reverse,
        };
        let weights = RnnWeights {
            w_ih: self.value(w_ih).data(),
            w_hh: self.value(w_hh).data(),
            bias: self.value(bias).data(),
            b_hn: b_hn.map(|b| self.value(b).data()),
        };
        let (out, cache) = rnn_forward(kind, self.value(input).data(), &weights, dims);
        let needs = [input, w_ih, w_hh, bias].iter().any(|&v| self.needs(v)) || b_hn.is_some_and(|b| self.needs(b));
        let t = Tensor::new(vec![q, dims.len], out)?;
        Ok(self.push(
            t,
            Op::Rnn {
                kind,
                input,
                w_ih,
                w_hh,
                bias,
                b_hn,
                dims,
                cache,
            },
            needs,
        ))
    }

    /// Backpropagates from the scalar `loss`. Returns gradients for every
    /// node that requires them; leaf gradients can then be accumulated into
    /// parameter tensors.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        if !self.value(loss).is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![F::one()]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(node, &g, &mut grads)?;
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of node {i}")));
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node<F>, g: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let send = |v: Var, gv: &[F], grads: &mut [Option<Vec<F>>]| {
            if self.needs(v) {
                accumulate(&mut grads[v.0], gv);
            }
        };
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d {
                input,
                weight,
                bias,
                dims,
            } => {
                let need = [self.needs(*input), self.needs(*weight), bias.is_some_and(|b| self.needs(b))];
                let (dx, dw, db) =
                    conv1d_backward(self.value(*input).data(), self.value(*weight).data(), g, *dims, need);
                if let Some(dx) = dx {
                    send(*input, &dx, grads);
                }
                if let Some(dw) = dw {
                    send(*weight, &dw, grads);
                }
                if let (Some(b), Some(db)) = (bias, db) {
                    send(*b, &db, grads);
                }
            }
            Op::Add(a, b) => {
                send(*a, g, grads);
                send(*b, g, grads);
            }
            Op::Sub(a, b) => {
                send(*a, g, grads);
                let neg: Vec<F> = g.iter().map(|&v| -v).collect();
                send(*b, &neg, grads);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    let ga: Vec<F> = g.iter().zip(vb).map(|(&gv, &x)| gv * x).collect();
                    send(*a, &ga, grads);
                }
                if self.needs(*b) {
                    let gb: Vec<F> = g.iter().zip(va).map(|(&gv, &x)| gv * x).collect();
                    send(*b, &gb, grads);
                }
            }
            Op::Scale(a, c) => {
                let ga: Vec<F> = g.iter().map(|&v| v * *c).collect();
                send(*a, &ga, grads);
            }
            Op::Relu(a) => {
                let ga: Vec<F> = g
                    .iter()
                    .zip(y)
                    .map(|(&gv, &yv)| if yv > F::zero() { gv } else { F::zero() })
                    .collect();
                send(*a, &ga, grads);
            }
            Op::Sigmoid(a) => {
                let ga: Vec<F> = g.iter().zip(y).map(|(&gv, &yv)| gv * yv * (F::one() - yv)).collect();
                send(*a, &ga, grads);
            }
            Op::Tanh(a) => {
                let ga: Vec<F> = g.iter().zip(y).map(|(&gv, &yv)| gv * (F::one() - yv * yv)).collect();
                send(*a, &ga, grads);
            }
            Op::Log { input, floor } => {
                let x = self.value(*input).data();
                let ga: Vec<F> = g
                    .iter()
                    .zip(x)
                    .map(|(&gv, &xv)| if xv > *floor { gv / xv } else { F::zero() })
                    .collect();
                send(*input, &ga, grads);
            }
            Op::Clamp { input, lo, hi } => {
                let x = self.value(*input).data();
                let ga: Vec<F> = g
                    .iter()
                    .zip(x)
                    .map(|(&gv, &xv)| if xv > *lo && xv < *hi { gv } else { F::zero() })
                    .collect();
                send(*input, &ga, grads);
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let n = self.shape(v)[*axis];
                    if self.needs(v) {
                        let mut gv = Vec::with_capacity(outer * n * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            gv.extend_from_slice(&g[base..base + n * inner]);
                        }
                        send(v, &gv, grads);
                    }
                    offset += n;
                }
            }
            Op::Softmax { input, axis } => {
                let (outer, n, inner) = split_axis(node.value.shape(), *axis);
                let mut ga = vec![F::zero(); g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let dotp: F = (0..n).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..n {
                            ga[idx(j)] = y[idx(j)] * (g[idx(j)] - dotp);
                        }
                    }
                }
                send(*input, &ga, grads);
            }
            Op::Dropout { input, mask } => {
                let ga: Vec<F> = g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                send(*input, &ga, grads);
            }
            Op::Sum(a) => {
                let ga = vec![g[0]; self.value(*a).numel()];
                send(*a, &ga, grads);
            }
            Op::Narrow { input, axis, start } => {
                let in_shape = self.shape(*input);
                let (outer, n, inner) = split_axis(in_shape, *axis);
                let len = node.value.shape()[*axis];
                let mut ga = vec![F::zero(); outer * n * inner];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    let src = o * len * inner;
                    ga[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                send(*input, &ga, grads);
            }
            Op::Subsample { input, factor } => {
                let x = self.value(*input);
                let t = *x.shape().last().expect("non-scalar");
                let rows = x.numel() / t;
                let n_out = *node.value.shape().last().expect("non-scalar");
                let mut ga = vec![F::zero(); x.numel()];
                for r in 0..rows {
                    for j in 0..n_out {
                        ga[r * t + j * factor] = g[r * n_out + j];
                    }
                }
                send(*input, &ga, grads);
            }
            Op::Upsample { input, factor } => {
                let x = self.value(*input);
                let t = *x.shape().last().expect("non-scalar");
                let rows = x.numel() / t;
                let len = *node.value.shape().last().expect("non-scalar");
                let mut ga = vec![F::zero(); x.numel()];
                for r in 0..rows {
                    for j in 0..len {
                        ga[r * t + j / factor] += g[r * len + j];
                    }
                }
                send(*input, &ga, grads);
            }
            Op::Rnn {
                kind,
                input,
                w_ih,
                w_hh,
                bias,
                b_hn,
                dims,
                cache,
            } => {
                let weights = RnnWeights {
                    w_ih: self.value(*w_ih).data(),
                    w_hh: self.value(*w_hh).data(),
                    bias: self.value(*bias).data(),
                    b_hn: b_hn.map(|b| self.value(b).data()),
                };
                let rg = rnn_backward(*kind, self.value(*input).data(), &weights, cache, g, *dims);
                send(*input, &rg.dx, grads);
                send(*w_ih, &rg.dw_ih, grads);
                send(*w_hh, &rg.dw_hh, grads);
                send(*bias, &rg.dbias, grads);
                if let (Some(b), Some(db)) = (b_hn, rg.db_hn) {
                    send(*b, &db, grads);
                }
            }
        }
        Ok(())
    }
}
