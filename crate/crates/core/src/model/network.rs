use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::autodiff::{BoundParams, CellKind, Graph, ParamStore, Real, Tensor, Var};
use crate::error::{Error, Result};

/// Handles to every output of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Every prediction head in loss order: intermediate heads, the
    /// generator's stage head, then one head per refinement stage. All are
    /// `C × T′` probabilities at the working resolution.
    pub heads: Vec<Var>,
    /// Stage outputs at the working resolution: the generator first, then
    /// each refinement.
    pub stages: Vec<Var>,
    /// The last stage, brought back to the input length `C × T`.
    pub full: Var,
}

/// Multi-stage temporal convolutional + recurrent segmentation network.
#[derive(Clone, Debug)]
pub struct MsTcrNet<F: Real = f32> {
    config: ModelConfig,
    params: ParamStore<F>,
}

fn uniform<F: Real>(rng: &mut ChaCha8Rng, shape: Vec<usize>, bound: f64) -> Tensor<F> {
    Tensor::from_fn(shape, |_| F::c(rng.random_range(-bound..=bound)))
}

/// Parameter names of one recurrent direction.
pub(crate) fn rnn_names(stage: usize, layer: usize, reverse: bool) -> [String; 4] {
    let dir = if reverse { "bwd" } else { "fwd" };
    let p = format!("ref{stage}.rnn{layer}.{dir}");
    [format!("{p}.w_ih"), format!("{p}.w_hh"), format!("{p}.bias"), format!("{p}.b_hn")]
}

impl<F: Real> MsTcrNet<F> {
    /// Fresh network with fan-in scaled uniform initialization drawn from
    /// `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (m, d, c, q) = (config.input_dim, config.feature_maps, config.num_classes, config.rnn_hidden);
        let conv = |params: &mut ParamStore<F>, rng: &mut ChaCha8Rng, name: &str, c_out: usize, c_in: usize, k: usize| {
            let bound = 1.0 / ((c_in * k) as f64).sqrt();
            params.insert(format!("{name}.w"), uniform(rng, vec![c_out, c_in, k], bound))?;
            params.insert(format!("{name}.b"), uniform(rng, vec![c_out], bound))
        };
        conv(&mut params, &mut rng, "input", d, m, 1)?;
        let isr = config.isr_layers();
        for l in 1..=config.num_layers {
            conv(&mut params, &mut rng, &format!("ddrl{l}.conv1"), d, d, 3)?;
            conv(&mut params, &mut rng, &format!("ddrl{l}.conv2"), d, d, 3)?;
            conv(&mut params, &mut rng, &format!("ddrl{l}.fusion"), d, 2 * d, 1)?;
            if isr.contains(&l) {
                conv(&mut params, &mut rng, &format!("isr{l}"), c, d, 1)?;
            }
        }
        conv(&mut params, &mut rng, "pg_head", c, d, 1)?;
        let kind = config.variant.cell();
        let gq = kind.gates() * q;
        let bound = 1.0 / (q as f64).sqrt();
        for s in 0..config.num_refinements {
            for layer in 0..config.rnn_layers {
                let c_in = if layer == 0 { c } else { 2 * q };
                for reverse in [false, true] {
                    let [w_ih, w_hh, bias, b_hn] = rnn_names(s, layer, reverse);
                    params.insert(w_ih, uniform(&mut rng, vec![gq, c_in], bound))?;
                    params.insert(w_hh, uniform(&mut rng, vec![gq, q], bound))?;
                    params.insert(bias, uniform(&mut rng, vec![gq], bound))?;
                    if kind == CellKind::Gru {
                        params.insert(b_hn, uniform(&mut rng, vec![q], bound))?;
                    }
                }
            }
            conv(&mut params, &mut rng, &format!("ref{s}.head"), c, 2 * q, 1)?;
        }
        Ok(MsTcrNet { config, params })
    }

    /// Wraps an existing parameter store, checking it against `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore<F>) -> Result<Self> {
        let template = MsTcrNet::<F>::new(config.clone(), 0)?;
        let same = template.params.len() == params.len()
            && template
                .params
                .iter()
                .all(|(name, t)| params.get(name).is_some_and(|p| p.shape() == t.shape()));
        if !same {
            return Err(Error::Checkpoint("parameters do not match the model configuration".into()));
        }
        Ok(MsTcrNet { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_parameters()
    }

    pub fn cast<G: Real>(&self) -> MsTcrNet<G> {
        MsTcrNet {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// Builds the forward pass for `input` (`M × T`) inside `g`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<F>,
        p: &BoundParams,
        input: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        let shape = g.shape(input).to_vec();
        if shape.len() != 2 || shape[0] != cfg.input_dim {
            return Err(Error::shape("model input", format!("expected {} × T, got {shape:?}", cfg.input_dim)));
        }
        let len = shape[1];
        let x = g.subsample(input, cfg.primary_sampling)?;
        let work_len = g.shape(x)[1];

        let mut heads = Vec::with_capacity(cfg.num_heads());
        let mut stages = Vec::with_capacity(cfg.num_refinements + 1);
        let isr = cfg.isr_layers();

        let mut h = g.conv1d(x, p.var("input.w")?, Some(p.var("input.b")?), 1)?;
        for l in 1..=cfg.num_layers {
            let (d1, d2) = cfg.dilations(l);
            let name = |part: &str| format!("ddrl{l}.{part}");
            h = ddrl_forward(
                g,
                h,
                [
                    (p.var(&name("conv1.w"))?, p.var(&name("conv1.b"))?),
                    (p.var(&name("conv2.w"))?, p.var(&name("conv2.b"))?),
                    (p.var(&name("fusion.w"))?, p.var(&name("fusion.b"))?),
                ],
                (d1, d2),
                cfg.pg_dropout,
                training,
                rng,
            )?;
            if isr.contains(&l) {
                heads.push(head(g, p, &format!("isr{l}"), h)?);
            }
        }
        let mut y = head(g, p, "pg_head", h)?;
        heads.push(y);
        stages.push(y);

        for s in 0..cfg.num_refinements {
            y = self.refinement(g, p, s, y, work_len, training, rng)?;
            heads.push(y);
            stages.push(y);
        }
        let full = g.upsample(y, cfg.primary_sampling, len)?;
        Ok(ForwardOutput { heads, stages, full })
    }

    #[allow(clippy::too_many_arguments)]
    fn refinement<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<F>,
        p: &BoundParams,
        stage: usize,
        y_prev: Var,
        work_len: usize,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let cfg = &self.config;
        let k = cfg.secondary_sampling;
        let mut z = g.subsample(y_prev, k)?;
        for layer in 0..cfg.rnn_layers {
            z = birnn_layer(g, p, cfg.variant.cell(), stage, layer, z)?;
            z = g.dropout(z, cfg.rnn_dropout, training, rng)?;
        }
        let out = head(g, p, &format!("ref{stage}.head"), z)?;
        g.upsample(out, k, work_len)
    }

    /// Eval-mode class probabilities `C × T` for a channel-major input.
    pub fn predict(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.predict_stages(input)?.pop().expect("at least one stage"))
    }

    /// Eval-mode probabilities of every stage, each at the input length.
    pub fn predict_stages(&self, input: &Tensor<F>) -> Result<Vec<Tensor<F>>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let x = g.constant(input.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut g, &p, x, false, &mut rng)?;
        let len = input.dim(1);
        out.stages
            .iter()
            .map(|&s| {
                let up = g.upsample(s, self.config.primary_sampling, len)?;
                Ok(g.value(up).clone())
            })
            .collect()
    }
}

/// One dual dilated residual layer: two dilated convolutions, channel
/// concatenation, ReLU, 1×1 fusion, dropout and the residual connection.
#[allow(clippy::too_many_arguments)]
pub fn ddrl_forward<F: Real, R: Rng + ?Sized>(
    g: &mut Graph<F>,
    h: Var,
    weights: [(Var, Var); 3],
    dilations: (usize, usize),
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let [(w1, b1), (w2, b2), (wf, bf)] = weights;
    let a = g.conv1d(h, w1, Some(b1), dilations.0)?;
    let b = g.conv1d(h, w2, Some(b2), dilations.1)?;
    let cat = g.concat(&[a, b], 0)?;
    let act = g.relu(cat);
    let fused = g.conv1d(act, wf, Some(bf), 1)?;
    let fused = g.dropout(fused, dropout, training, rng)?;
    g.add(h, fused)
}

/// 1×1 projection followed by a softmax over classes.
fn head<F: Real>(g: &mut Graph<F>, p: &BoundParams, name: &str, h: Var) -> Result<Var> {
    let logits = g.conv1d(h, p.var(&format!("{name}.w"))?, Some(p.var(&format!("{name}.b"))?), 1)?;
    g.softmax(logits, 0)
}

/// Forward and reverse recurrences over `C_in × N`, concatenated to `2Q × N`.
pub(crate) fn birnn_layer<F: Real>(
    g: &mut Graph<F>,
    p: &BoundParams,
    kind: CellKind,
    stage: usize,
    layer: usize,
    x: Var,
) -> Result<Var> {
    let mut halves = [x; 2];
    for (i, reverse) in [false, true].into_iter().enumerate() {
        let [w_ih, w_hh, bias, b_hn] = rnn_names(stage, layer, reverse);
        let b_hn = match kind {
            CellKind::Gru => Some(p.var(&b_hn)?),
            CellKind::Lstm => None,
        };
        halves[i] = g.rnn(kind, x, p.var(&w_ih)?, p.var(&w_hh)?, p.var(&bias)?, b_hn, reverse)?;
    }
    g.concat(&halves, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use proptest::prelude::*;

    fn toy(variant: Variant, layers: usize, r: usize, k: usize) -> ModelConfig {
        ModelConfig {
            num_layers: layers,
            feature_maps: 4,
            rnn_hidden: 3,
            num_classes: 3,
            input_dim: 5,
            primary_sampling: r,
            secondary_sampling: k,
            ..ModelConfig::for_variant(variant, 5, 3)
        }
    }

    fn random_input(m: usize, t: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(vec![m, t], |_| rng.random_range(-1.0..1.0))
    }

    fn param(net: &MsTcrNet<f64>, name: &str) -> Vec<f64> {
        net.params().get(name).unwrap().data().to_vec()
    }

    // ---- straight-line reference implementation, no graph ----

    type Mat = Vec<Vec<f64>>;

    fn conv_ref(x: &Mat, w: &[f64], b: &[f64], c_out: usize, k: usize, dil: usize) -> Mat {
        let (c_in, t) = (x.len(), x[0].len());
        let mut y = vec![vec![0.0; t]; c_out];
        for o in 0..c_out {
            for (tt, out) in y[o].iter_mut().enumerate() {
                let mut s = b[o];
                for i in 0..c_in {
                    for kk in 0..k {
                        let src = tt as isize + (kk as isize - (k / 2) as isize) * dil as isize;
                        if src >= 0 && (src as usize) < t {
                            s += w[(o * c_in + i) * k + kk] * x[i][src as usize];
                        }
                    }
                }
                *out = s;
            }
        }
        y
    }

    fn softmax_ref(x: &Mat) -> Mat {
        let t = x[0].len();
        let mut y = x.clone();
        for tt in 0..t {
            let mx = x.iter().map(|r| r[tt]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = x.iter().map(|r| (r[tt] - mx).exp()).sum();
            for c in 0..x.len() {
                y[c][tt] = (x[c][tt] - mx).exp() / z;
            }
        }
        y
    }

    fn sig(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    fn rnn_ref(kind: CellKind, x: &Mat, w_ih: &[f64], w_hh: &[f64], b: &[f64], b_hn: &[f64], reverse: bool) -> Mat {
        let (c_in, n) = (x.len(), x[0].len());
        let q = ((w_hh.len() / kind.gates()) as f64).sqrt().round() as usize;
        let mut out = vec![vec![0.0; n]; q];
        let (mut h, mut c) = (vec![0.0; q], vec![0.0; q]);
        let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in order {
            let pre = |j: usize, with_h: bool| {
                let mut s = b[j];
                for i in 0..c_in {
                    s += w_ih[j * c_in + i] * x[i][t];
                }
                if with_h {
                    for kk in 0..q {
                        s += w_hh[j * q + kk] * h[kk];
                    }
                }
                s
            };
            let mut nh = vec![0.0; q];
            for u in 0..q {
                match kind {
                    CellKind::Lstm => {
                        let i = sig(pre(u, true));
                        let f = sig(pre(q + u, true));
                        let gg = pre(2 * q + u, true).tanh();
                        let o = sig(pre(3 * q + u, true));
                        c[u] = f * c[u] + i * gg;
                        nh[u] = o * c[u].tanh();
                    }
                    CellKind::Gru => {
                        let r = sig(pre(u, true));
                        let z = sig(pre(q + u, true));
                        let hn: f64 = (0..q).map(|kk| w_hh[(2 * q + u) * q + kk] * h[kk]).sum::<f64>() + b_hn[u];
                        let nn = (pre(2 * q + u, false) + r * hn).tanh();
                        nh[u] = (1.0 - z) * nn + z * h[u];
                    }
                }
            }
            h = nh;
            for u in 0..q {
                out[u][t] = h[u];
            }
        }
        out
    }

    fn reference_forward(net: &MsTcrNet<f64>, x: &Tensor<f64>) -> Mat {
        let cfg = net.config();
        let (m, t) = (x.dim(0), x.dim(1));
        let (d, c) = (cfg.feature_maps, cfg.num_classes);
        let r = cfg.primary_sampling;
        let xs: Mat = (0..m).map(|i| (0..t).step_by(r).map(|tt| x.get(&[i, tt])).collect()).collect();
        let tw = xs[0].len();
        let mut h = conv_ref(&xs, &param(net, "input.w"), &param(net, "input.b"), d, 1, 1);
        for l in 1..=cfg.num_layers {
            let (d1, d2) = cfg.dilations(l);
            let a = conv_ref(&h, &param(net, &format!("ddrl{l}.conv1.w")), &param(net, &format!("ddrl{l}.conv1.b")), d, 3, d1);
            let b = conv_ref(&h, &param(net, &format!("ddrl{l}.conv2.w")), &param(net, &format!("ddrl{l}.conv2.b")), d, 3, d2);
            let cat: Mat = a.into_iter().chain(b).map(|row| row.into_iter().map(|v| v.max(0.0)).collect()).collect();
            let f = conv_ref(&cat, &param(net, &format!("ddrl{l}.fusion.w")), &param(net, &format!("ddrl{l}.fusion.b")), d, 1, 1);
            for ch in 0..d {
                for tt in 0..tw {
                    h[ch][tt] += f[ch][tt];
                }
            }
        }
        let mut y = softmax_ref(&conv_ref(&h, &param(net, "pg_head.w"), &param(net, "pg_head.b"), c, 1, 1));
        let kind = cfg.variant.cell();
        for s in 0..cfg.num_refinements {
            let k = cfg.secondary_sampling;
            let mut z: Mat = y.iter().map(|row| row.iter().copied().step_by(k).collect()).collect();
            for layer in 0..cfg.rnn_layers {
                let mut both = Vec::new();
                for reverse in [false, true] {
                    let [wi, wh, bb, bh] = rnn_names(s, layer, reverse);
                    let bh = net.params().get(&bh).map(|t| t.data().to_vec()).unwrap_or_default();
                    both.extend(rnn_ref(kind, &z, &param(net, &wi), &param(net, &wh), &param(net, &bb), &bh, reverse));
                }
                z = both;
            }
            let o = softmax_ref(&conv_ref(&z, &param(net, &format!("ref{s}.head.w")), &param(net, &format!("ref{s}.head.b")), c, 1, 1));
            y = o.iter().map(|row| (0..tw).map(|tt| row[tt / k]).collect()).collect();
        }
        y.iter().map(|row| (0..t).map(|tt| row[tt / r]).collect()).collect()
    }

    #[test]
    fn matches_straight_line_reference() {
        for (variant, r, k) in [(Variant::L, 2, 3), (Variant::G, 1, 2)] {
            let cfg = toy(variant, 2, r, k);
            let net = MsTcrNet::<f64>::new(cfg, 11).unwrap();
            let x = random_input(5, 23, 4);
            let got = net.predict(&x).unwrap();
            let want = reference_forward(&net, &x);
            for c in 0..3 {
                for t in 0..23 {
                    assert!((got.get(&[c, t]) - want[c][t]).abs() < 1e-5, "{variant:?} c{c} t{t}");
                }
            }
        }
    }

    #[test]
    fn zero_ddrl_is_identity() {
        let mut g = Graph::<f64>::new();
        let h = g.constant(random_input(4, 16, 1));
        let z = |g: &mut Graph<f64>, s: Vec<usize>| g.constant(Tensor::zeros(s));
        let w = [
            (z(&mut g, vec![4, 4, 3]), z(&mut g, vec![4])),
            (z(&mut g, vec![4, 4, 3]), z(&mut g, vec![4])),
            (z(&mut g, vec![4, 8, 1]), z(&mut g, vec![4])),
        ];
        let out = ddrl_forward(&mut g, h, w, (1, 8), 0.0, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(g.value(out), g.value(h));
    }

    #[test]
    fn ddrl_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut g = Graph::<f64>::new();
        let x = random_input(4, 16, 2);
        let mut mk = |shape: Vec<usize>| Tensor::<f64>::from_fn(shape, |_| rng.random_range(-0.5..0.5));
        let ts = [mk(vec![4, 4, 3]), mk(vec![4]), mk(vec![4, 4, 3]), mk(vec![4]), mk(vec![4, 8, 1]), mk(vec![4])];
        let vars: Vec<Var> = ts.iter().map(|t| g.constant(t.clone())).collect();
        let h = g.constant(x.clone());
        let out = ddrl_forward(
            &mut g,
            h,
            [(vars[0], vars[1]), (vars[2], vars[3]), (vars[4], vars[5])],
            (2, 4),
            0.0,
            false,
            &mut rng,
        )
        .unwrap();
        let xm: Mat = (0..4).map(|i| x.row(i).to_vec()).collect();
        let a = conv_ref(&xm, ts[0].data(), ts[1].data(), 4, 3, 2);
        let b = conv_ref(&xm, ts[2].data(), ts[3].data(), 4, 3, 4);
        let cat: Mat = a.into_iter().chain(b).map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect();
        let f = conv_ref(&cat, ts[4].data(), ts[5].data(), 4, 1, 1);
        for c in 0..4 {
            for t in 0..16 {
                assert!((g.value(out).get(&[c, t]) - (xm[c][t] + f[c][t])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lstm_cell_matches_hand_recurrence() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(vec![1, 3], vec![1.0, -1.0, 2.0]).unwrap());
        let w_ih = g.constant(Tensor::new(vec![4, 1], vec![0.5, -0.3, 0.8, 0.2]).unwrap());
        let w_hh = g.constant(Tensor::new(vec![4, 1], vec![0.1, 0.2, -0.4, 0.3]).unwrap());
        let b = g.constant(Tensor::new(vec![4], vec![0.0, 0.1, 0.0, -0.1]).unwrap());
        let h = g.rnn(CellKind::Lstm, x, w_ih, w_hh, b, None, false).unwrap();
        let want = [0.2054251257636424, -0.008378096567987593, 0.33448224581992075];
        for (got, want) in g.value(h).data().iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn birnn_reverses_symmetrically() {
        for variant in [Variant::L, Variant::G] {
            let mut net = MsTcrNet::<f64>::new(toy(variant, 1, 1, 1), 5).unwrap();
            // Tie the reverse direction to the forward weights; then running on
            // the reversed input must swap the halves and flip time.
            let fwd = rnn_names(0, 0, false);
            let bwd = rnn_names(0, 0, true);
            for (f, b) in fwd.iter().zip(&bwd) {
                if let Some(t) = net.params().get(f).cloned() {
                    net.params_mut().get_mut(b).unwrap().data_mut().copy_from_slice(t.data());
                }
            }
            let x = random_input(3, 9, 6);
            let x_rev = Tensor::from_fn(vec![3, 9], |i| x.get(&[i / 9, 8 - i % 9]));
            let mut g = Graph::new();
            let p = net.params().bind(&mut g);
            let (a, b) = (g.constant(x), g.constant(x_rev));
            let ya = birnn_layer(&mut g, &p, variant.cell(), 0, 0, a).unwrap();
            let yb = birnn_layer(&mut g, &p, variant.cell(), 0, 0, b).unwrap();
            let (ya, yb) = (g.value(ya), g.value(yb));
            assert_eq!(ya.shape(), &[6, 9]);
            for u in 0..3 {
                for t in 0..9 {
                    assert!((yb.get(&[u, t]) - ya.get(&[u + 3, 8 - t])).abs() < 1e-12);
                    assert!((yb.get(&[u + 3, t]) - ya.get(&[u, 8 - t])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_recurrent_weights_give_bias_softmax() {
        let cfg = ModelConfig {
            num_refinements: 1,
            ..toy(Variant::L, 2, 1, 3)
        };
        let mut net = MsTcrNet::<f64>::new(cfg, 2).unwrap();
        let beta = [0.3, -1.0, 2.0];
        for (name, t) in net.params_mut().iter_mut() {
            if name.starts_with("ref0.rnn") || name == "ref0.head.w" {
                t.data_mut().fill(0.0);
            }
            if name == "ref0.head.b" {
                t.data_mut().copy_from_slice(&beta);
            }
        }
        let y = net.predict(&random_input(5, 10, 0)).unwrap();
        let z: f64 = beta.iter().map(|b| b.exp()).sum();
        for t in 0..10 {
            for c in 0..3 {
                assert!((y.get(&[c, t]) - beta[c].exp() / z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn refinement_length_example() {
        let cfg = ModelConfig {
            num_refinements: 1,
            ..toy(Variant::G, 2, 1, 3)
        };
        let net = MsTcrNet::<f64>::new(cfg, 0).unwrap();
        let mut g = Graph::new();
        let p = net.params().bind(&mut g);
        let x = g.constant(random_input(5, 7, 1));
        let out = net.forward(&mut g, &p, x, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(g.shape(out.full), &[3, 7]);
        // The refinement sees frames {0, 3, 6}; frames 0..3 share one output.
        let y = g.value(out.stages[1]);
        for c in 0..3 {
            assert_eq!(y.get(&[c, 0]), y.get(&[c, 2]));
            assert_eq!(y.get(&[c, 3]), y.get(&[c, 5]));
            assert_ne!(y.get(&[c, 2]), y.get(&[c, 3]));
            assert_ne!(y.get(&[c, 5]), y.get(&[c, 6]));
        }
    }

    #[test]
    fn every_parameter_receives_gradient() {
        for variant in [Variant::L, Variant::G] {
            let cfg = ModelConfig {
                num_refinements: 2,
                ..toy(variant, 8, 2, 2)
            };
            let mut net = MsTcrNet::<f64>::new(cfg, 9).unwrap();
            let mut g = Graph::new();
            let p = net.params().bind(&mut g);
            let x = g.constant(random_input(5, 40, 3));
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = net.forward(&mut g, &p, x, false, &mut rng).unwrap();
            assert_eq!(out.heads.len(), 2 + 1 + 2);
            let mut total = None;
            for (i, &h) in out.heads.iter().enumerate() {
                let proj = crate::autodiff::gradcheck::project(&mut g, h, i as u64).unwrap();
                total = Some(match total {
                    None => proj,
                    Some(t) => g.add(t, proj).unwrap(),
                });
            }
            let grads = g.backward(total.unwrap()).unwrap();
            net.params_mut().accumulate_grads(&p, &grads).unwrap();
            for (name, t) in net.params().iter() {
                let g = t.grad().unwrap_or_else(|| panic!("{name} has no gradient"));
                assert!(g.iter().any(|v| *v != 0.0), "{name} gradient is all zero");
            }
        }
    }

    #[test]
    fn class_permutation_commutes() {
        let cfg = ModelConfig {
            num_refinements: 1,
            ..toy(Variant::G, 5, 1, 2)
        };
        let net = MsTcrNet::<f64>::new(cfg, 4).unwrap();
        let perm = [2usize, 0, 1];
        let mut permuted = net.clone();
        for (name, t) in permuted.params_mut().iter_mut() {
            let orig = net.params().get(name).unwrap();
            let is_head = name.starts_with("isr") || name.starts_with("pg_head") || name.contains(".head.");
            if is_head {
                let row = orig.numel() / 3;
                for (new, &old) in perm.iter().enumerate() {
                    t.data_mut()[new * row..(new + 1) * row].copy_from_slice(&orig.data()[old * row..(old + 1) * row]);
                }
            } else if name.starts_with("ref0.rnn0") && name.ends_with("w_ih") {
                let rows = orig.dim(0);
                for j in 0..rows {
                    for (new, &old) in perm.iter().enumerate() {
                        t.data_mut()[j * 3 + new] = orig.data()[j * 3 + old];
                    }
                }
            }
        }
        let x = random_input(5, 12, 2);
        let a = net.predict(&x).unwrap();
        let b = permuted.predict(&x).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            for t in 0..12 {
                assert!((b.get(&[new, t]) - a.get(&[old, t])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn from_params_checks_shapes() {
        let cfg = toy(Variant::L, 3, 1, 1);
        let net = MsTcrNet::<f32>::new(cfg.clone(), 0).unwrap();
        assert!(MsTcrNet::from_params(cfg.clone(), net.params().clone()).is_ok());
        let other = MsTcrNet::<f32>::new(toy(Variant::G, 3, 1, 1), 0).unwrap();
        assert!(MsTcrNet::from_params(cfg, other.params().clone()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn probabilities_close_at_every_head(seed in 0u64..1000, t in 8usize..40) {
            let cfg = ModelConfig { num_refinements: 1, ..toy(Variant::L, 8, 2, 2) };
            let net = MsTcrNet::<f64>::new(cfg, seed).unwrap();
            let mut g = Graph::new();
            let p = net.params().bind(&mut g);
            let x = g.constant(random_input(5, t, seed));
            let out = net.forward(&mut g, &p, x, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for &h in out.heads.iter().chain([&out.full]) {
                let v = g.value(h);
                for tt in 0..v.dim(1) {
                    let s: f64 = (0..3).map(|c| v.get(&[c, tt])).sum();
                    prop_assert!((s - 1.0).abs() <= 1e-6);
                    prop_assert!((0..3).all(|c| v.get(&[c, tt]) > 0.0));
                }
            }
        }
    }
}
