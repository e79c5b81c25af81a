//! The full finite-difference suite: every autodiff operation, then whole
//! toy networks of both variants trained against the summed loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::{check_gradients, op_suite, GradCheckReport};
use crate::autodiff::{BoundParams, Tensor};
use crate::error::Result;
use crate::loss::{downsample_labels, total_loss, LossConfig};
use crate::model::{ModelConfig, MsTcrNet, Variant};

/// Tolerance for whole-model checks.
pub const END_TO_END_TOLERANCE: f64 = 1e-3;

/// A network small enough to difference exhaustively yet with an
/// intermediate head, subsampling on both levels and a refinement stage.
pub fn toy_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        num_layers: 5,
        feature_maps: 3,
        pg_dropout: 0.0,
        num_refinements: 1,
        rnn_layers: 2,
        rnn_hidden: 2,
        rnn_dropout: 0.0,
        primary_sampling: 2,
        secondary_sampling: 2,
        ..ModelConfig::for_variant(variant, 3, 3)
    }
}

/// Checks gradients of the summed loss of a toy network w.r.t. every
/// parameter.
pub fn end_to_end(variant: Variant, seed: u64) -> Result<GradCheckReport> {
    let cfg = toy_config(variant);
    let net = MsTcrNet::<f64>::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let len = 13;
    let x = Tensor::from_fn(vec![cfg.input_dim, len], |_| rng.random_range(-1.5..1.5));
    let labels: Vec<usize> = (0..len).map(|t| (t / 4) % cfg.num_classes).collect();
    let work = downsample_labels(&labels, cfg.primary_sampling);
    let loss_cfg = LossConfig::new(variant.default_lambda());

    let names: Vec<String> = net.params().iter().map(|(n, _)| n.to_string()).collect();
    let mut inputs: Vec<Tensor<f64>> = net.params().iter().map(|(_, t)| t.clone()).collect();
    inputs.push(x);
    check_gradients(&format!("end-to-end {variant:?}"), &inputs, END_TO_END_TOLERANCE, |g, vars| {
        let (params, input) = vars.split_at(names.len());
        let p = BoundParams::from_pairs(names.iter().cloned().zip(params.iter().copied()));
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let out = net.forward(g, &p, input[0], false, &mut unused)?;
        let pairs: Vec<_> = out.heads.iter().map(|&h| (h, work.as_slice())).collect();
        total_loss(g, &pairs, &loss_cfg)
    })
}

/// Every operation check followed by both end-to-end checks.
pub fn full_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut reports = op_suite(seed)?;
    reports.push(end_to_end(Variant::L, seed)?);
    reports.push(end_to_end(Variant::G, seed)?);
    Ok(reports)
}
