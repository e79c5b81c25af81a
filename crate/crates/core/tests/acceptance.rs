//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::Instant;

use kinseg::autodiff::gradcheck::OP_TOLERANCE;
use kinseg::data::{synth_generate, ActiveHand, ClassSpec, SynthSpec};
use kinseg::geometry::{
    reflect_with_line, reflection_3d, rotate_world, world_frame_rotation, ReflectionLine,
};
use kinseg::harness::gradcheck::{full_suite, END_TO_END_TOLERANCE};
use kinseg::harness::{
    input_tensor, predict, predict_stage_labels, train_model, AugConfig, NamedSequence, RunConfig, Selection,
};
use kinseg::metrics::{edit_score, f1_at_k, frame_accuracy, macro_f1, mean_std, run_length, SequenceScores};
use kinseg::model::{ModelConfig, MsTcrNet, Variant, ISR_CANDIDATES};
use kinseg::preprocess::{FirFilter, SensorSequence};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn named(seqs: Vec<SensorSequence>, prefix: &str) -> Vec<NamedSequence> {
    seqs.into_iter()
        .enumerate()
        .map(|(i, s)| NamedSequence::new(format!("{prefix}{i}"), s))
        .collect()
}

/// The reduced network used by every training witness.
fn reduced_config(epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::for_variant(Variant::L);
    cfg.model.num_layers = 6;
    cfg.model.feature_maps = 64;
    cfg.model.num_refinements = 1;
    cfg.epochs = epochs;
    cfg.selection = Selection::FinalEpoch;
    cfg
}

fn test_accuracy(cfg: &RunConfig, train: &[NamedSequence], test: &[NamedSequence], classes: usize) -> f64 {
    let out = train_model(cfg, classes, train, &[], 0, None).expect("training");
    let accs: Vec<f64> = test
        .iter()
        .map(|s| {
            let pred = predict(&out.net, &input_tensor(&s.seq).unwrap()).unwrap();
            frame_accuracy(&pred, s.seq.labels()).unwrap()
        })
        .collect();
    mean_std(&accs).0
}

fn gradient_integrity() -> Outcome {
    let reports = full_suite(0).expect("gradient check");
    let (e2e, ops): (Vec<_>, Vec<_>) = reports.iter().partition(|r| r.tolerance == END_TO_END_TOLERANCE);
    let worst = |rs: &[&kinseg::autodiff::gradcheck::GradCheckReport]| {
        rs.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    };
    let (w_ops, w_e2e) = (worst(&ops), worst(&e2e));
    let pass = !ops.is_empty() && e2e.len() == 2 && w_ops < OP_TOLERANCE && w_e2e < END_TO_END_TOLERANCE;
    outcome(
        pass,
        format!("{} op checks max rel err {w_ops:.2e} (< 1e-4), end-to-end L/G max {w_e2e:.2e} (< 1e-3)", ops.len()),
    )
}

fn parameter_counts() -> Outcome {
    let count = |v| MsTcrNet::<f32>::new(ModelConfig::for_variant(v, 36, 6), 0).unwrap().num_parameters() as f64;
    let (l, g) = (count(Variant::L), count(Variant::G));
    let (dl, dg) = ((l - 6.3e6).abs() / 6.3e6, (g - 8.4e6).abs() / 8.4e6);
    outcome(
        dl <= 0.02 && dg <= 0.02,
        format!("L {l} ({:+.2}% of 6.3M), G {g} ({:+.2}% of 8.4M)", 100.0 * (l / 6.3e6 - 1.0), 100.0 * (g / 8.4e6 - 1.0)),
    )
}

fn overfit_witness() -> Outcome {
    let mut spec = SynthSpec::with_classes(3, 1);
    spec.sequences = 5;
    let data = named(synth_generate(&spec).unwrap(), "s");
    let cfg = reduced_config(150);
    let out = train_model(&cfg, 3, &data, &data, 0, None).expect("training");
    let hit = out
        .history
        .iter()
        .find(|h| h.val_accuracy.unwrap() >= 99.0 && h.val_edit.unwrap() >= 95.0);
    match hit {
        Some(h) => outcome(
            true,
            format!(
                "epoch {}: train accuracy {:.2}, train edit {:.2}",
                h.epoch,
                h.val_accuracy.unwrap(),
                h.val_edit.unwrap()
            ),
        ),
        None => {
            let best = out.history.iter().map(|h| h.val_accuracy.unwrap()).fold(0.0, f64::max);
            outcome(false, format!("no epoch reached 99/95; best train accuracy {best:.2}"))
        }
    }
}

/// Noisy task with pauses: the generator alone fragments segments.
fn generalization_spec(seed: u64, sequences: usize) -> SynthSpec {
    let mut s = SynthSpec::with_classes(3, seed);
    s.noise_std = 3.0;
    s.jitter = 0.3;
    s.pause_rate_hz = 0.3;
    s.sequences = sequences;
    s
}

fn generalization_witness() -> Outcome {
    let train = named(synth_generate(&generalization_spec(11, 30)).unwrap(), "tr");
    let test = named(synth_generate(&generalization_spec(12, 10)).unwrap(), "te");
    let out = train_model(&reduced_config(40), 3, &train, &[], 0, None).expect("training");
    let mut acc = Vec::new();
    let (mut pg_edit, mut final_edit) = (Vec::new(), Vec::new());
    for s in &test {
        let stages = predict_stage_labels(&out.net, s).unwrap();
        let score = |p: &[usize]| SequenceScores::compute(p, s.seq.labels(), 3, None).unwrap();
        let (pg, last) = (score(&stages[0]), score(stages.last().unwrap()));
        acc.push(last.accuracy);
        pg_edit.push(pg.edit);
        final_edit.push(last.edit);
    }
    let (acc, pg, fin) = (mean_std(&acc).0, mean_std(&pg_edit).0, mean_std(&final_edit).0);
    outcome(
        acc >= 90.0 && fin - pg >= 5.0,
        format!("test accuracy {acc:.2}, edit generator-only {pg:.2} -> refined {fin:.2} ({:+.2})", fin - pg),
    )
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest change in any inter-sensor distance, with sensor `i` of `a`
/// corresponding to sensor `perm[i]` of `b`.
fn pairwise_distance_drift(a: &SensorSequence, b: &SensorSequence, perm: &[usize]) -> f64 {
    let n = a.layout().sensors();
    let dist = |q: &SensorSequence, t, i, j| (Vector3::from(q.position(t, i)) - Vector3::from(q.position(t, j))).norm();
    let mut worst: f64 = 0.0;
    for t in 0..a.len() {
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((dist(a, t, i, j) - dist(b, t, perm[i], perm[j])).abs());
            }
        }
    }
    worst
}

fn positions(q: &SensorSequence) -> Vec<f64> {
    (0..q.len())
        .flat_map(|t| (0..q.layout().sensors()).flat_map(move |s| q.position(t, s)))
        .collect()
}

fn augmentation_invariants() -> Outcome {
    let mut spec = SynthSpec::with_classes(3, 7);
    spec.sequences = 4;
    spec.t_min = 200;
    spec.t_max = 260;
    let seqs = synth_generate(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut iso, mut ident, mut z, mut invol, mut det) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for seq in &seqs {
        let hands = seq.layout().default_hands();
        let mut swap: Vec<usize> = (0..seq.layout().sensors()).collect();
        for (&l, &r) in hands.left.iter().zip(&hands.right) {
            swap.swap(l, r);
        }
        let identity: Vec<usize> = (0..seq.layout().sensors()).collect();
        let w = world_frame_rotation(seq, 15.0, &mut rng).unwrap();
        iso = iso.max(pairwise_distance_drift(seq, &w, &identity));
        let same = world_frame_rotation(seq, 0.0, &mut rng).unwrap();
        ident = ident.max(max_abs_diff(seq.channels(), same.channels()));

        let line = ReflectionLine::new(rng.random_range(-0.5..0.5), rng.random_range(-20.0..20.0));
        let m = reflect_with_line(seq, &line, &hands).unwrap();
        iso = iso.max(pairwise_distance_drift(seq, &m, &swap));
        for t in 0..seq.len() {
            for (&l, &r) in hands.left.iter().zip(&hands.right) {
                z = z.max((m.position(t, l)[2] - seq.position(t, r)[2]).abs());
                z = z.max((m.position(t, r)[2] - seq.position(t, l)[2]).abs());
            }
        }
        let back = reflect_with_line(&m, &line, &hands).unwrap();
        invol = invol.max(max_abs_diff(&positions(seq), &positions(&back)));
        det = det.max((reflection_3d(line.phi).determinant() + 1.0).abs());
    }
    let pass = iso <= 1e-6 && ident == 0.0 && z <= 1e-9 && invol <= 1e-6 && det < 1e-12;
    outcome(
        pass,
        format!(
            "isometry drift {iso:.1e}, theta=0 diff {ident:.1e}, z diff {z:.1e}, involution {invol:.1e}, |det+1| {det:.1e}"
        ),
    )
}

/// Two right-hand gestures 10 degrees apart in the horizontal plane with
/// slightly different frequencies: direction is the easy cue, frequency the
/// rotation-invariant one.
fn rotation_spec(seed: u64, sequences: usize) -> SynthSpec {
    let mut s = SynthSpec::with_classes(3, seed);
    let sep = 10f64.to_radians();
    let gesture = |name: &str, freq_hz: f64, axis: [f64; 3]| ClassSpec {
        name: name.into(),
        mean_duration: 180.0,
        freq_hz,
        amplitude_mm: 15.0,
        axis,
        angular_rate_deg_s: 0.0,
        hand: ActiveHand::Right,
    };
    s.classes.truncate(1);
    s.classes.push(gesture("g1", 2.0, [1.0, 0.0, 0.0]));
    s.classes.push(gesture("g2", 2.5, [sep.cos(), sep.sin(), 0.0]));
    s.noise_std = 1.0;
    s.sequences = sequences;
    s
}

fn wfr_witness() -> Outcome {
    let train = named(synth_generate(&rotation_spec(21, 30)).unwrap(), "tr");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rotated: Vec<SensorSequence> = synth_generate(&rotation_spec(22, 10))
        .unwrap()
        .iter()
        .map(|s| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let angle = sign * rng.random_range(10.0f64..15.0).to_radians();
            let yaw = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
            rotate_world(s, yaw.matrix())
        })
        .collect();
    let test = named(rotated, "te");
    let plain = reduced_config(20);
    let mut aug = plain.clone();
    aug.aug = AugConfig { wfr_prob: 1.0, theta_max: 7.0, hi_prob: 0.0 };
    let (without, with) = (test_accuracy(&plain, &train, &test, 3), test_accuracy(&aug, &train, &test, 3));
    outcome(
        with - without >= 3.0,
        format!("rotated test accuracy {without:.2} without WFR -> {with:.2} with ({:+.2})", with - without),
    )
}

fn hi_witness() -> Outcome {
    let spec = |seed, sequences| {
        let mut s = SynthSpec::with_classes(3, seed);
        s.noise_std = 1.0;
        s.sequences = sequences;
        s
    };
    let train = named(synth_generate(&spec(31, 30)).unwrap(), "tr");
    let mirrored: Vec<SensorSequence> = synth_generate(&spec(32, 10))
        .unwrap()
        .iter()
        .map(|s| reflect_with_line(s, &ReflectionLine::new(0.0, 0.0), &s.layout().default_hands()).unwrap())
        .collect();
    let test = named(mirrored, "te");
    let plain = reduced_config(20);
    let mut aug = plain.clone();
    aug.aug = AugConfig { wfr_prob: 0.0, theta_max: 0.0, hi_prob: 0.5 };
    let (without, with) = (test_accuracy(&plain, &train, &test, 3), test_accuracy(&aug, &train, &test, 3));
    outcome(
        with - without >= 10.0,
        format!("mirrored test accuracy {without:.2} without HI -> {with:.2} with ({:+.2})", with - without),
    )
}

/// Full-matrix Levenshtein distance, written independently of the library.
fn levenshtein_oracle(a: &[usize], b: &[usize]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn random_labels(rng: &mut ChaCha8Rng, len: usize, classes: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let label = rng.random_range(0..classes);
        let run = rng.random_range(1..12).min(len - out.len());
        out.extend(std::iter::repeat_n(label, run));
    }
    out
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..120);
        let classes = rng.random_range(2..6);
        let (p, g) = (random_labels(&mut rng, len, classes), random_labels(&mut rng, len, classes));
        let (ps, gs) = (run_length(&p), run_length(&g));
        let (pl, gl): (Vec<usize>, Vec<usize>) = (ps.iter().map(|s| s.label).collect(), gs.iter().map(|s| s.label).collect());
        let edit = 100.0 * (1.0 - levenshtein_oracle(&pl, &gl) as f64 / pl.len().max(gl.len()) as f64);
        if edit_score(&ps, &gs) != edit {
            mismatches += 1;
        }
        let hits = p.iter().zip(&g).filter(|(a, b)| a == b).count();
        if (frame_accuracy(&p, &g).unwrap() - 100.0 * hits as f64 / len as f64).abs() > 1e-9 {
            mismatches += 1;
        }
        let mut f1s = Vec::new();
        for c in 0..classes {
            let tp = p.iter().zip(&g).filter(|&(&a, &b)| a == c && b == c).count() as f64;
            let fp = p.iter().zip(&g).filter(|&(&a, &b)| a == c && b != c).count() as f64;
            let fn_ = p.iter().zip(&g).filter(|&(&a, &b)| a != c && b == c).count() as f64;
            if tp + fp + fn_ > 0.0 {
                f1s.push(2.0 * tp / (2.0 * tp + fp + fn_));
            }
        }
        let oracle = 100.0 * f1s.iter().sum::<f64>() / f1s.len() as f64;
        if (macro_f1(&p, &g, classes, None).unwrap() - oracle).abs() > 1e-9 {
            mismatches += 1;
        }
    }

    // Hand-computed segmental F1 fixtures. In the first, the single gesture
    // overlaps its ground truth with IoU exactly 0.5.
    let segs = |v: &[(usize, usize)]| run_length(&v.iter().flat_map(|&(l, n)| std::iter::repeat_n(l, n)).collect::<Vec<_>>());
    let fixtures = [
        (segs(&[(1, 5), (0, 5)]), segs(&[(1, 10)]), 50.0, 200.0 / 3.0),
        (segs(&[(1, 4), (0, 6)]), segs(&[(1, 10)]), 50.0, 0.0),
        (segs(&[(1, 4), (0, 6)]), segs(&[(1, 10)]), 25.0, 200.0 / 3.0),
        (segs(&[(0, 3), (1, 6), (2, 3)]), segs(&[(0, 4), (1, 4), (2, 4)]), 50.0, 100.0),
        (segs(&[(0, 3), (1, 6), (2, 3)]), segs(&[(0, 4), (1, 4), (2, 4)]), 70.0, 200.0 / 3.0),
    ];
    let fixture_misses = fixtures
        .iter()
        .filter(|(p, g, k, want)| (f1_at_k(p, g, *k) - want).abs() > 1e-9)
        .count();
    outcome(
        mismatches == 0 && fixture_misses == 0,
        format!("1000 random pairs: {mismatches} oracle mismatches; F1@k fixtures: {fixture_misses} of {} wrong", fixtures.len()),
    )
}

fn dilation_structure() -> Outcome {
    let mut bad = Vec::new();
    for layers in [7usize, 11, 13] {
        let cfg = ModelConfig { num_layers: layers, ..ModelConfig::l_variant(36, 6) };
        for l in 1..=layers {
            if cfg.dilations(l) != (1 << (l - 1), 1 << (layers - l)) {
                bad.push(format!("L={layers} layer {l}"));
            }
        }
        let want: Vec<usize> = ISR_CANDIDATES.iter().copied().filter(|&i| i < layers).collect();
        if cfg.isr_layers() != want || want.iter().any(|i| ![4, 7, 10].contains(i)) {
            bad.push(format!("L={layers} heads {:?}", cfg.isr_layers()));
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { "L in {7, 11, 13} all match".to_string() } else { bad.join(", ") })
}

fn length_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();
    for case in 0..500 {
        let t = rng.random_range(1..=400);
        let (r, k) = (rng.random_range(1..=6), rng.random_range(1..=8));
        let variant = if rng.random::<bool>() { Variant::L } else { Variant::G };
        let cfg = ModelConfig {
            num_layers: 4,
            feature_maps: 4,
            rnn_layers: 1,
            rnn_hidden: 3,
            primary_sampling: r,
            secondary_sampling: k,
            ..ModelConfig::for_variant(variant, 4, 3)
        };
        let net = MsTcrNet::<f32>::new(cfg, case).unwrap();
        let x = kinseg::autodiff::Tensor::from_fn(vec![4, t], |_| rng.random_range(-1.0f32..1.0));
        let stages = net.predict_stages(&x).unwrap();
        if stages.iter().any(|p| p.shape() != [3, t]) {
            failures.push(format!("(T={t}, r={r}, k={k})"));
        }
    }
    outcome(failures.is_empty(), format!("500 cases, {} length mismatches {}", failures.len(), failures.join(" ")))
}

/// Steady-state amplitude of a unit sinusoid after filtering at 100 Hz.
fn probe_amplitude(f: &FirFilter, freq: f64) -> f64 {
    let rate = 100.0;
    let x: Vec<f64> = (0..4000).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin()).collect();
    let y = f.apply(&x);
    let mid = &y[500..3500];
    (2.0 * mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt()
}

fn fir_compliance() -> Outcome {
    let f = FirFilter::lowpass(100.0).unwrap();
    let pass_db = 20.0 * probe_amplitude(&f, 2.0).log10();
    let stop_db = 20.0 * probe_amplitude(&f, 20.0).log10();
    outcome(
        pass_db.abs() <= 3.91 && stop_db <= -33.5,
        format!("2 Hz probe {pass_db:+.4} dB (|.| <= 3.91), 20 Hz probe {stop_db:.2} dB (<= -33.5)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient integrity", gradient_integrity),
        ("parameter counts", parameter_counts),
        ("overfit witness", overfit_witness),
        ("generalization witness", generalization_witness),
        ("augmentation invariants", augmentation_invariants),
        ("augmentation efficacy", || {
            let (w, h) = (wfr_witness(), hi_witness());
            outcome(w.pass && h.pass, format!("{}; {}", w.detail, h.detail))
        }),
        ("metric oracles", metric_oracles),
        ("dilation and head structure", dilation_structure),
        ("length contract fuzz", length_fuzz),
        ("FIR band compliance", fir_compliance),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {:>2} {name}: {} ({}; {secs:.1} s)", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
