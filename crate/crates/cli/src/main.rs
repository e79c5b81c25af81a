//! Command-line front end: training, evaluation, augmentation, synthetic
//! data, standalone preprocessing and the gradient check.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kinseg::autodiff::load_checkpoint;
use kinseg::data::{
    load_all, make_folds, write_like, write_synth_dataset, DatasetManifest, FoldStrategy, SynthSpec,
};
use kinseg::harness::{
    evaluate_checkpoint, output_dir, prepare, run_experiment, AugConfig, Augmenter, CheckpointMeta, RunConfig,
};
use kinseg::preprocess::features;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "kinseg", version, about = "Action segmentation for multi-sensor kinematic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and test over every fold and seed of a dataset.
    Train(TrainArgs),
    /// Score a saved checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Write an augmented copy of a dataset.
    Augment(AugmentArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Run filtering, velocities and standardization and write the features.
    Preprocess(PreprocessArgs),
    /// Finite-difference check of every operator and of both toy networks.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Key-value run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Configuration override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (defaults to `$KINSEG_OUTPUT_ROOT/<run name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run name used when `--out` is absent.
    #[arg(long, default_value = "run")]
    name: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated sequence ids; defaults to the test set of the
    /// checkpoint's split under `--folds`.
    #[arg(long, value_delimiter = ',')]
    sequences: Vec<String>,
    #[arg(long, default_value = "kfold5")]
    folds: String,
    /// Drop leading and trailing unlabeled frames.
    #[arg(long)]
    trim: bool,
    /// Directory for results.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7.0)]
    wfr_theta_max: f64,
    #[arg(long, default_value_t = 1.0)]
    wfr_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    hi_prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long)]
    sequences: Option<usize>,
    /// Full generator specification (JSON); `--seed` and `--classes` are
    /// then ignored.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of participant folds recorded in the manifest.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trim: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn train(args: TrainArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("")?,
    };
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("override {kv:?} is not key=value"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let out = output_dir(args.out.as_deref(), &args.name);
    let report = run_experiment(&cfg, &manifest, &out)?;
    print_summary(&report);
    println!("outputs written to {}", out.display());
    Ok(())
}

fn print_summary(report: &kinseg::harness::RunReport) {
    for (name, a) in &report.aggregates {
        println!("{name:>9}: {:7.2} ± {:.2}", a.mean, a.std);
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let ids = if args.sequences.is_empty() {
        let (header, _) = load_checkpoint(&args.checkpoint)?;
        let meta: CheckpointMeta = serde_json::from_value(header.config)?;
        let strategy: FoldStrategy = args.folds.parse()?;
        let split = make_folds(&manifest, strategy)?
            .into_iter()
            .find(|s| s.name == meta.split)
            .with_context(|| format!("split {} does not exist under {}", meta.split, args.folds))?;
        split.test
    } else {
        args.sequences
    };
    let report = evaluate_checkpoint(&args.checkpoint, &manifest, &ids, args.trim)?;
    print_summary(&report);
    if let Some(out) = &args.out {
        report.write(out)?;
    }
    Ok(())
}

fn augment(args: AugmentArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let cfg = AugConfig {
        wfr_prob: args.wfr_prob,
        theta_max: args.wfr_theta_max,
        hi_prob: args.hi_prob,
    };
    let mut check = RunConfig::parse("")?;
    check.aug = cfg;
    check.validate()?;
    let mut aug = Augmenter::new(cfg, manifest.layout.default_hands());
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let loaded = load_all(&manifest, false)?;
    let out: Vec<_> = loaded
        .iter()
        .map(|l| aug.apply(&l.entry.id, &l.seq, &mut rng))
        .collect::<kinseg::Result<_>>()?;
    write_like(&manifest, &args.out, &out)?;
    let c = aug.counters();
    println!(
        "{} sequences: {} rotated, {} mirrored, {} mirror draws skipped",
        out.len(),
        c.wfr_applied,
        c.hi_applied,
        c.hi_skipped
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthSpec::with_classes(args.classes, args.seed),
    };
    if let Some(n) = args.sequences {
        spec.sequences = n;
    }
    let manifest = write_synth_dataset(&args.out, &spec, args.folds)?;
    println!("wrote {} sequences to {}", manifest.sequences.len(), args.out.display());
    Ok(())
}

fn preprocess(args: PreprocessArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for l in load_all(&manifest, args.trim)? {
        let f = features(&prepare(&l.seq)?)?;
        let mut text = (0..f.dim()).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",");
        text.push_str(",label\n");
        for (t, label) in f.labels().iter().enumerate() {
            for v in &f.data()[t * f.dim()..(t + 1) * f.dim()] {
                text.push_str(&format!("{v},"));
            }
            text.push_str(&format!("{}\n", manifest.class_names[*label]));
        }
        let path = args.out.join(format!("{}.csv", l.entry.id));
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("wrote {} feature files to {}", manifest.sequences.len(), args.out.display());
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<()> {
    let reports = kinseg::harness::gradcheck::full_suite(args.seed)?;
    let mut failed = 0;
    for r in &reports {
        let verdict = if r.passed() { "ok" } else { "FAILED" };
        println!("{:<28} {:>6} entries  max rel err {:.3e} (tol {:.0e})  {verdict}", r.name, r.checked, r.max_rel_error, r.tolerance);
        failed += usize::from(!r.passed());
    }
    if failed > 0 {
        bail!("{failed} of {} gradient checks failed", reports.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Augment(a) => augment(a),
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
