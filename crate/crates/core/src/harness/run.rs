//! Whole experiments over a dataset manifest: every split, every seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, OUTPUT_ROOT_ENV};
use super::report::{evaluate_net, RunReport, SequenceRecord};
use super::train::{prepare, train_model, NamedSequence};
use crate::autodiff::{load_checkpoint, save_checkpoint};
use crate::data::{load_sequence, make_folds, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, MsTcrNet};
use crate::preprocess::ChannelLayout;

/// What a checkpoint records besides its weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub layout: ChannelLayout,
    pub class_names: Vec<String>,
    pub split: String,
    pub selected_epoch: usize,
}

/// Output directory for a run: `explicit` if given, otherwise
/// `$KINSEG_OUTPUT_ROOT/<name>`, otherwise `runs/<name>`.
pub fn output_dir(explicit: Option<&Path>, name: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(name),
    }
}

fn load_ids(manifest: &DatasetManifest, ids: &[String], trim: bool) -> Result<Vec<NamedSequence>> {
    ids.iter()
        .map(|id| {
            let entry = manifest
                .entry(id)
                .ok_or_else(|| Error::invalid(format!("sequence {id} is not in the manifest")))?;
            Ok(NamedSequence::new(id.clone(), prepare(&load_sequence(manifest, entry, trim)?)?))
        })
        .collect()
}

/// Trains and evaluates every (split, seed) pair of `cfg` on `manifest`,
/// writing checkpoints, `events.jsonl`, `results.csv` and `summary.json`
/// into `out`.
///
/// Trainers run in parallel (one per available core) with isolated state;
/// their event logs and records are merged in (split, seed) order, so the
/// outputs do not depend on scheduling.
pub fn run_experiment(cfg: &RunConfig, manifest: &DatasetManifest, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    std::fs::write(out.join("config.kv"), cfg.to_kv()).map_err(|e| Error::io(out, e))?;

    let splits = make_folds(manifest, cfg.folds)?;
    let data = splits
        .iter()
        .map(|s| {
            Ok([
                load_ids(manifest, &s.train, cfg.trim)?,
                load_ids(manifest, &s.val, cfg.trim)?,
                load_ids(manifest, &s.test, cfg.trim)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, u64)> = (0..splits.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&seed| (i, seed)))
        .collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(tasks.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<TaskOutput>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(split, seed)) = tasks.get(i) else { break };
                let result = run_task(cfg, manifest, &splits[split], &data[split], seed, out);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });

    let events_path = out.join("events.jsonl");
    let mut events = BufWriter::new(File::create(&events_path).map_err(|e| Error::io(&events_path, e))?);
    let mut records: Vec<SequenceRecord> = Vec::new();
    for slot in slots {
        let task = slot.into_inner().expect("result slot").expect("every task ran")?;
        events.write_all(&task.events).map_err(|e| Error::io(&events_path, e))?;
        records.extend(task.records);
    }
    events.flush().map_err(|e| Error::io(&events_path, e))?;
    let report = RunReport::new(records, serde_json::to_value(cfg)?, started.elapsed().as_secs_f64())?;
    report.write(out)?;
    Ok(report)
}

struct TaskOutput {
    events: Vec<u8>,
    records: Vec<SequenceRecord>,
}

fn run_task(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    split: &Split,
    [train, val, test]: &[Vec<NamedSequence>; 3],
    seed: u64,
    out: &Path,
) -> Result<TaskOutput> {
    log::info!("split {}: seed {seed}, {} train / {} val / {} test", split.name, train.len(), val.len(), test.len());
    let mut events = Vec::new();
    let outcome = train_model(cfg, manifest.num_classes(), train, val, seed, Some(&mut events))?;
    let meta = CheckpointMeta {
        model: outcome.net.config().clone(),
        layout: manifest.layout,
        class_names: manifest.class_names.clone(),
        split: split.name.clone(),
        selected_epoch: outcome.selected_epoch,
    };
    let ckpt = out.join(format!("{}_seed{seed}.ckpt", split.name));
    save_checkpoint(&ckpt, outcome.net.params(), &serde_json::to_value(&meta)?, seed)?;
    let line = serde_json::json!({
        "event": "checkpoint",
        "split": split.name,
        "seed": seed,
        "epoch": outcome.selected_epoch,
        "digest": outcome.net.params().digest(),
        "augmentations": outcome.counters,
    });
    writeln!(events, "{line}").map_err(|e| Error::io("<events>", e))?;
    let records = evaluate_net(&outcome.net, test, &split.name, seed, None)?;
    Ok(TaskOutput { events, records })
}

/// Scores a saved checkpoint on the manifest sequences `ids`, without
/// augmentation.
pub fn evaluate_checkpoint(checkpoint: &Path, manifest: &DatasetManifest, ids: &[String], trim: bool) -> Result<RunReport> {
    if ids.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    let started = Instant::now();
    let (header, params) = load_checkpoint(checkpoint)?;
    let meta: CheckpointMeta = serde_json::from_value(header.config.clone())?;
    if meta.layout != manifest.layout || meta.model.input_dim != manifest.layout.width() {
        return Err(Error::Checkpoint(format!(
            "checkpoint expects layout {:?}, manifest has {:?}",
            meta.layout, manifest.layout
        )));
    }
    if meta.class_names != manifest.class_names {
        return Err(Error::Checkpoint("checkpoint and manifest disagree on the class list".into()));
    }
    let net = MsTcrNet::from_params(meta.model.clone(), params)?;
    let seqs = load_ids(manifest, ids, trim)?;
    let records = evaluate_net(&net, &seqs, &meta.split, header.seed, None)?;
    RunReport::new(records, header.config, started.elapsed().as_secs_f64())
}
