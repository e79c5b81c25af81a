//! Dataset manifests, sequence files, participant folds and the synthetic
//! procedure generator.

mod folds;
mod io;
mod manifest;
mod synth;

use std::path::Path;

pub use folds::{make_folds, FoldStrategy, Split};
pub use io::{
    load_sequence, read_jigsaws_rows, read_labels, read_sequence_csv, resolve_labels, write_labels,
    write_sequence_csv,
};
pub use manifest::{DatasetManifest, SequenceEntry, SequenceFormat};
pub use synth::{synth_generate, synth_sequence, ActiveHand, ClassSpec, SynthSpec, DURATION_RATE_HZ};

use crate::error::{Error, Result};
use crate::preprocess::SensorSequence;

/// A manifest entry together with its loaded sequence.
#[derive(Clone, Debug)]
pub struct LoadedSequence {
    pub entry: SequenceEntry,
    pub seq: SensorSequence,
}

/// Loads every sequence of `manifest`, in manifest order.
pub fn load_all(manifest: &DatasetManifest, trim: bool) -> Result<Vec<LoadedSequence>> {
    manifest
        .sequences
        .iter()
        .map(|e| {
            Ok(LoadedSequence {
                entry: e.clone(),
                seq: load_sequence(manifest, e, trim)?,
            })
        })
        .collect()
}

/// Writes `sequences` as CSV + label files under `dir` together with a
/// `manifest.json`. Sequence `i` is `seq{i:03}`; `participant_of(i)` names
/// its participant and the participant's index modulo `folds` its fold.
pub fn write_dataset(
    dir: &Path,
    name: &str,
    class_names: &[String],
    sequences: &[SensorSequence],
    participants: &dyn Fn(usize) -> usize,
    folds: usize,
) -> Result<DatasetManifest> {
    let first = sequences.first().ok_or_else(|| Error::invalid("no sequences to write"))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(sequences.len());
    for (i, seq) in sequences.iter().enumerate() {
        if seq.layout() != first.layout() {
            return Err(Error::invalid("sequences of one dataset must share a layout"));
        }
        let id = format!("seq{i:03}");
        let entry = SequenceEntry {
            path: format!("{id}.csv").into(),
            labels: format!("{id}.txt").into(),
            participant: format!("p{:02}", participants(i)),
            fold: (folds > 0).then(|| participants(i) % folds),
            format: SequenceFormat::Csv,
            rate_hz: (seq.rate_hz() != first.rate_hz()).then(|| seq.rate_hz()),
            id,
        };
        write_sequence_csv(&dir.join(&entry.path), seq)?;
        write_labels(&dir.join(&entry.labels), seq.labels(), class_names)?;
        entries.push(entry);
    }
    let manifest = DatasetManifest {
        name: name.into(),
        layout: first.layout(),
        rate_hz: first.rate_hz(),
        class_names: class_names.to_vec(),
        sequences: entries,
        root: dir.to_path_buf(),
    };
    manifest.validate()?;
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Writes `sequences` (one per entry of `source`, in order) under `dir` as
/// CSV files, keeping every id, participant and fold of `source`.
pub fn write_like(source: &DatasetManifest, dir: &Path, sequences: &[SensorSequence]) -> Result<DatasetManifest> {
    if sequences.len() != source.sequences.len() {
        return Err(Error::invalid(format!(
            "{} sequences for a manifest of {}",
            sequences.len(),
            source.sequences.len()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(sequences.len());
    for (entry, seq) in source.sequences.iter().zip(sequences) {
        let out = SequenceEntry {
            path: format!("{}.csv", entry.id).into(),
            labels: format!("{}.txt", entry.id).into(),
            format: SequenceFormat::Csv,
            rate_hz: (seq.rate_hz() != source.rate_hz).then(|| seq.rate_hz()),
            ..entry.clone()
        };
        write_sequence_csv(&dir.join(&out.path), seq)?;
        write_labels(&dir.join(&out.labels), seq.labels(), &source.class_names)?;
        entries.push(out);
    }
    let manifest = DatasetManifest {
        sequences: entries,
        root: dir.to_path_buf(),
        ..source.clone()
    };
    manifest.validate()?;
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Generates `spec` and writes it with two sequences per participant.
pub fn write_synth_dataset(dir: &Path, spec: &SynthSpec, folds: usize) -> Result<DatasetManifest> {
    let sequences = synth_generate(spec)?;
    let manifest = write_dataset(dir, "synthetic", &spec.class_names(), &sequences, &|i| i / 2, folds)?;
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(spec)? + "\n").map_err(|e| Error::io(&spec_path, e))?;
    Ok(manifest)
}
