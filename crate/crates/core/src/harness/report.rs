//! Per-sequence evaluation records, their aggregates and on-disk renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{input_tensor, NamedSequence};
use crate::error::{Error, Result};
use crate::metrics::{mean_std, SequenceScores};
use crate::model::MsTcrNet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub fold: String,
    pub seed: u64,
    pub sequence: String,
    #[serde(flatten)]
    pub scores: SequenceScores,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<SequenceRecord>,
    /// Mean and population std of every metric over all records.
    pub aggregates: BTreeMap<String, Aggregate>,
    pub config: serde_json::Value,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn new(records: Vec<SequenceRecord>, config: serde_json::Value, wall_clock_s: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("a report needs at least one evaluated sequence"));
        }
        let aggregates = aggregate(&records);
        Ok(RunReport {
            records,
            aggregates,
            config,
            wall_clock_s,
        })
    }

    pub fn mean(&self, metric: &str) -> f64 {
        self.aggregates.get(metric).map_or(f64::NAN, |a| a.mean)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per sequence and seed.
    pub fn results_csv(&self) -> String {
        let mut out = format!("fold,seed,sequence,{}\n", SequenceScores::NAMES.join(","));
        for r in &self.records {
            let vals: Vec<String> = r.scores.values().iter().map(|v| format!("{v:.4}")).collect();
            writeln!(out, "{},{},{},{}", r.fold, r.seed, r.sequence, vals.join(",")).expect("writing to a String");
        }
        out
    }

    /// Writes `results.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("results.csv");
        std::fs::write(&csv, self.results_csv()).map_err(|e| Error::io(&csv, e))?;
        let summary = dir.join("summary.json");
        std::fs::write(&summary, self.to_json()? + "\n").map_err(|e| Error::io(&summary, e))
    }
}

fn aggregate(records: &[SequenceRecord]) -> BTreeMap<String, Aggregate> {
    SequenceScores::NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let xs: Vec<f64> = records.iter().map(|r| r.scores.values()[k]).collect();
            let (mean, std) = mean_std(&xs);
            (name.to_string(), Aggregate { mean, std })
        })
        .collect()
}

/// Frame labels of every stage (generator first) for one sequence.
pub fn predict_stage_labels(net: &MsTcrNet<f32>, seq: &NamedSequence) -> Result<Vec<Vec<usize>>> {
    let x = input_tensor(&seq.seq)?;
    Ok(net.predict_stages(&x)?.iter().map(|p| p.argmax_axis0()).collect())
}

/// Scores the final stage on `seqs`, without augmentation.
pub fn evaluate_net(
    net: &MsTcrNet<f32>,
    seqs: &[NamedSequence],
    fold: &str,
    seed: u64,
    exclude: Option<usize>,
) -> Result<Vec<SequenceRecord>> {
    if seqs.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    let c = net.config().num_classes;
    seqs.iter()
        .map(|s| {
            let x = input_tensor(&s.seq)?;
            let pred = net.predict(&x)?.argmax_axis0();
            Ok(SequenceRecord {
                fold: fold.to_string(),
                seed,
                sequence: s.id.clone(),
                scores: SequenceScores::compute(&pred, s.seq.labels(), c, exclude)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seq: &str, acc: f64) -> SequenceRecord {
        SequenceRecord {
            fold: "fold0".into(),
            seed: 1,
            sequence: seq.into(),
            scores: SequenceScores {
                accuracy: acc,
                macro_f1: 50.0,
                edit: 70.25,
                f1_10: 1.0 / 3.0,
                f1_25: 0.0,
                f1_50: 100.0,
            },
        }
    }

    #[test]
    fn aggregates_are_recomputable_and_json_is_a_fixpoint() {
        let report = RunReport::new(
            vec![record("a", 80.0), record("b", 90.0)],
            serde_json::json!({"lr": 0.001}),
            1.5,
        )
        .unwrap();
        assert_eq!(report.aggregates["accuracy"], Aggregate { mean: 85.0, std: 5.0 });
        assert_eq!(report.aggregates, aggregate(&report.records));
        let text = report.to_json().unwrap();
        let back = RunReport::from_json(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn empty_reports_are_rejected() {
        assert!(RunReport::new(vec![], serde_json::Value::Null, 0.0).is_err());
    }

    #[test]
    fn csv_has_one_row_per_record() {
        let report = RunReport::new(vec![record("a", 80.0), record("b", 90.0)], serde_json::Value::Null, 0.0).unwrap();
        let csv = report.results_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "fold,seed,sequence,accuracy,macro_f1,edit,f1_10,f1_25,f1_50");
        assert_eq!(lines[1], "fold0,1,a,80.0000,50.0000,70.2500,0.3333,0.0000,100.0000");
        assert_eq!(lines.len(), 3);
    }
}
