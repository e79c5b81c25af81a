//! Frame-wise and segmental scores, all reported as percentages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A maximal run of one label, `start..=end` in frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn frames(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Run-length encoding of a label sequence.
pub fn run_length(labels: &[usize]) -> Vec<Segment> {
    let mut segs: Vec<Segment> = Vec::new();
    for (t, &l) in labels.iter().enumerate() {
        match segs.last_mut() {
            Some(s) if s.label == l => s.end = t,
            _ => segs.push(Segment { label: l, start: t, end: t }),
        }
    }
    segs
}

fn check_lengths(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::shape(
            "metric",
            format!("prediction has {} frames, ground truth {}", pred.len(), gt.len()),
        ));
    }
    if gt.is_empty() {
        return Err(Error::invalid("metrics need at least one frame"));
    }
    Ok(())
}

pub fn frame_accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(100.0 * hits as f64 / gt.len() as f64)
}

/// Mean per-class frame F1 over classes present in either sequence,
/// optionally leaving out `exclude` (typically the background class).
pub fn macro_f1(pred: &[usize], gt: &[usize], num_classes: usize, exclude: Option<usize>) -> Result<f64> {
    check_lengths(pred, gt)?;
    if let Some(&bad) = pred.iter().chain(gt).find(|&&l| l >= num_classes) {
        return Err(Error::invalid(format!("label {bad} outside [0, {num_classes})")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut np = vec![0usize; num_classes];
    let mut ng = vec![0usize; num_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        np[p] += 1;
        ng[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let scores: Vec<f64> = (0..num_classes)
        .filter(|&c| Some(c) != exclude && np[c] + ng[c] > 0)
        .map(|c| 2.0 * tp[c] as f64 / (np[c] + ng[c]) as f64)
        .collect();
    if scores.is_empty() {
        return Ok(100.0);
    }
    Ok(100.0 * scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Levenshtein distance between two label strings.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (row[j + 1] + 1).min(row[j] + 1).min(diag + usize::from(x != y));
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Segmental edit score: `100·(1 − lev / max(|pred|, |gt|))`.
pub fn edit_score(pred: &[Segment], gt: &[Segment]) -> f64 {
    let n = pred.len().max(gt.len());
    if n == 0 {
        return 100.0;
    }
    let a: Vec<usize> = pred.iter().map(|s| s.label).collect();
    let b: Vec<usize> = gt.iter().map(|s| s.label).collect();
    100.0 * (1.0 - levenshtein(&a, &b) as f64 / n as f64)
}

/// Intersection over union of two inclusive frame ranges.
pub fn iou(a: &Segment, b: &Segment) -> f64 {
    let inter = (a.end.min(b.end) + 1).saturating_sub(a.start.max(b.start));
    let union = (a.end.max(b.end) + 1) - a.start.min(b.start);
    inter as f64 / union as f64
}

/// True positive count of segmental matching at `threshold`: each predicted
/// segment, in temporal order, picks the same-class ground-truth segment of
/// highest IoU; it is a hit if that IoU reaches the threshold and the
/// ground-truth segment is still unclaimed.
pub fn segment_hits(pred: &[Segment], gt: &[Segment], threshold: f64) -> usize {
    let mut claimed = vec![false; gt.len()];
    let mut tp = 0;
    for p in pred {
        let best = gt
            .iter()
            .enumerate()
            .filter(|(_, g)| g.label == p.label)
            .map(|(j, g)| (j, iou(p, g)))
            .fold(None, |acc: Option<(usize, f64)>, (j, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((j, v)),
            });
        if let Some((j, v)) = best {
            if v >= threshold && !claimed[j] {
                claimed[j] = true;
                tp += 1;
            }
        }
    }
    tp
}

/// Segmental F1 at overlap `k` percent.
pub fn f1_at_k(pred: &[Segment], gt: &[Segment], k: f64) -> f64 {
    let tp = segment_hits(pred, gt, k / 100.0) as f64;
    let fp = pred.len() as f64 - tp;
    let fn_ = gt.len() as f64 - tp;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if precision + recall == 0.0 {
        return 0.0;
    }
    100.0 * 2.0 * precision * recall / (precision + recall)
}

/// Every score for one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceScores {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub edit: f64,
    pub f1_10: f64,
    pub f1_25: f64,
    pub f1_50: f64,
}

impl SequenceScores {
    pub const NAMES: [&'static str; 6] = ["accuracy", "macro_f1", "edit", "f1_10", "f1_25", "f1_50"];

    pub fn compute(pred: &[usize], gt: &[usize], num_classes: usize, exclude: Option<usize>) -> Result<Self> {
        let (ps, gs) = (run_length(pred), run_length(gt));
        Ok(SequenceScores {
            accuracy: frame_accuracy(pred, gt)?,
            macro_f1: macro_f1(pred, gt, num_classes, exclude)?,
            edit: edit_score(&ps, &gs),
            f1_10: f1_at_k(&ps, &gs, 10.0),
            f1_25: f1_at_k(&ps, &gs, 25.0),
            f1_50: f1_at_k(&ps, &gs, 50.0),
        })
    }

    pub fn values(&self) -> [f64; 6] {
        [self.accuracy, self.macro_f1, self.edit, self.f1_10, self.f1_25, self.f1_50]
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
