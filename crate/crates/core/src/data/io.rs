//! Readers and writers for pose sequences and their label files.
//!
//! Label files hold one `start end name` line per segment with inclusive
//! frame bounds. Frames outside every segment belong to the background class
//! (id 0), or are trimmed away when they lead or trail the sequence and
//! trimming is requested.

use std::fmt::Write as _;
use std::path::Path;

use super::manifest::{DatasetManifest, SequenceEntry, SequenceFormat};
use crate::error::{Error, Result};
use crate::metrics::run_length;
use crate::preprocess::{jigsaws_extract, ChannelLayout, SensorSequence};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Writes the pose channels as CSV with a header of channel names.
pub fn write_sequence_csv(path: &Path, seq: &SensorSequence) -> Result<()> {
    let mut out = seq.layout().channel_names().join(",");
    out.push('\n');
    for t in 0..seq.len() {
        let row: Vec<String> = seq.frame(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads CSV pose rows. The header must name exactly the layout's channels.
pub fn read_sequence_csv(path: &Path, layout: ChannelLayout) -> Result<Vec<f64>> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != layout.channel_names() {
        return Err(parse_err(path, 1, format!("header does not match layout {layout:?}")));
    }
    let w = layout.width();
    let mut data = Vec::new();
    for (i, line) in lines {
        let row: Vec<&str> = line.split(',').collect();
        if row.len() != w {
            return Err(parse_err(path, i + 1, format!("expected {w} values, found {}", row.len())));
        }
        for v in row {
            data.push(v.trim().parse::<f64>().map_err(|e| parse_err(path, i + 1, format!("{v:?}: {e}")))?);
        }
    }
    Ok(data)
}

pub fn write_labels(path: &Path, labels: &[usize], class_names: &[String]) -> Result<()> {
    let mut out = String::new();
    for s in run_length(labels) {
        let name = class_names
            .get(s.label)
            .ok_or_else(|| Error::invalid(format!("label {} has no class name", s.label)))?;
        writeln!(out, "{} {} {}", s.start, s.end, name).expect("writing to a String");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Per-frame labels of a `len`-frame sequence; `None` where no segment
/// covers the frame. `first_frame` is the index the file counts from.
pub fn read_labels(path: &Path, len: usize, class_names: &[String], first_frame: usize) -> Result<Vec<Option<usize>>> {
    let text = read(path)?;
    let mut labels = vec![None; len];
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 3 {
            return Err(parse_err(path, i + 1, "expected `start end label`"));
        }
        let frame = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|e| parse_err(path, i + 1, format!("{s:?}: {e}")))?;
            v.checked_sub(first_frame)
                .filter(|&f| f < len)
                .ok_or_else(|| parse_err(path, i + 1, format!("frame {v} outside the sequence of {len} frames")))
        };
        let (start, end) = (frame(fields[0])?, frame(fields[1])?);
        if start > end {
            return Err(parse_err(path, i + 1, format!("segment ends before it starts ({start} > {end})")));
        }
        let class = class_names
            .iter()
            .position(|c| c == fields[2])
            .ok_or_else(|| parse_err(path, i + 1, format!("unknown class {:?}", fields[2])))?;
        labels[start..=end].iter_mut().for_each(|l| *l = Some(class));
    }
    Ok(labels)
}

/// Fills uncovered frames with background, or trims uncovered leading and
/// trailing frames when `trim` is set. Returns the kept frame range.
pub fn resolve_labels(labels: &[Option<usize>], trim: bool) -> (std::ops::Range<usize>, Vec<usize>) {
    let range = if trim {
        let first = labels.iter().position(Option::is_some).unwrap_or(0);
        let last = labels.iter().rposition(Option::is_some).map_or(labels.len(), |l| l + 1);
        first..last.max(first)
    } else {
        0..labels.len()
    };
    let filled = labels[range.clone()].iter().map(|l| l.unwrap_or(0)).collect();
    (range, filled)
}

/// Reads whitespace-separated 76-column kinematics rows.
pub fn read_jigsaws_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| parse_err(path, i + 1, format!("{v:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Loads one manifest entry as a labelled pose sequence.
pub fn load_sequence(manifest: &DatasetManifest, entry: &SequenceEntry, trim: bool) -> Result<SensorSequence> {
    let rate = entry.rate_hz.unwrap_or(manifest.rate_hz);
    let pose_path = manifest.resolve(&entry.path);
    let label_path = manifest.resolve(&entry.labels);
    match entry.format {
        SequenceFormat::Csv => {
            let layout = manifest.layout;
            let data = read_sequence_csv(&pose_path, layout)?;
            let len = data.len() / layout.width();
            let (range, labels) = resolve_labels(&read_labels(&label_path, len, &manifest.class_names, 0)?, trim);
            let w = layout.width();
            SensorSequence::new(rate, layout, data[range.start * w..range.end * w].to_vec(), labels)
        }
        SequenceFormat::Jigsaws => {
            let rows = read_jigsaws_rows(&pose_path)?;
            // Transcriptions count frames from 1.
            let raw = read_labels(&label_path, rows.len(), &manifest.class_names, 1)?;
            let (range, labels) = resolve_labels(&raw, trim);
            let seq = jigsaws_extract(&rows[range], labels)?;
            if rate != seq.rate_hz() {
                return SensorSequence::new(rate, seq.layout(), seq.channels().to_vec(), seq.labels().to_vec());
            }
            Ok(seq)
        }
    }
}
