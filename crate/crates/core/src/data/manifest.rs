use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::ChannelLayout;

/// On-disk encoding of one sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceFormat {
    /// Header row of channel names, one comma-separated row per frame.
    #[default]
    Csv,
    /// Whitespace-separated 76-column robotic kinematics.
    Jigsaws,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub id: String,
    /// Pose file, relative to the manifest's directory.
    pub path: PathBuf,
    /// Label file, relative to the manifest's directory.
    pub labels: PathBuf,
    pub participant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    #[serde(default)]
    pub format: SequenceFormat,
    /// Overrides the dataset rate for this sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_hz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub layout: ChannelLayout,
    pub rate_hz: f64,
    /// Class names by id; id 0 is the background class.
    pub class_names: Vec<String>,
    pub sequences: Vec<SequenceEntry>,
    /// Directory the relative paths are resolved against. Set on load.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    pub fn entry(&self, id: &str) -> Option<&SequenceEntry> {
        self.sequences.iter().find(|e| e.id == id)
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    /// Fold of every participant. Fails if a participant's sequences are
    /// spread over several folds.
    pub fn participant_folds(&self) -> Result<BTreeMap<String, Option<usize>>> {
        let mut map: BTreeMap<String, Option<usize>> = BTreeMap::new();
        for e in &self.sequences {
            match map.get(&e.participant) {
                Some(&f) if f != e.fold => {
                    return Err(Error::invalid(format!(
                        "participant {} appears in folds {f:?} and {:?}",
                        e.participant, e.fold
                    )))
                }
                _ => {
                    map.insert(e.participant.clone(), e.fold);
                }
            }
        }
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() {
            return Err(Error::invalid("manifest lists no classes"));
        }
        if !(self.rate_hz > 0.0) {
            return Err(Error::invalid("manifest rate must be positive"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for e in &self.sequences {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sequence id {}", e.id)));
            }
        }
        self.participant_folds().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, participant: &str, fold: usize) -> SequenceEntry {
        SequenceEntry {
            id: id.into(),
            path: format!("{id}.csv").into(),
            labels: format!("{id}.txt").into(),
            participant: participant.into(),
            fold: Some(fold),
            format: SequenceFormat::Csv,
            rate_hz: None,
        }
    }

    fn manifest(entries: Vec<SequenceEntry>) -> DatasetManifest {
        DatasetManifest {
            name: "toy".into(),
            layout: ChannelLayout::OpenSurgery { sensors: 6 },
            rate_hz: 30.0,
            class_names: vec!["background".into(), "a".into()],
            sequences: entries,
            root: PathBuf::new(),
        }
    }

    #[test]
    fn participant_in_two_folds_is_rejected() {
        assert!(manifest(vec![entry("s1", "p1", 0), entry("s2", "p1", 0)]).validate().is_ok());
        assert!(manifest(vec![entry("s1", "p1", 0), entry("s2", "p1", 1)]).validate().is_err());
        assert!(manifest(vec![entry("s1", "p1", 0), entry("s1", "p2", 1)]).validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = manifest(vec![entry("s1", "p1", 0)]);
        m.save(&path).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back.sequences, m.sequences);
        assert_eq!(back.layout, m.layout);
        assert_eq!(back.root, dir.path());
    }
}
