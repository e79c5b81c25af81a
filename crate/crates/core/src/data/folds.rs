use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldStrategy {
    /// `n` participant-level folds. Split `i` tests on fold `i`, validates on
    /// fold `(i+1) mod n` and trains on the rest.
    ParticipantKfold(usize),
    /// One split per participant, no validation set.
    LeaveOneUserOut,
}

impl std::str::FromStr for FoldStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "leave_one_user_out" || s == "louo" {
            return Ok(FoldStrategy::LeaveOneUserOut);
        }
        let n = s
            .strip_prefix("kfold")
            .or_else(|| s.strip_prefix("participant_kfold"))
            .map(|r| r.trim_start_matches([':', '_', '(']).trim_end_matches(')'))
            .and_then(|r| r.parse::<usize>().ok())
            .ok_or_else(|| Error::invalid(format!("unknown fold strategy {s:?}")))?;
        Ok(FoldStrategy::ParticipantKfold(n))
    }
}

/// Sequence ids of one train/validation/test split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub name: String,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Participant-disjoint splits of `manifest`.
///
/// For k-fold, participants keep the fold the manifest assigns them; those
/// without one are dealt round-robin in name order.
pub fn make_folds(manifest: &DatasetManifest, strategy: FoldStrategy) -> Result<Vec<Split>> {
    let folds = manifest.participant_folds()?;
    let participants: Vec<&String> = folds.keys().collect();
    let ids_of = |members: &BTreeSet<&str>| -> Vec<String> {
        manifest
            .sequences
            .iter()
            .filter(|e| members.contains(e.participant.as_str()))
            .map(|e| e.id.clone())
            .collect()
    };
    match strategy {
        FoldStrategy::ParticipantKfold(n) => {
            if n < 2 {
                return Err(Error::invalid("k-fold needs at least 2 folds"));
            }
            let mut groups: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); n];
            let mut next = 0;
            for p in &participants {
                let f = match folds[*p] {
                    Some(f) if f >= n => {
                        return Err(Error::invalid(format!("participant {p} has fold {f}, but only {n} folds exist")))
                    }
                    Some(f) => f,
                    None => {
                        next += 1;
                        (next - 1) % n
                    }
                };
                groups[f].insert(p.as_str());
            }
            Ok((0..n)
                .map(|i| {
                    let val_fold = (i + 1) % n;
                    let train: BTreeSet<&str> = (0..n)
                        .filter(|&f| f != i && f != val_fold)
                        .flat_map(|f| groups[f].iter().copied())
                        .collect();
                    Split {
                        name: format!("fold{i}"),
                        train: ids_of(&train),
                        val: ids_of(&groups[val_fold]),
                        test: ids_of(&groups[i]),
                    }
                })
                .collect())
        }
        FoldStrategy::LeaveOneUserOut => Ok(participants
            .iter()
            .map(|p| {
                let test: BTreeSet<&str> = [p.as_str()].into();
                let train: BTreeSet<&str> = participants.iter().map(|q| q.as_str()).filter(|q| q != p).collect();
                Split {
                    name: format!("user_{p}"),
                    train: ids_of(&train),
                    val: Vec::new(),
                    test: ids_of(&test),
                }
            })
            .collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SequenceEntry, SequenceFormat};
    use crate::preprocess::ChannelLayout;

    fn manifest(participants: usize, per: usize, folds: Option<usize>) -> DatasetManifest {
        let mut sequences = Vec::new();
        for p in 0..participants {
            for s in 0..per {
                let id = format!("p{p}_s{s}");
                sequences.push(SequenceEntry {
                    path: format!("{id}.csv").into(),
                    labels: format!("{id}.txt").into(),
                    id,
                    participant: format!("p{p}"),
                    fold: folds.map(|n| p % n),
                    format: SequenceFormat::Csv,
                    rate_hz: None,
                });
            }
        }
        DatasetManifest {
            name: "m".into(),
            layout: ChannelLayout::Robotic,
            rate_hz: 30.0,
            class_names: vec!["bg".into()],
            sequences,
            root: Default::default(),
        }
    }

    fn participant(id: &str) -> &str {
        id.split('_').next().unwrap()
    }

    #[test]
    fn kfold_partitions_participants() {
        for assigned in [Some(5), None] {
            let m = manifest(12, 3, assigned);
            let splits = make_folds(&m, FoldStrategy::ParticipantKfold(5)).unwrap();
            assert_eq!(splits.len(), 5);
            for (i, s) in splits.iter().enumerate() {
                let mut all: Vec<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
                all.sort();
                all.dedup();
                assert_eq!(all.len(), 36, "split {i} must cover every sequence once");
                let test_p: BTreeSet<&str> = s.test.iter().map(|x| participant(x)).collect();
                assert!(s.train.iter().chain(&s.val).all(|x| !test_p.contains(participant(x))));
                assert_eq!(s.val, splits[(i + 1) % 5].test);
            }
        }
    }

    #[test]
    fn leave_one_user_out_has_one_split_per_user() {
        let m = manifest(8, 5, None);
        let splits = make_folds(&m, FoldStrategy::LeaveOneUserOut).unwrap();
        assert_eq!(splits.len(), 8);
        for s in &splits {
            let users: BTreeSet<&str> = s.test.iter().map(|x| participant(x)).collect();
            assert_eq!(users.len(), 1);
            assert_eq!(s.train.len() + s.test.len(), 40);
            assert!(s.val.is_empty());
        }
    }

    #[test]
    fn strategies_parse() {
        assert_eq!("kfold5".parse::<FoldStrategy>().unwrap(), FoldStrategy::ParticipantKfold(5));
        assert_eq!("participant_kfold(4)".parse::<FoldStrategy>().unwrap(), FoldStrategy::ParticipantKfold(4));
        assert_eq!("louo".parse::<FoldStrategy>().unwrap(), FoldStrategy::LeaveOneUserOut);
        assert!("random".parse::<FoldStrategy>().is_err());
        assert!(make_folds(&manifest(3, 1, None), FoldStrategy::ParticipantKfold(1)).is_err());
    }
}
