//! Per-epoch random application of the geometric augmentations.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::AugConfig;
use crate::error::{Error, Result};
use crate::geometry::{fit_hand_line, reflect_with_line, world_frame_rotation, HandLayout, ReflectionLine};
use crate::preprocess::SensorSequence;

/// How often each augmentation actually ran.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugCounters {
    pub hi_applied: u64,
    /// Draws that selected hand inversion for a sequence whose hands cannot
    /// be separated by a non-vertical line.
    pub hi_skipped: u64,
    pub wfr_applied: u64,
}

/// Applies hand inversion, then world-frame rotation, each independently
/// with its configured probability.
#[derive(Clone, Debug)]
pub struct Augmenter {
    cfg: AugConfig,
    hands: HandLayout,
    /// Fitted line per sequence id; `None` when the boundary is vertical.
    lines: HashMap<String, Option<ReflectionLine>>,
    counters: AugCounters,
}

impl Augmenter {
    pub fn new(cfg: AugConfig, hands: HandLayout) -> Self {
        Augmenter {
            cfg,
            hands,
            lines: HashMap::new(),
            counters: AugCounters::default(),
        }
    }

    pub fn counters(&self) -> AugCounters {
        self.counters
    }

    /// The (cached) reflection line of the un-augmented sequence `id`.
    fn line(&mut self, id: &str, seq: &SensorSequence) -> Result<Option<ReflectionLine>> {
        if let Some(l) = self.lines.get(id) {
            return Ok(*l);
        }
        let line = match fit_hand_line(seq, &self.hands) {
            Ok(l) => Some(l),
            Err(Error::VerticalBoundary) => {
                log::warn!("sequence {id}: hand separator is vertical; hand inversion disabled for it");
                None
            }
            Err(e) => return Err(e),
        };
        self.lines.insert(id.to_string(), line);
        Ok(line)
    }

    /// One augmented draw of the original sequence `seq` named `id`.
    pub fn apply<R: Rng + ?Sized>(&mut self, id: &str, seq: &SensorSequence, rng: &mut R) -> Result<SensorSequence> {
        let mut out = None;
        if self.cfg.hi_prob > 0.0 && rng.random::<f64>() < self.cfg.hi_prob {
            match self.line(id, seq)? {
                Some(line) => {
                    out = Some(reflect_with_line(seq, &line, &self.hands)?);
                    self.counters.hi_applied += 1;
                }
                None => self.counters.hi_skipped += 1,
            }
        }
        if self.cfg.wfr_prob > 0.0 && rng.random::<f64>() < self.cfg.wfr_prob {
            let base = out.as_ref().unwrap_or(seq);
            out = Some(world_frame_rotation(base, self.cfg.theta_max, rng)?);
            self.counters.wfr_applied += 1;
        }
        Ok(out.unwrap_or_else(|| seq.clone()))
    }
}
