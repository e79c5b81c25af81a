//! Run configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! model.variant = G
//! model.feature_maps = 64
//! aug.theta_max = 7
//! train.seeds = 1, 2, 3
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FoldStrategy;
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::model::{ModelConfig, Variant};

/// Environment variable naming the root directory for run outputs.
pub const OUTPUT_ROOT_ENV: &str = "KINSEG_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugConfig {
    pub wfr_prob: f64,
    /// Bound on each Euler angle of the world rotation, degrees.
    pub theta_max: f64,
    pub hi_prob: f64,
}

impl Default for AugConfig {
    fn default() -> Self {
        AugConfig {
            wfr_prob: 0.0,
            theta_max: 0.0,
            hi_prob: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    None,
    /// Halve the learning rate after `patience` consecutive epochs without
    /// improvement of the monitored loss.
    HalveOnPlateau { patience: usize },
}

/// The loss whose stagnation drives the scheduler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlateauMonitor {
    /// Mean training loss over the epoch.
    TrainLoss,
    /// Mean loss over the validation split.
    ValLoss,
}

/// Which epoch's weights are kept and evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// The epoch with the best mean validation edit score.
    BestValEdit,
    FinalEpoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Architecture; `input_dim` and `num_classes` are set from the data.
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub lr: f64,
    pub epochs: usize,
    pub aug: AugConfig,
    pub scheduler: Scheduler,
    pub monitor: PlateauMonitor,
    pub selection: Selection,
    pub seeds: Vec<u64>,
    pub folds: FoldStrategy,
    /// Trim unlabeled leading and trailing frames instead of labelling them
    /// background.
    pub trim: bool,
}

impl RunConfig {
    pub fn for_variant(variant: Variant) -> Self {
        RunConfig {
            model: ModelConfig::for_variant(variant, 0, 0),
            loss: LossConfig::new(variant.default_lambda()),
            lr: variant.default_lr(),
            epochs: 40,
            aug: AugConfig::default(),
            scheduler: Scheduler::None,
            monitor: PlateauMonitor::TrainLoss,
            selection: Selection::BestValEdit,
            seeds: vec![0],
            folds: FoldStrategy::ParticipantKfold(5),
            trim: false,
        }
    }

    /// Model configuration for data with `input_dim` features and
    /// `num_classes` classes.
    pub fn model_for(&self, input_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            num_classes,
            ..self.model.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let probs = [("aug.wfr_prob", self.aug.wfr_prob), ("aug.hi_prob", self.aug.hi_prob)];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.aug.theta_max >= 0.0 && self.aug.theta_max.is_finite()) {
            return Err(Error::invalid(format!("aug.theta_max must be ≥ 0, got {}", self.aug.theta_max)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("train.lr must be positive, got {}", self.lr)));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("train.seeds must list at least one seed"));
        }
        if let Scheduler::HalveOnPlateau { patience: 0 } = self.scheduler {
            return Err(Error::invalid("train.patience must be at least 1"));
        }
        // input_dim and num_classes come later; check the rest.
        self.model_for(1, 1).validate()
    }

    /// Parses a flat `key = value` file. Unset keys keep the defaults of the
    /// configured variant.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_pairs(text)?;
        let variant = entries
            .iter()
            .find(|(_, k, _)| k == "model.variant")
            .map(|(line, _, v)| v.parse::<Variant>().map_err(|e| at(*line, e)))
            .transpose()?
            .unwrap_or(Variant::L);
        let mut cfg = RunConfig::for_variant(variant);
        let mut epochs_set = false;
        for (line, key, value) in &entries {
            cfg.set(key, value).map_err(|e| at(*line, e))?;
            epochs_set |= key == "train.epochs";
        }
        if !epochs_set && cfg.aug.hi_prob > 0.0 {
            cfg.epochs = 80;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            },
            other => other,
        })
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "model.variant" => m.variant = value.parse()?,
            "model.num_layers" => m.num_layers = num(key, value)?,
            "model.feature_maps" => m.feature_maps = num(key, value)?,
            "model.pg_dropout" => m.pg_dropout = num(key, value)?,
            "model.num_refinements" => m.num_refinements = num(key, value)?,
            "model.rnn_layers" => m.rnn_layers = num(key, value)?,
            "model.rnn_hidden" => m.rnn_hidden = num(key, value)?,
            "model.rnn_dropout" => m.rnn_dropout = num(key, value)?,
            "model.primary_sampling" => m.primary_sampling = num(key, value)?,
            "model.secondary_sampling" => m.secondary_sampling = num(key, value)?,
            "model.isr_candidates" => m.isr_candidates = list(key, value)?,
            "loss.lambda" => self.loss.lambda = num(key, value)?,
            "loss.tau" => self.loss.tau = num(key, value)?,
            "loss.detach_prev_frame" => self.loss.detach_prev_frame = num(key, value)?,
            "train.lr" => self.lr = num(key, value)?,
            "train.epochs" => self.epochs = num(key, value)?,
            "train.seeds" => self.seeds = list(key, value)?,
            "train.scheduler" => {
                self.scheduler = match value {
                    "none" => Scheduler::None,
                    "halve_on_plateau" => Scheduler::HalveOnPlateau { patience: 3 },
                    _ => return Err(Error::invalid(format!("unknown scheduler {value:?}"))),
                }
            }
            "train.patience" => {
                let p = num(key, value)?;
                self.scheduler = Scheduler::HalveOnPlateau { patience: p };
            }
            "train.plateau_monitor" => {
                self.monitor = match value {
                    "train_loss" => PlateauMonitor::TrainLoss,
                    "val_loss" => PlateauMonitor::ValLoss,
                    _ => return Err(Error::invalid(format!("unknown plateau monitor {value:?}"))),
                }
            }
            "train.selection" => {
                self.selection = match value {
                    "best_val_edit" => Selection::BestValEdit,
                    "final_epoch" => Selection::FinalEpoch,
                    _ => return Err(Error::invalid(format!("unknown selection {value:?}"))),
                }
            }
            "aug.wfr_prob" => self.aug.wfr_prob = num(key, value)?,
            "aug.theta_max" => self.aug.theta_max = num(key, value)?,
            "aug.hi_prob" => self.aug.hi_prob = num(key, value)?,
            "data.folds" => self.folds = value.parse()?,
            "data.trim" => self.trim = num(key, value)?,
            _ => return Err(Error::invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Renders the configuration in the format [`RunConfig::parse`] reads.
    pub fn to_kv(&self) -> String {
        let m = &self.model;
        let join = |v: &[String]| v.join(", ");
        let mut lines = vec![
            format!("model.variant = {:?}", m.variant),
            format!("model.num_layers = {}", m.num_layers),
            format!("model.feature_maps = {}", m.feature_maps),
            format!("model.pg_dropout = {}", m.pg_dropout),
            format!("model.num_refinements = {}", m.num_refinements),
            format!("model.rnn_layers = {}", m.rnn_layers),
            format!("model.rnn_hidden = {}", m.rnn_hidden),
            format!("model.rnn_dropout = {}", m.rnn_dropout),
            format!("model.primary_sampling = {}", m.primary_sampling),
            format!("model.secondary_sampling = {}", m.secondary_sampling),
            format!(
                "model.isr_candidates = {}",
                join(&m.isr_candidates.iter().map(|c| c.to_string()).collect::<Vec<_>>())
            ),
            format!("loss.lambda = {}", self.loss.lambda),
            format!("loss.tau = {}", self.loss.tau),
            format!("loss.detach_prev_frame = {}", self.loss.detach_prev_frame),
            format!("train.lr = {}", self.lr),
            format!("train.epochs = {}", self.epochs),
            format!("train.seeds = {}", join(&self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>())),
        ];
        match self.scheduler {
            Scheduler::None => lines.push("train.scheduler = none".into()),
            Scheduler::HalveOnPlateau { patience } => lines.push(format!("train.patience = {patience}")),
        }
        lines.push(format!(
            "train.plateau_monitor = {}",
            match self.monitor {
                PlateauMonitor::TrainLoss => "train_loss",
                PlateauMonitor::ValLoss => "val_loss",
            }
        ));
        lines.push(format!(
            "train.selection = {}",
            match self.selection {
                Selection::BestValEdit => "best_val_edit",
                Selection::FinalEpoch => "final_epoch",
            }
        ));
        lines.push(format!("aug.wfr_prob = {}", self.aug.wfr_prob));
        lines.push(format!("aug.theta_max = {}", self.aug.theta_max));
        lines.push(format!("aug.hi_prob = {}", self.aug.hi_prob));
        lines.push(format!(
            "data.folds = {}",
            match self.folds {
                FoldStrategy::ParticipantKfold(n) => format!("kfold{n}"),
                FoldStrategy::LeaveOneUserOut => "louo".into(),
            }
        ));
        lines.push(format!("data.trim = {}", self.trim));
        lines.join("\n") + "\n"
    }
}

fn at(line: usize, e: Error) -> Error {
    Error::Parse {
        path: "<config>".into(),
        line,
        msg: e.to_string(),
    }
}

fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| at(i + 1, Error::invalid(format!("expected `key = value`, got {line:?}"))))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::invalid(format!("{key}: cannot parse {value:?}: {e}")))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_variant() {
        let l = RunConfig::parse("").unwrap();
        assert_eq!((l.lr, l.loss.lambda, l.epochs), (0.001035, 0.933, 40));
        assert_eq!(l.model.num_layers, 11);
        // The variant key applies before the others, wherever it appears.
        let g = RunConfig::parse("train.epochs = 5\nmodel.variant = G\n").unwrap();
        assert_eq!((g.lr, g.loss.lambda, g.epochs), (0.001779, 0.638, 5));
        assert_eq!(g.model.num_layers, 13);
        let hi = RunConfig::parse("aug.hi_prob = 0.5").unwrap();
        assert_eq!(hi.epochs, 80);
    }

    #[test]
    fn round_trips_through_text() {
        let text = "model.variant = G  # refinement cell\nmodel.feature_maps = 32\naug.theta_max = 7\naug.wfr_prob = 1\n\
                    train.seeds = 3, 4\ntrain.patience = 3\ndata.folds = louo\ntrain.selection = final_epoch\nloss.tau = 2\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.model.feature_maps, 32);
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.scheduler, Scheduler::HalveOnPlateau { patience: 3 });
        assert_eq!(cfg.folds, FoldStrategy::LeaveOneUserOut);
        assert_eq!(RunConfig::parse(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn bad_input_is_reported_with_its_line() {
        assert!(matches!(RunConfig::parse("\nmodel.colour = red"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(RunConfig::parse("aug.hi_prob"), Err(Error::Parse { line: 1, .. })));
        assert!(RunConfig::parse("aug.hi_prob = 1.5").is_err());
        assert!(RunConfig::parse("aug.theta_max = -1").is_err());
        assert!(RunConfig::parse("train.seeds = ").is_err());
    }
}
