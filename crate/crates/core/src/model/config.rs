use serde::{Deserialize, Serialize};

use crate::autodiff::CellKind;
use crate::error::{Error, Result};

/// Depths after which an intermediate prediction head may be attached.
pub const ISR_CANDIDATES: [usize; 3] = [4, 7, 10];

/// Architecture family: LSTM or GRU refinement stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    L,
    G,
}

impl Variant {
    pub fn cell(self) -> CellKind {
        match self {
            Variant::L => CellKind::Lstm,
            Variant::G => CellKind::Gru,
        }
    }

    /// Tuned weight of the smoothing loss.
    pub fn default_lambda(self) -> f64 {
        match self {
            Variant::L => 0.933,
            Variant::G => 0.638,
        }
    }

    /// Tuned Adam learning rate.
    pub fn default_lr(self) -> f64 {
        match self {
            Variant::L => 0.001035,
            Variant::G => 0.001779,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "l" | "lstm" => Ok(Variant::L),
            "G" | "g" | "gru" => Ok(Variant::G),
            other => Err(Error::invalid(format!("unknown model variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Number of dual dilated residual layers in the prediction generator.
    pub num_layers: usize,
    /// Channel width of the prediction generator.
    pub feature_maps: usize,
    pub pg_dropout: f64,
    pub num_refinements: usize,
    pub rnn_layers: usize,
    pub rnn_hidden: usize,
    pub rnn_dropout: f64,
    pub num_classes: usize,
    pub input_dim: usize,
    /// Temporal decimation applied to the network input.
    pub primary_sampling: usize,
    /// Temporal decimation inside each refinement stage.
    pub secondary_sampling: usize,
    pub isr_candidates: Vec<usize>,
}

impl ModelConfig {
    /// Defaults of the LSTM-refined network.
    pub fn l_variant(input_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            variant: Variant::L,
            num_layers: 11,
            feature_maps: 256,
            pg_dropout: 0.546,
            num_refinements: 1,
            rnn_layers: 2,
            rnn_hidden: 128,
            rnn_dropout: 0.619,
            num_classes,
            input_dim,
            primary_sampling: 2,
            secondary_sampling: 3,
            isr_candidates: ISR_CANDIDATES.to_vec(),
        }
    }

    /// Defaults of the GRU-refined network.
    pub fn g_variant(input_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            variant: Variant::G,
            num_layers: 13,
            feature_maps: 256,
            pg_dropout: 0.645,
            num_refinements: 1,
            rnn_layers: 2,
            rnn_hidden: 256,
            rnn_dropout: 0.5747,
            num_classes,
            input_dim,
            primary_sampling: 1,
            secondary_sampling: 6,
            isr_candidates: ISR_CANDIDATES.to_vec(),
        }
    }

    pub fn for_variant(variant: Variant, input_dim: usize, num_classes: usize) -> Self {
        match variant {
            Variant::L => Self::l_variant(input_dim, num_classes),
            Variant::G => Self::g_variant(input_dim, num_classes),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("feature_maps", self.feature_maps),
            ("rnn_hidden", self.rnn_hidden),
            ("num_classes", self.num_classes),
            ("input_dim", self.input_dim),
            ("primary_sampling", self.primary_sampling),
            ("secondary_sampling", self.secondary_sampling),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("model.{name} must be at least 1")));
        }
        if self.num_refinements > 0 && self.rnn_layers == 0 {
            return Err(Error::invalid("refinement stages need at least one recurrent layer"));
        }
        for (name, p) in [("pg_dropout", self.pg_dropout), ("rnn_dropout", self.rnn_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(format!("model.{name} must lie in [0, 1), got {p}")));
            }
        }
        if self.num_layers > 30 {
            return Err(Error::invalid("model.num_layers above 30 overflows the dilation schedule"));
        }
        Ok(())
    }

    /// Dilations of the two convolutions of layer `layer` (1-based):
    /// `(2^(layer−1), 2^(L−layer))`.
    pub fn dilations(&self, layer: usize) -> (usize, usize) {
        (1 << (layer - 1), 1 << (self.num_layers - layer))
    }

    /// Layers followed by an intermediate head: candidates strictly below L.
    pub fn isr_layers(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .isr_candidates
            .iter()
            .copied()
            .filter(|&i| i >= 1 && i < self.num_layers)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Total number of prediction heads, each contributing one loss term.
    pub fn num_heads(&self) -> usize {
        self.isr_layers().len() + 1 + self.num_refinements
    }

    /// Working length after primary decimation.
    pub fn working_len(&self, len: usize) -> usize {
        (len - 1) / self.primary_sampling + 1
    }
}
