//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Covers exactly the operations the segmentation model needs: dilated
//! "same" convolutions, element-wise activations, concatenation, softmax,
//! dropout, temporal down/up-sampling, fused LSTM/GRU layers and the
//! reductions used by the loss. Graphs are rebuilt for every sequence.

mod adam;
mod graph;
mod kernels;
mod params;
mod rnn;
mod tensor;

pub mod gradcheck;

pub use adam::{adam_step, AdamState};
pub use graph::{Gradients, Graph, Var, LOG_FLOOR};
pub use params::{
    config_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, BoundParams,
    CheckpointHeader, ParamEntry, ParamStore,
};
pub use rnn::CellKind;
pub use tensor::{Real, Tensor};
