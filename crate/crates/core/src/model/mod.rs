//! The multi-stage segmentation network: a dilated convolutional prediction
//! generator with intermediate heads, followed by bidirectional recurrent
//! refinement stages.

mod config;
mod network;

pub use config::{ModelConfig, Variant, ISR_CANDIDATES};
pub use network::{ddrl_forward, ForwardOutput, MsTcrNet};
