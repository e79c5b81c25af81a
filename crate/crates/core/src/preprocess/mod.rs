//! From raw poses to network features: low-pass filtering and resampling,
//! velocities, and per-sequence standardization.

mod features;
mod fir;
pub mod jigsaws;
mod sequence;

pub use features::{features, standardize, velocities};
pub use fir::{
    fir_lowpass_resample, resampled_len, source_index, unwrap_degrees, wrap_degrees, FirFilter,
    DESIGN_ATTENUATION_DB, PASSBAND_HZ, STOPBAND_HZ, TARGET_HZ,
};
pub use jigsaws::jigsaws_extract;
pub use sequence::{ChannelLayout, FeatureSequence, SensorSequence};
