use super::fir::wrap_degrees;
use super::sequence::{FeatureSequence, SensorSequence};
use crate::error::{Error, Result};

/// Standard deviation below which a channel is treated as constant.
const MIN_STD: f64 = 1e-12;

/// Frame-to-frame differences of every channel. The first frame is zero and
/// angle channels take the shortest arc across the ±180° seam.
pub fn velocities(seq: &SensorSequence) -> Result<FeatureSequence> {
    let t = seq.len();
    if t < 2 {
        return Err(Error::invalid(format!("velocities need at least 2 frames, got {t}")));
    }
    let layout = seq.layout();
    let w = layout.width();
    let mut data = vec![0.0; t * w];
    for i in 1..t {
        let (prev, cur) = (seq.frame(i - 1), seq.frame(i));
        for c in 0..w {
            let d = cur[c] - prev[c];
            data[i * w + c] = if layout.is_angle(c) { wrap_degrees(d) } else { d };
        }
    }
    FeatureSequence::new(w, data, seq.labels().to_vec())
}

/// Per-channel z-score with population statistics of this sequence alone.
/// Constant channels become zero.
pub fn standardize(seq: &FeatureSequence) -> Result<FeatureSequence> {
    let (t, m) = (seq.len(), seq.dim());
    if t < 2 {
        return Err(Error::invalid(format!("standardization needs at least 2 frames, got {t}")));
    }
    let mut data = seq.data().to_vec();
    for c in 0..m {
        let col = seq.channel(c);
        let mean = col.iter().sum::<f64>() / t as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
        let std = var.sqrt();
        if std <= MIN_STD * (1.0 + mean.abs()) {
            log::debug!("channel {c} has zero variance; emitting zeros");
        }
        for i in 0..t {
            data[i * m + c] = if std <= MIN_STD * (1.0 + mean.abs()) { 0.0 } else { (col[i] - mean) / std };
        }
    }
    FeatureSequence::new(m, data, seq.labels().to_vec())
}

/// The network's view of a pose sequence: standardized velocities.
pub fn features(seq: &SensorSequence) -> Result<FeatureSequence> {
    standardize(&velocities(seq)?)
}
