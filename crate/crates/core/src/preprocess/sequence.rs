use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::geometry::HandLayout;

/// How the channels of a pose sequence are organised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChannelLayout {
    /// `sensors` blocks of `x, y, z, e1, e2, e3`.
    OpenSurgery { sensors: usize },
    /// Two manipulator blocks of `x, y, z, e1, e2, e3, gripper`, left first.
    Robotic,
}

impl ChannelLayout {
    pub fn sensors(self) -> usize {
        match self {
            ChannelLayout::OpenSurgery { sensors } => sensors,
            ChannelLayout::Robotic => 2,
        }
    }

    /// Channels per sensor block.
    pub fn stride(self) -> usize {
        match self {
            ChannelLayout::OpenSurgery { .. } => 6,
            ChannelLayout::Robotic => 7,
        }
    }

    pub fn width(self) -> usize {
        self.sensors() * self.stride()
    }

    /// True for Euler-angle channels, which wrap at ±180°.
    pub fn is_angle(self, channel: usize) -> bool {
        (3..6).contains(&(channel % self.stride()))
    }

    /// The conventional hand assignment: the first half of the sensors on the
    /// left hand, the second half on the right.
    pub fn default_hands(self) -> HandLayout {
        let s = self.sensors();
        HandLayout {
            left: (0..s / 2).collect(),
            right: (s / 2..s).collect(),
        }
    }

    pub fn channel_names(self) -> Vec<String> {
        let suffix = ["x", "y", "z", "e1", "e2", "e3", "gripper"];
        let mut names = Vec::with_capacity(self.width());
        for s in 0..self.sensors() {
            let prefix = match self {
                ChannelLayout::OpenSurgery { .. } => format!("s{}", s + 1),
                ChannelLayout::Robotic => format!("psm{}", s + 1),
            };
            for name in &suffix[..self.stride()] {
                names.push(format!("{prefix}_{name}"));
            }
        }
        names
    }
}

/// A labelled multi-sensor pose series: positions in mm, intrinsic ZYX
/// Euler angles in degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSequence {
    rate_hz: f64,
    layout: ChannelLayout,
    /// `T × W`, row-major.
    channels: Vec<f64>,
    labels: Vec<usize>,
}

impl SensorSequence {
    pub fn new(rate_hz: f64, layout: ChannelLayout, channels: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::invalid(format!("sampling rate must be positive, got {rate_hz}")));
        }
        let w = layout.width();
        if w == 0 {
            return Err(Error::invalid("layout has no channels"));
        }
        if channels.len() != labels.len() * w {
            return Err(Error::shape(
                "sensor sequence",
                format!("{} labels need {} values, got {}", labels.len(), labels.len() * w, channels.len()),
            ));
        }
        if labels.is_empty() {
            return Err(Error::invalid("sequence has no frames"));
        }
        if let Some(v) = channels.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pose value {v}")));
        }
        Ok(SensorSequence {
            rate_hz,
            layout,
            channels,
            labels,
        })
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.width();
        &self.channels[t * w..(t + 1) * w]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let w = self.width();
        &mut self.channels[t * w..(t + 1) * w]
    }

    pub fn channels(&self) -> &[f64] {
        &self.channels
    }

    /// Copy of one channel over time.
    pub fn channel(&self, j: usize) -> Vec<f64> {
        self.channels.iter().skip(j).step_by(self.width()).copied().collect()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn position(&self, t: usize, sensor: usize) -> [f64; 3] {
        let o = sensor * self.layout.stride();
        let f = self.frame(t);
        [f[o], f[o + 1], f[o + 2]]
    }

    pub fn euler(&self, t: usize, sensor: usize) -> [f64; 3] {
        let o = sensor * self.layout.stride() + 3;
        let f = self.frame(t);
        [f[o], f[o + 1], f[o + 2]]
    }

    pub fn set_pose(&mut self, t: usize, sensor: usize, position: [f64; 3], euler: [f64; 3]) {
        let o = sensor * self.layout.stride();
        let f = self.frame_mut(t);
        f[o..o + 3].copy_from_slice(&position);
        f[o + 3..o + 6].copy_from_slice(&euler);
    }
}

/// Network input: `T × M` features with per-frame labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    dim: usize,
    /// `T × M`, row-major.
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl FeatureSequence {
    pub fn new(dim: usize, data: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || labels.is_empty() || data.len() != dim * labels.len() {
            return Err(Error::shape(
                "feature sequence",
                format!("{} values for {} frames of width {dim}", data.len(), labels.len()),
            ));
        }
        Ok(FeatureSequence { dim, data, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn channel(&self, j: usize) -> Vec<f64> {
        self.data.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// Channel-major `M × T` tensor, the layout the network consumes.
    pub fn to_tensor<F: Real>(&self) -> Tensor<F> {
        let (m, t) = (self.dim, self.len());
        Tensor::from_fn(vec![m, t], |i| F::c(self.data[(i % t) * m + i / t]))
    }
}
