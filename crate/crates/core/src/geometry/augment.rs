use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rotation::{reflection_3d, rot, rot_inv};
use super::svm::{fit_linear_svm, SvmParams};
use crate::error::{Error, Result};
use crate::preprocess::SensorSequence;

/// Temporal stride applied to hand centroids before fitting the line.
pub const CENTROID_STRIDE: usize = 50;

/// Relative size of `w_y` below which the separator counts as vertical.
const VERTICAL_EPS: f64 = 1e-6;

/// Which sensors belong to which hand. Blocks are swapped pairwise, so both
/// lists must have the same length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandLayout {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl HandLayout {
    fn validate(&self, sensors: usize) -> Result<()> {
        if self.left.is_empty() || self.left.len() != self.right.len() {
            return Err(Error::invalid("hand layout needs equally sized, non-empty sensor groups"));
        }
        let mut seen = vec![false; sensors];
        for &s in self.left.iter().chain(&self.right) {
            if s >= sensors || std::mem::replace(&mut seen[s], true) {
                return Err(Error::invalid(format!("sensor {s} is out of range or listed twice")));
            }
        }
        Ok(())
    }
}

/// The line `y = m·x + b` across which hand inversion reflects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectionLine {
    pub m: f64,
    pub b: f64,
    /// `atan(m)`, in radians.
    pub phi: f64,
}

impl ReflectionLine {
    pub fn new(m: f64, b: f64) -> Self {
        ReflectionLine { m, b, phi: m.atan() }
    }
}

/// Applies one world rotation `r` to every pose of `seq`.
pub fn rotate_world(seq: &SensorSequence, r: &Matrix3<f64>) -> SensorSequence {
    let mut out = seq.clone();
    for t in 0..seq.len() {
        for s in 0..seq.layout().sensors() {
            let p = r * Vector3::from(seq.position(t, s));
            let e = rot_inv(&(r * rot(seq.euler(t, s))));
            out.set_pose(t, s, [p.x, p.y, p.z], e);
        }
    }
    out
}

/// World frame rotation: one random rotation with Euler angles drawn from
/// `U[−θ, θ]³` applied to the whole sequence.
pub fn world_frame_rotation<R: Rng + ?Sized>(
    seq: &SensorSequence,
    theta_max_deg: f64,
    rng: &mut R,
) -> Result<SensorSequence> {
    if !(theta_max_deg >= 0.0 && theta_max_deg.is_finite()) {
        return Err(Error::invalid(format!("theta_max must be finite and ≥ 0, got {theta_max_deg}")));
    }
    let mut angle = || rng.random_range(-theta_max_deg..=theta_max_deg);
    let e = [angle(), angle(), angle()];
    let r = rot(e);
    if r == Matrix3::identity() {
        return Ok(seq.clone());
    }
    Ok(rotate_world(seq, &r))
}

/// Per-frame xy centroids of the left and right hand, every
/// [`CENTROID_STRIDE`]-th frame.
pub fn hand_centroids_xy(seq: &SensorSequence, hands: &HandLayout) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    hands.validate(seq.layout().sensors())?;
    let centroid = |t: usize, group: &[usize]| {
        let mut c = [0.0, 0.0];
        for &s in group {
            let p = seq.position(t, s);
            c[0] += p[0];
            c[1] += p[1];
        }
        let n = group.len() as f64;
        [c[0] / n, c[1] / n]
    };
    let frames = (0..seq.len()).step_by(CENTROID_STRIDE);
    Ok(frames.map(|t| (centroid(t, &hands.left), centroid(t, &hands.right))).unzip())
}

/// Maximum-margin line separating the two hands' xy points.
///
/// Fails with [`Error::VerticalBoundary`] when the separator is vertical,
/// which cannot be written as `y = m·x + b`.
pub fn fit_reflection_line(left_xy: &[[f64; 2]], right_xy: &[[f64; 2]]) -> Result<ReflectionLine> {
    let svm = fit_linear_svm(left_xy, right_xy, SvmParams::default())?;
    let [wx, wy] = svm.w;
    if wy.abs() <= VERTICAL_EPS * wx.hypot(wy) {
        return Err(Error::VerticalBoundary);
    }
    Ok(ReflectionLine::new(-wx / wy, -svm.b / wy))
}

/// Reflects every pose across `line` and swaps the hands' sensor blocks.
pub fn reflect_with_line(seq: &SensorSequence, line: &ReflectionLine, hands: &HandLayout) -> Result<SensorSequence> {
    let layout = seq.layout();
    hands.validate(layout.sensors())?;
    let refl = reflection_3d(line.phi);
    let mut mirrored = seq.clone();
    for t in 0..seq.len() {
        for s in 0..layout.sensors() {
            let [x, y, z] = seq.position(t, s);
            let p = refl * Vector3::new(x, y - line.b, z);
            let e = rot_inv(&(rot(seq.euler(t, s)) * refl));
            // z is untouched by the reflection; copy it to keep it exact.
            mirrored.set_pose(t, s, [p.x, p.y + line.b, z], e);
        }
    }
    let stride = layout.stride();
    let mut out = mirrored.clone();
    for t in 0..seq.len() {
        let src = mirrored.frame(t);
        let dst = out.frame_mut(t);
        for (&l, &r) in hands.left.iter().zip(&hands.right) {
            dst[l * stride..(l + 1) * stride].copy_from_slice(&src[r * stride..(r + 1) * stride]);
            dst[r * stride..(r + 1) * stride].copy_from_slice(&src[l * stride..(l + 1) * stride]);
        }
    }
    Ok(out)
}

/// Fits the separating line for `seq`, without applying it.
pub fn fit_hand_line(seq: &SensorSequence, hands: &HandLayout) -> Result<ReflectionLine> {
    let (left, right) = hand_centroids_xy(seq, hands)?;
    fit_reflection_line(&left, &right)
}

/// Hand inversion: fit the separating line and mirror the sequence across it.
pub fn hand_inversion(seq: &SensorSequence, hands: &HandLayout) -> Result<(SensorSequence, ReflectionLine)> {
    let line = fit_hand_line(seq, hands)?;
    Ok((reflect_with_line(seq, &line, hands)?, line))
}
