//! Channel selection for the 76-column robotic kinematics format.
//!
//! Each row holds four 19-column manipulator blocks (two master arms, then
//! two patient-side arms). A block is position (3), rotation matrix (9,
//! row-major), linear velocity (3), angular velocity (3), gripper angle (1).
//! Only the patient-side blocks are kept.

use nalgebra::Matrix3;

use super::sequence::{ChannelLayout, SensorSequence};
use crate::error::{Error, Result};
use crate::geometry::{orthonormalize, rot_inv};

pub const RAW_WIDTH: usize = 76;
pub const BLOCK_WIDTH: usize = 19;
/// First column of the left and right patient-side blocks.
pub const PSM_OFFSETS: [usize; 2] = [38, 57];
pub const NATIVE_RATE_HZ: f64 = 30.0;
/// Largest tolerated deviation of `RᵀR` from identity before repair.
const ORTHO_TOL: f64 = 1e-3;

/// Converts one block's rotation columns into Euler angles, repairing
/// matrices that drifted from orthogonality.
fn block_euler(block: &[f64], row: usize) -> [f64; 3] {
    let r = Matrix3::from_row_slice(&block[3..12]);
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if err > ORTHO_TOL || r.determinant() < 0.0 {
        log::warn!("row {row}: rotation block off by {err:.2e}; re-orthogonalizing");
        rot_inv(&orthonormalize(&r))
    } else {
        rot_inv(&r)
    }
}

/// Extracts the 14-channel robotic layout from raw 76-column rows.
pub fn jigsaws_extract(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<SensorSequence> {
    let mut channels = Vec::with_capacity(rows.len() * 14);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != RAW_WIDTH {
            return Err(Error::invalid(format!(
                "row {i} has {} columns, expected {RAW_WIDTH}",
                row.len()
            )));
        }
        for off in PSM_OFFSETS {
            let block = &row[off..off + BLOCK_WIDTH];
            channels.extend_from_slice(&block[..3]);
            channels.extend_from_slice(&block_euler(block, i));
            channels.push(block[18]);
        }
    }
    SensorSequence::new(NATIVE_RATE_HZ, ChannelLayout::Robotic, channels, labels)
}

/// Builds a raw row whose patient-side blocks carry the given poses; used to
/// construct fixtures.
pub fn raw_row(psm: [([f64; 3], Matrix3<f64>, f64); 2]) -> Vec<f64> {
    let mut row = vec![0.0; RAW_WIDTH];
    for (off, (p, r, grip)) in PSM_OFFSETS.into_iter().zip(psm) {
        row[off..off + 3].copy_from_slice(&p);
        for i in 0..3 {
            for j in 0..3 {
                row[off + 3 + 3 * i + j] = r[(i, j)];
            }
        }
        row[off + 18] = grip;
    }
    row
}
