//! Rotation algebra and the two pose-space augmentations: world frame
//! rotation and hand inversion.

mod augment;
mod rotation;
mod svm;

pub use augment::{
    fit_hand_line, fit_reflection_line, hand_centroids_xy, hand_inversion, reflect_with_line, rotate_world,
    world_frame_rotation, HandLayout, ReflectionLine, CENTROID_STRIDE,
};
pub use rotation::{is_proper_rotation, orthonormalize, reflection_2d, reflection_3d, rot, rot_inv};
pub use svm::{fit_linear_svm, LinearSvm, SvmParams};
