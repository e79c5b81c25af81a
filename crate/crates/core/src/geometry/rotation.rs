use nalgebra::{Matrix2, Matrix3};

/// Rotation about the z axis by `a` radians.
fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Intrinsic ZYX Euler angles (degrees) to a rotation matrix:
/// `R = Rz(e1)·Ry(e2)·Rx(e3)`.
pub fn rot(euler_deg: [f64; 3]) -> Matrix3<f64> {
    let [a, b, c] = euler_deg.map(f64::to_radians);
    rz(a) * ry(b) * rx(c)
}

/// Threshold on `|R[2,0]|` beyond which the pitch is treated as ±90°.
const GIMBAL_EPS: f64 = 1e-12;

/// Matrix to intrinsic ZYX Euler angles (degrees), each in `[−180, 180]`.
///
/// The matrix need not be a proper rotation; the same extraction formulas
/// are applied to reflected (det = −1) matrices. At gimbal lock the roll is
/// set to zero and the remaining z rotation is folded into the yaw.
pub fn rot_inv(r: &Matrix3<f64>) -> [f64; 3] {
    let s = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let (e1, e2, e3) = if 1.0 - s.abs() <= GIMBAL_EPS {
        let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
        (yaw, s.signum() * std::f64::consts::FRAC_PI_2, 0.0)
    } else {
        (r[(1, 0)].atan2(r[(0, 0)]), s.asin(), r[(2, 1)].atan2(r[(2, 2)]))
    };
    [e1.to_degrees(), e2.to_degrees(), e3.to_degrees()]
}

/// 2-D reflection across a line through the origin at angle `phi` (radians).
pub fn reflection_2d(phi: f64) -> Matrix2<f64> {
    let (s, c) = (2.0 * phi).sin_cos();
    Matrix2::new(c, s, s, -c)
}

/// [`reflection_2d`] extended with an untouched z axis.
pub fn reflection_3d(phi: f64) -> Matrix3<f64> {
    let (s, c) = (2.0 * phi).sin_cos();
    Matrix3::new(c, s, 0.0, s, -c, 0.0, 0.0, 0.0, 1.0)
}

/// True when `RᵀR = I` and `det R = +1` within `tol`.
pub fn is_proper_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Gram-Schmidt re-orthonormalization of the columns of `m`, keeping a
/// right-handed frame.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = m.column(0).normalize();
    let c1 = (m.column(1) - c0 * c0.dot(&m.column(1))).normalize();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_yaw_examples() {
        assert_eq!(rot([0.0; 3]), Matrix3::identity());
        let r = rot([90.0, 0.0, 0.0]);
        let want = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - want).abs().max() < 1e-15);
        assert_eq!(rot_inv(&Matrix3::identity()), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn known_angles_round_trip() {
        let e = rot_inv(&rot([30.0, 40.0, 50.0]));
        for (a, b) in e.iter().zip([30.0, 40.0, 50.0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn gimbal_lock_zeroes_roll() {
        // Pitch of +90° with yaw and roll mixed: only e1 - e3 is observable.
        let r = rot([70.0, 90.0, 25.0]);
        assert!((r[(2, 0)] + 1.0).abs() < 1e-15);
        let e = rot_inv(&r);
        assert_eq!(e[2], 0.0);
        assert!((e[1] - 90.0).abs() < 1e-6);
        assert!((e[0] - 45.0).abs() < 1e-6);
        assert!((rot(e) - r).abs().max() < 1e-8);

        let r = rot([10.0, -90.0, 0.0]);
        let e = rot_inv(&r);
        assert!((e[1] + 90.0).abs() < 1e-6 && e[2] == 0.0);
        assert!((rot(e) - r).abs().max() < 1e-8);
    }

    #[test]
    fn reflections_are_improper_orthogonal() {
        for i in -20..=20 {
            let phi = i as f64 * 0.07;
            let m = reflection_3d(phi);
            assert!((m.transpose() * m - Matrix3::identity()).abs().max() < 1e-12);
            assert!((m.determinant() + 1.0).abs() < 1e-12);
            assert!(!is_proper_rotation(&m, 1e-9));
        }
        let swap = reflection_2d(std::f64::consts::FRAC_PI_4);
        assert!((swap - Matrix2::new(0.0, 1.0, 1.0, 0.0)).abs().max() < 1e-15);
    }

    #[test]
    fn orthonormalize_repairs_noise() {
        let mut m = rot([12.0, -33.0, 71.0]);
        m[(0, 1)] += 2e-3;
        m[(2, 2)] -= 1e-3;
        let o = orthonormalize(&m);
        assert!(is_proper_rotation(&o, 1e-12));
        assert!((o - m).abs().max() < 5e-3);
    }

    proptest! {
        #[test]
        fn rot_is_proper_and_round_trips(
            a in -180.0f64..180.0, b in -89.0f64..89.0, c in -180.0f64..180.0
        ) {
            let r = rot([a, b, c]);
            prop_assert!(is_proper_rotation(&r, 1e-9));
            let back = rot(rot_inv(&r));
            prop_assert!((back - r).norm() <= 1e-8);
        }
    }
}
