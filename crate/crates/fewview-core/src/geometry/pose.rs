use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SO(3) membership tolerance used everywhere a rotation is validated.
pub const SO3_TOLERANCE: f64 = 1e-9;

/// Rigid transform from object/world coordinates into camera coordinates:
/// `x_cam = R * x_obj + t`, translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidPose {
    /// Validates that `rotation` is in SO(3) within `1e-9`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = RigidPose { rotation, translation };
        pose.check_so3()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        RigidPose { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn check_so3(&self) -> Result<()> {
        let r = &self.rotation;
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > SO3_TOLERANCE {
            return Err(Error::invalid(format!("rotation not orthonormal (|RᵀR−I|={err:.2e})")));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > SO3_TOLERANCE {
            return Err(Error::invalid(format!("rotation determinant {det} != 1")));
        }
        Ok(())
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center expressed in object coordinates.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose { rotation: rt, translation: -(rt * self.translation) }
    }
}

/// Fixed-axis X-then-Y-then-Z Euler angles (radians): `R = Rz * Ry * Rx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl EulerAngles {
    pub fn new(rx: f64, ry: f64, rz: f64) -> Self {
        EulerAngles { rx, ry, rz }
    }
}

/// Additive update of the 6 pose parameters: translation (meters) and
/// fixed-axis XYZ Euler angles (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseDelta {
    pub d_translation: Vector3<f64>,
    pub d_euler: Vector3<f64>,
}

impl PoseDelta {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.d_translation.iter().chain(self.d_euler.iter()).all(|v| v.is_finite())
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `R = Rz(rz) * Ry(ry) * Rx(rx)` (fixed-axis XYZ).
pub fn euler_to_rotation(e: &EulerAngles) -> Matrix3<f64> {
    rot_z(e.rz) * rot_y(e.ry) * rot_x(e.rx)
}

/// Inverts [`euler_to_rotation`]. The flag is true at gimbal lock
/// (`|ry| = π/2`), where `rz` is forced to 0 by convention and only the
/// combination of `rx` and `rz` is recoverable.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> (EulerAngles, bool) {
    let cy = r[(2, 1)].hypot(r[(2, 2)]);
    let ry = (-r[(2, 0)]).atan2(cy);
    if cy < 1e-9 {
        // Gimbal lock: with sy = ±1 the matrix only constrains rx ∓ rz.
        let rx = if r[(2, 0)] < 0.0 {
            // ry = +π/2
            r[(0, 1)].atan2(r[(0, 2)])
        } else {
            // ry = −π/2
            (-r[(0, 1)]).atan2(-r[(0, 2)])
        };
        return (EulerAngles::new(rx, ry, 0.0), true);
    }
    let rx = r[(2, 1)].atan2(r[(2, 2)]);
    let rz = r[(1, 0)].atan2(r[(0, 0)]);
    (EulerAngles::new(rx, ry, rz), false)
}

/// Partial derivatives of `euler_to_rotation` with respect to `[rx, ry, rz]`.
pub fn rotation_derivatives(e: &EulerAngles) -> [Matrix3<f64>; 3] {
    let (sx, cx) = e.rx.sin_cos();
    let (sy, cy) = e.ry.sin_cos();
    let (sz, cz) = e.rz.sin_cos();
    let rx = rot_x(e.rx);
    let ry = rot_y(e.ry);
    let rz = rot_z(e.rz);
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sx, -cx, 0.0, cx, -sx);
    let dry = Matrix3::new(-sy, 0.0, cy, 0.0, 0.0, 0.0, -cy, 0.0, -sy);
    let drz = Matrix3::new(-sz, -cz, 0.0, cz, -sz, 0.0, 0.0, 0.0, 0.0);
    [rz * ry * drx, rz * dry * rx, drz * ry * rx]
}

/// Translation distance (millimeters) and geodesic rotation angle (degrees).
pub fn pose_distance(a: &RigidPose, b: &RigidPose) -> (f64, f64) {
    let t_mm = (a.translation - b.translation).norm() * 1000.0;
    let rel = a.rotation * b.rotation.transpose();
    let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    (t_mm, cos.acos().to_degrees())
}

/// Offsets each translation component by `U(−trans_range, trans_range)` and
/// composes the rotation with a random Euler rotation whose angles are each
/// `U(−rot_range, rot_range)`. Deterministic in `seed`.
pub fn perturb_pose(
    pose: &RigidPose,
    trans_range_m: f64,
    rot_range_rad: f64,
    seed: u64,
) -> RigidPose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |r: f64| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
    let dt = Vector3::new(
        uniform(trans_range_m),
        uniform(trans_range_m),
        uniform(trans_range_m),
    );
    let de = EulerAngles::new(
        uniform(rot_range_rad),
        uniform(rot_range_rad),
        uniform(rot_range_rad),
    );
    RigidPose {
        rotation: euler_to_rotation(&de) * pose.rotation,
        translation: pose.translation + dt,
    }
}

/// Camera pose with center `eye` looking at `target`; +z points at the
/// target and +y points image-down. `up_hint` (world) fixes the roll; when it
/// is (anti)parallel to the view direction, +x world is used instead.
pub fn look_at_pose(
    eye: &Vector3<f64>,
    target: &Vector3<f64>,
    up_hint: &Vector3<f64>,
) -> Result<RigidPose> {
    let forward = target - eye;
    let norm = forward.norm();
    if norm < 1e-12 {
        return Err(Error::invalid("look_at_pose: eye and target coincide"));
    }
    let z = forward / norm;
    let mut up = *up_hint;
    if up.norm() < 1e-12 {
        return Err(Error::invalid("look_at_pose: zero up vector"));
    }
    up = up.normalize();
    if z.dot(&up).abs() > 1.0 - 1e-9 {
        up = Vector3::new(1.0, 0.0, 0.0);
        if z.dot(&up).abs() > 1.0 - 1e-9 {
            up = Vector3::new(0.0, 1.0, 0.0);
        }
    }
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let translation = -(rotation * eye);
    Ok(RigidPose { rotation, translation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn euler_identity() {
        let r = euler_to_rotation(&EulerAngles::new(0.0, 0.0, 0.0));
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let r = euler_to_rotation(&EulerAngles::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let v = r * Vector3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(v, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn euler_round_trip_away_from_gimbal_lock() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let e = EulerAngles::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.4..1.4),
                rng.gen_range(-3.0..3.0),
            );
            let (back, degenerate) = rotation_to_euler(&euler_to_rotation(&e));
            assert!(!degenerate);
            assert!((back.rx - e.rx).abs() < 1e-9);
            assert!((back.ry - e.ry).abs() < 1e-9);
            assert!((back.rz - e.rz).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_to_euler_basics() {
        let (e, d) = rotation_to_euler(&Matrix3::identity());
        assert!(!d);
        assert_eq!((e.rx, e.ry, e.rz), (0.0, 0.0, 0.0));

        let a = std::f64::consts::FRAC_PI_6;
        let (e, d) = rotation_to_euler(&euler_to_rotation(&EulerAngles::new(0.0, 0.0, a)));
        assert!(!d);
        assert!((e.rz - a).abs() < 1e-12 && e.rx.abs() < 1e-12 && e.ry.abs() < 1e-12);
    }

    #[test]
    fn gimbal_lock_is_flagged_and_rz_zeroed() {
        for ry in [std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2] {
            let r = euler_to_rotation(&EulerAngles::new(0.3, ry, 0.0));
            let (e, degenerate) = rotation_to_euler(&r);
            assert!(degenerate);
            assert_eq!(e.rz, 0.0);
            // The recovered angles must still reproduce the rotation.
            let back = euler_to_rotation(&e);
            assert!((back - r).abs().max() < 1e-9);
        }
    }

    #[test]
    fn rotation_derivatives_match_finite_differences() {
        let e = EulerAngles::new(0.4, -0.7, 1.1);
        let d = rotation_derivatives(&e);
        let h = 1e-7;
        for (j, dj) in d.iter().enumerate() {
            let mut plus = e;
            let mut minus = e;
            match j {
                0 => {
                    plus.rx += h;
                    minus.rx -= h;
                }
                1 => {
                    plus.ry += h;
                    minus.ry -= h;
                }
                _ => {
                    plus.rz += h;
                    minus.rz -= h;
                }
            }
            let fd = (euler_to_rotation(&plus) - euler_to_rotation(&minus)) / (2.0 * h);
            assert!((fd - dj).abs().max() < 1e-6);
        }
    }

    #[test]
    fn pose_distance_examples() {
        let a = RigidPose::identity();
        assert_eq!(pose_distance(&a, &a), (0.0, 0.0));

        let b = RigidPose { rotation: Matrix3::identity(), translation: Vector3::new(0.3, 0.0, 0.0) };
        let (t, r) = pose_distance(&a, &b);
        assert_relative_eq!(t, 300.0, epsilon = 1e-9);
        assert_relative_eq!(r, 0.0, epsilon = 1e-9);

        let c = RigidPose {
            rotation: euler_to_rotation(&EulerAngles::new(0.0, 45f64.to_radians(), 0.0)),
            translation: Vector3::zeros(),
        };
        let (t, r) = pose_distance(&a, &c);
        assert_relative_eq!(t, 0.0, epsilon = 1e-9);
        assert_relative_eq!(r, 45.0, epsilon = 1e-9);
    }

    #[test]
    fn pose_distance_is_symmetric() {
        let a = perturb_pose(&RigidPose::identity(), 0.5, 1.0, 3);
        let b = perturb_pose(&RigidPose::identity(), 0.5, 1.0, 4);
        let (t1, r1) = pose_distance(&a, &b);
        let (t2, r2) = pose_distance(&b, &a);
        assert!((t1 - t2).abs() < 1e-12);
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn perturb_pose_zero_ranges_is_identity() {
        let p = look_at_pose(
            &Vector3::new(0.4, 0.2, 0.5),
            &Vector3::zeros(),
            &Vector3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let q = perturb_pose(&p, 0.0, 0.0, 99);
        assert_eq!(p.translation, q.translation);
        assert_eq!(p.rotation, q.rotation);
    }

    #[test]
    fn perturb_pose_is_deterministic_and_bounded() {
        let p = RigidPose::identity();
        let a = perturb_pose(&p, 0.01, 0.05, 7);
        let b = perturb_pose(&p, 0.01, 0.05, 7);
        assert_eq!(a.translation, b.translation);
        assert_eq!(a.rotation, b.rotation);

        // Monte-Carlo bound check over 10k samples.
        let t_bound = 10.0 * 3f64.sqrt() + 1e-9;
        for seed in 0..10_000u64 {
            let q = perturb_pose(&p, 0.01, 0.05, seed);
            q.check_so3().unwrap();
            let (t_mm, r_deg) = pose_distance(&p, &q);
            assert!(t_mm <= t_bound, "translation {t_mm} mm exceeds bound");
            assert!(r_deg.to_radians() <= 3.0 * 0.05 + 1e-9);
        }
    }

    #[test]
    fn look_at_distance_and_depth() {
        let eye = Vector3::new(0.3, -0.2, 0.6);
        let p = look_at_pose(&eye, &Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        p.check_so3().unwrap();
        // The origin must sit on the optical axis at depth ‖eye‖.
        let o = p.transform_point(&Vector3::zeros());
        assert_relative_eq!(o.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(o.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(o.z, eye.norm(), epsilon = 1e-12);
        assert_relative_eq!(p.camera_center(), eye, epsilon = 1e-12);
    }

    #[test]
    fn look_at_handles_degenerate_up() {
        let eye = Vector3::new(0.0, 0.0, 1.0);
        let p = look_at_pose(&eye, &Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        p.check_so3().unwrap();
    }
}
