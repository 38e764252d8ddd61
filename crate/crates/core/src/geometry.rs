//! Rigid-body pose algebra on SE(3) and spatial velocities.
//!
//! A [`Pose`] `a_T_b` maps points expressed in frame `b` into frame `a`:
//! `p_a = R p_b + t`. Composition follows the usual left-to-right chaining,
//! so `compose(a_T_b, b_T_c) = a_T_c`.
//!
//! Spatial velocities are body-frame twists `(v, w)`: the linear velocity of
//! the frame origin and the angular velocity, both expressed in the moving
//! frame itself.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Rigid-body transform with an orthonormal rotation and a translation in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    /// Builds a pose from a raw 3×3 matrix, re-orthonormalising it.
    pub fn from_matrix_parts(rotation: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let q = UnitQuaternion::from_matrix(rotation);
        Self {
            rotation: q.to_rotation_matrix(),
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::new(Rotation3::from_axis_angle(&Vector3::x_axis(), angle), Vector3::zeros())
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::new(Rotation3::from_axis_angle(&Vector3::y_axis(), angle), Vector3::zeros())
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::new(Rotation3::from_axis_angle(&Vector3::z_axis(), angle), Vector3::zeros())
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose {
        inverse(self)
    }

    /// Maps a point from the child frame into the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Maps a point from the parent frame into the child frame.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// 4×4 homogeneous matrix.
    pub fn to_homogeneous(&self) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Applies a body-frame twist for `dt` seconds using the exact SE(3)
    /// exponential map: `self • exp(dt·twist)`.
    pub fn integrate(&self, twist: &SpatialVelocity, dt: f64) -> Pose {
        self.compose(&exp_twist(twist, dt))
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = self.rotation.matrix();
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        ortho < tol && (r.determinant() - 1.0).abs() < tol && self.translation.iter().all(|v| v.is_finite())
    }
}

/// `a • b`: the transform that applies `b` first, then `a`, to a point.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn inverse(a: &Pose) -> Pose {
    let rt = a.rotation.inverse();
    Pose {
        rotation: rt,
        translation: -(rt * a.translation),
    }
}

/// Combined linear (m/s) and angular (rad/s) velocity of a rigid body.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpatialVelocity {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl SpatialVelocity {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    /// Ordered as `(vx, vy, vz, wx, wy, wz)`.
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }
}

/// Converts a camera body twist into the end-effector body twist that
/// produces the same rigid-body motion, given the hand–eye pose `e_T_c`.
///
/// This is the adjoint of `e_T_c`:
///   `w_e = R w_c`, `v_e = R v_c + t × (R w_c)`.
///
/// With a pure rotation offset `Rz(90°)`, a camera velocity along camera `x`
/// maps to `+y` of the end-effector frame.
pub fn velocity_transform(offset: &Pose, v: &SpatialVelocity) -> SpatialVelocity {
    let angular = offset.rotation * v.angular;
    let linear = offset.rotation * v.linear + offset.translation.cross(&angular);
    SpatialVelocity { linear, angular }
}

/// 6-vector `(t; θ·u)` of a relative pose: the translation followed by the
/// axis-angle (matrix logarithm) of the rotation.
pub fn pose_error_vector(rel: &Pose) -> Vector6<f64> {
    let w = rel.rotation.scaled_axis();
    Vector6::new(rel.translation.x, rel.translation.y, rel.translation.z, w.x, w.y, w.z)
}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// SE(3) exponential of the twist scaled by `dt`.
pub fn exp_twist(twist: &SpatialVelocity, dt: f64) -> Pose {
    let w = twist.angular * dt;
    let v = twist.linear * dt;
    let theta = w.norm();
    let rotation = Rotation3::new(w);
    let k = skew(&w);
    let (b, c) = if theta < 1e-3 {
        // Taylor expansions of (1 - cos θ)/θ² and (θ - sin θ)/θ³; the closed
        // forms cancel catastrophically for small θ.
        let t2 = theta * theta;
        (
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    let jac = Matrix3::identity() + k * b + k * k * c;
    Pose {
        rotation,
        translation: jac * v,
    }
}

/// Position plus intrinsic XYZ roll/pitch/yaw: `R = Rx(roll)·Ry(pitch)·Rz(yaw)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RpyPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl RpyPose {
    pub fn to_pose(&self) -> Pose {
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), self.roll);
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), self.pitch);
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw);
        Pose {
            rotation: rx * ry * rz,
            translation: Vector3::new(self.x, self.y, self.z),
        }
    }

    /// Inverse of [`RpyPose::to_pose`]; singular at `pitch = ±π/2`.
    pub fn from_pose(p: &Pose) -> Self {
        let r = p.rotation.matrix();
        let pitch = r[(0, 2)].clamp(-1.0, 1.0).asin();
        let yaw = (-r[(0, 1)]).atan2(r[(0, 0)]);
        let roll = (-r[(1, 2)]).atan2(r[(2, 2)]);
        Self {
            x: p.translation.x,
            y: p.translation.y,
            z: p.translation.z,
            roll,
            pitch,
            yaw,
        }
    }
}

impl From<RpyPose> for Pose {
    fn from(r: RpyPose) -> Self {
        r.to_pose()
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = a.rem_euclid(two_pi);
    if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// Wraps an angle into `(-π/2, π/2]`, the natural range of an undirected axis.
pub fn wrap_half_angle(a: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut x = a.rem_euclid(pi);
    if x > pi / 2.0 {
        x -= pi;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn assert_pose_eq(a: &Pose, b: &Pose, tol: f64) {
        assert_relative_eq!(a.rotation.matrix(), b.rotation.matrix(), epsilon = tol);
        assert_relative_eq!(a.translation, b.translation, epsilon = tol);
    }

    #[test]
    fn compose_identity_and_translations() {
        let p = Pose::rot_y(0.3).compose(&Pose::from_translation(0.1, -0.2, 0.5));
        assert_pose_eq(&compose(&Pose::identity(), &p), &p, 1e-15);
        let sum = compose(
            &Pose::from_translation(1.0, 0.0, 0.0),
            &Pose::from_translation(2.0, 0.0, 0.0),
        );
        assert_pose_eq(&sum, &Pose::from_translation(3.0, 0.0, 0.0), 1e-15);
    }

    #[test]
    fn rotation_then_translation() {
        let r = compose(&Pose::rot_z(FRAC_PI_2), &Pose::from_translation(1.0, 0.0, 0.0));
        assert_relative_eq!(r.translation, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn inverse_basic() {
        assert_pose_eq(&inverse(&Pose::identity()), &Pose::identity(), 0.0);
        assert_pose_eq(
            &inverse(&Pose::from_translation(1.0, 0.0, 0.0)),
            &Pose::from_translation(-1.0, 0.0, 0.0),
            0.0,
        );
    }

    #[test]
    fn velocity_transform_identity_is_exact() {
        let v = SpatialVelocity::new(Vector3::new(0.1, -0.2, 0.3), Vector3::new(1.0, 2.0, -3.0));
        assert_eq!(velocity_transform(&Pose::identity(), &v), v);
    }

    #[test]
    fn velocity_transform_rotation_convention() {
        let v = SpatialVelocity::new(Vector3::x(), Vector3::zeros());
        let out = velocity_transform(&Pose::rot_z(FRAC_PI_2), &v);
        assert_relative_eq!(out.linear, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(out.angular, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn pose_error_vector_cases() {
        assert_eq!(pose_error_vector(&Pose::identity()), Vector6::zeros());
        let e = pose_error_vector(&Pose::from_translation(0.0, 0.0, 0.2));
        assert_relative_eq!(e, Vector6::new(0.0, 0.0, 0.2, 0.0, 0.0, 0.0), epsilon = 1e-15);
        let e = pose_error_vector(&Pose::rot_z(0.1));
        assert_relative_eq!(e, Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.1), epsilon = 1e-12);
    }

    #[test]
    fn exp_twist_pure_translation() {
        let v = SpatialVelocity::new(Vector3::new(0.0, 0.0, 0.3), Vector3::zeros());
        let mut p = Pose::identity();
        for _ in 0..30 {
            p = p.integrate(&v, 1.0 / 30.0);
        }
        assert_relative_eq!(p.translation, Vector3::new(0.0, 0.0, 0.3), epsilon = 1e-9);
    }

    #[test]
    fn exp_twist_small_angle_branch_is_continuous() {
        let v = Vector3::new(0.2, -0.1, 0.4);
        let a = exp_twist(
            &SpatialVelocity::new(v, Vector3::new(0.0, 0.0, 1e-3 * (1.0 - 1e-9))),
            1.0,
        );
        let b = exp_twist(
            &SpatialVelocity::new(v, Vector3::new(0.0, 0.0, 1e-3 * (1.0 + 1e-9))),
            1.0,
        );
        assert_relative_eq!(a.translation, b.translation, epsilon = 1e-12);
    }

    #[test]
    fn rpy_yaw_only_matches_rot_z() {
        let r = RpyPose {
            yaw: 0.7,
            ..Default::default()
        }
        .to_pose();
        assert_pose_eq(&r, &Pose::rot_z(0.7), 1e-15);
    }

    #[test]
    fn wrap_helpers() {
        assert_relative_eq!(
            wrap_angle(3.0 * std::f64::consts::PI),
            std::f64::consts::PI,
            epsilon = 1e-12
        );
        assert_relative_eq!(wrap_half_angle(FRAC_PI_2 + 0.1), -FRAC_PI_2 + 0.1, epsilon = 1e-12);
        assert_relative_eq!(wrap_half_angle(FRAC_PI_2), FRAC_PI_2, epsilon = 1e-12);
    }
}
