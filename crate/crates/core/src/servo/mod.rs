//! Visual servo control laws and the PBVS→IBVS switching controller.

mod controller;
mod goal;

pub use controller::{switch_and_step, Capture, ControllerState, Fault, Mode, Observation, StepReport};
pub use goal::{mean_pixel_error, predict_goal_features, GoalConfig, IbvsGoal};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2x6, Point2, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraModel;
use crate::features::MatchConfig;
use crate::geometry::{pose_error_vector, velocity_transform, Pose, RpyPose, SpatialVelocity};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServoError {
    #[error("IBVS needs at least 3 features, got {0}")]
    TooFewFeatures(usize),
    #[error("interaction matrix has rank {rank} < 6 and leaves a residual of {residual:.3e} px")]
    DegenerateJacobian { rank: usize, residual: f64 },
    #[error("only {0} goal features survive prediction, at least 3 are needed")]
    NoValidGoal(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainConfig {
    /// Diagonal PBVS gains, `(vx, vy, vz, wx, wy, wz)`.
    pub lambda_p: [f64; 6],
    pub lambda_i: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            lambda_p: [1.5, 1.5, 1.5, 1.0, 1.0, 1.0],
            lambda_i: 1.0,
        }
    }
}

impl GainConfig {
    pub fn is_valid(&self) -> bool {
        self.lambda_p.iter().all(|&g| g > 0.0 && g.is_finite()) && self.lambda_i > 0.0 && self.lambda_i.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Low-pass time constant, seconds.
    pub tau: f64,
    /// Per-axis slew limit, (m/s)/s for linear and (rad/s)/s for angular axes.
    pub max_accel: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            tau: 0.15,
            max_accel: 2.0,
        }
    }
}

/// Controller configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServoConfig {
    pub gains: GainConfig,
    pub filter: FilterConfig,
    /// Sensed grasp distance below which range data is treated as invalid.
    pub switch_distance: f64,
    /// Depth used for every interaction-matrix row.
    pub fixed_depth: f64,
    /// Replace the fixed depth by the depth of each captured feature point
    /// in the current camera frame, from forward kinematics.
    pub use_kinematic_depth: bool,
    pub grasp_err_px: f64,
    pub grasp_hold: usize,
    /// Goal features must project inside the image scaled by this factor
    /// about its centre.
    pub goal_margin: f64,
    /// Match by simulator ground truth instead of descriptors.
    pub ideal_correspondence: bool,
    pub matching: MatchConfig,
    /// Camera pose in the end-effector frame, `e_T_c`.
    pub hand_eye: RpyPose,
    /// Control period, seconds.
    pub dt: f64,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            gains: GainConfig::default(),
            filter: FilterConfig::default(),
            switch_distance: 0.25,
            fixed_depth: 0.05,
            use_kinematic_depth: false,
            grasp_err_px: 2.0,
            grasp_hold: 10,
            goal_margin: 1.5,
            ideal_correspondence: false,
            matching: MatchConfig::default(),
            hand_eye: RpyPose {
                x: 0.0,
                y: 0.01,
                z: -0.07,
                roll: 0.0,
                pitch: 0.0,
                yaw: 0.0,
            },
            dt: 1.0 / 30.0,
        }
    }
}

impl ServoConfig {
    pub fn hand_eye_pose(&self) -> Pose {
        self.hand_eye.to_pose()
    }

    pub fn goal_config(&self) -> GoalConfig {
        GoalConfig {
            margin: self.goal_margin,
            fixed_depth: self.fixed_depth,
        }
    }
}

/// Proportional PBVS law on the relative pose `c_T_c*`. Returns the camera
/// body velocity.
pub fn pbvs_step(rel: &Pose, gains: &GainConfig) -> SpatialVelocity {
    let e = pose_error_vector(rel);
    SpatialVelocity::from_vector(&e.component_mul(&Vector6::from(gains.lambda_p)))
}

/// Interaction matrix of an image point at pixel `(u, v)` with depth `z`.
/// Rows are pixel velocities `(u̇, v̇)` produced by a unit camera body twist
/// `(vx, vy, vz, wx, wy, wz)`.
pub fn interaction_matrix(pixel: &Point2<f64>, z: f64, cam: &CameraModel) -> Matrix2x6<f64> {
    let f = cam.focal_px;
    let u = pixel.x - cam.u0();
    let v = pixel.y - cam.v0();
    #[rustfmt::skip]
    let j = Matrix2x6::new(
        -f / z, 0.0, u / z, u * v / f, -(f * f + u * u) / f, v,
        0.0, -f / z, v / z, (f * f + v * v) / f, -u * v / f, -u,
    );
    j
}

/// One stacked IBVS row pair: current pixel, goal pixel and the depth used
/// for its interaction matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbvsRow {
    pub pixel: Point2<f64>,
    pub goal: Point2<f64>,
    pub depth: f64,
}

/// `ν_c = −λ J⁺ e` over the stacked rows, as a camera body velocity.
pub fn ibvs_camera_velocity(rows: &[IbvsRow], lambda: f64, cam: &CameraModel) -> Result<SpatialVelocity, ServoError> {
    if rows.len() < 3 {
        return Err(ServoError::TooFewFeatures(rows.len()));
    }
    let n = rows.len();
    let mut j = DMatrix::zeros(2 * n, 6);
    let mut e = DVector::zeros(2 * n);
    for (i, r) in rows.iter().enumerate() {
        j.fixed_view_mut::<2, 6>(2 * i, 0)
            .copy_from(&interaction_matrix(&r.pixel, r.depth, cam));
        e[2 * i] = r.pixel.x - r.goal.x;
        e[2 * i + 1] = r.pixel.y - r.goal.y;
    }
    let svd = j.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = 1e-10 * s_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let j_pinv = svd.pseudo_inverse(tol).expect("both factors were computed");
    let nu = j_pinv * &e;
    if rank < 6 {
        let residual = (&e - &j * &nu).norm();
        if residual > 1e-6 * (1.0 + e.norm()) {
            return Err(ServoError::DegenerateJacobian { rank, residual });
        }
    }
    Ok(SpatialVelocity::from_vector(&Vector6::from_iterator(
        nu.iter().map(|x| -lambda * x),
    )))
}

/// IBVS law with the goal's fixed depth for every row. `current` maps
/// reference feature ids to their current pixels; rows are stacked in id
/// order over the ids present in both `current` and the goal. Returns the
/// end-effector body velocity.
pub fn ibvs_step(
    current: &BTreeMap<u32, Point2<f64>>,
    goal: &IbvsGoal,
    gains: &GainConfig,
    hand_eye: &Pose,
    cam: &CameraModel,
) -> Result<SpatialVelocity, ServoError> {
    let rows: Vec<IbvsRow> = current
        .iter()
        .filter_map(|(id, p)| {
            goal.pixels.get(id).map(|g| IbvsRow {
                pixel: *p,
                goal: *g,
                depth: goal.fixed_depth,
            })
        })
        .collect();
    let nu_c = ibvs_camera_velocity(&rows, gains.lambda_i, cam)?;
    Ok(velocity_transform(hand_eye, &nu_c))
}

/// First-order low-pass towards `raw` with a per-axis slew limit.
pub fn continuity_filter(
    prev: &SpatialVelocity,
    raw: &SpatialVelocity,
    dt: f64,
    cfg: &FilterConfig,
) -> SpatialVelocity {
    let alpha = dt / (dt + cfg.tau);
    let limit = cfg.max_accel * dt;
    let p = prev.to_vector();
    let r = raw.to_vector();
    let out = Vector6::from_fn(|i, _| {
        let step = (alpha * (r[i] - p[i])).clamp(-limit, limit);
        p[i] + step
    });
    SpatialVelocity::from_vector(&out)
}
