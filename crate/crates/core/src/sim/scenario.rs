use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::features::NoiseConfig;
use crate::grasp::GraspConfig;
use crate::servo::ServoConfig;
use crate::LogError;

use super::{MotionModel, ObjectConfig};

/// Sampling ranges for the initial camera pose. The camera looks straight
/// down; its position is relative to the object's grasp centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StartConfig {
    /// Camera height above the object's top face, metres.
    pub height: [f64; 2],
    /// Half range of the horizontal camera offset, metres.
    pub xy_offset: f64,
    /// Half range of the initial angle between the camera x-axis and the
    /// object's grasp axis, degrees.
    pub yaw_deg: f64,
    /// Half range of the object position around the origin, metres.
    pub object_xy: f64,
    /// Grasp centre must project at least this far inside the image, pixels.
    pub view_margin_px: f64,
}

impl Default for StartConfig {
    fn default() -> Self {
        Self {
            height: [0.35, 0.45],
            xy_offset: 0.08,
            yaw_deg: 90.0,
            object_xy: 0.05,
            view_margin_px: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub max_steps: usize,
    /// Position tolerance of the end-effector at the grasp, metres.
    pub pos_tol: f64,
    /// Closing-axis tolerance modulo 180°, degrees.
    pub yaw_tol_deg: f64,
    /// Maximum finger opening, metres.
    pub gripper_opening: f64,
    /// Consecutive faulted steps after which the trial is abandoned.
    pub max_fault_steps: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            max_steps: 3000,
            pos_tol: 0.01,
            yaw_tol_deg: 5.0,
            gripper_opening: 0.10,
            max_fault_steps: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub camera: CameraModel,
    pub object: ObjectConfig,
    pub noise: NoiseConfig,
    pub grasp: GraspConfig,
    pub servo: ServoConfig,
    pub motion: MotionModel,
    pub start: StartConfig,
    pub trial: TrialConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            camera: CameraModel::default(),
            object: ObjectConfig::default(),
            noise: NoiseConfig::default(),
            grasp: GraspConfig::default(),
            servo: ServoConfig::default(),
            motion: MotionModel::Static,
            start: StartConfig::default(),
            trial: TrialConfig::default(),
        }
    }
}

impl Scenario {
    /// Reaching with IBVS from the first frame: goal predicted immediately,
    /// noiseless detection and ground-truth correspondence. The camera starts
    /// within a few degrees of the grasp orientation and servos until the
    /// features settle below half a pixel.
    pub fn experiment1() -> Self {
        let mut s = Self {
            name: "experiment1".into(),
            noise: NoiseConfig::none(),
            ..Default::default()
        };
        s.servo.switch_distance = f64::INFINITY;
        s.servo.ideal_correspondence = true;
        s.servo.grasp_err_px = 0.5;
        s.start.yaw_deg = 2.0;
        s
    }

    /// Full switching controller on a static object.
    pub fn experiment2_static() -> Self {
        Self {
            name: "experiment2-static".into(),
            ..Default::default()
        }
    }

    /// Full switching controller on an object moved at bounded speed.
    pub fn experiment2_dynamic() -> Self {
        Self {
            name: "experiment2-dynamic".into(),
            motion: MotionModel::random_planar(0.03),
            ..Default::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, LogError> {
        let sc: Self = toml::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, LogError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario fields are all representable in TOML")
    }

    pub fn validate(&self) -> Result<(), LogError> {
        let bad = |m: &str| Err(LogError::Malformed(m.to_string()));
        if self.camera.validate().is_err() {
            return bad("camera model is invalid");
        }
        if !self.servo.gains.is_valid() {
            return bad("all gains must be positive");
        }
        let positive = |x: f64| x > 0.0;
        if !positive(self.servo.dt)
            || !positive(self.servo.fixed_depth)
            || self.servo.filter.tau.is_nan()
            || self.servo.filter.tau < 0.0
        {
            return bad("dt and fixed_depth must be positive and tau non-negative");
        }
        if self.object.anchors < 8 {
            return bad("the object needs at least 8 anchors");
        }
        if self.start.height[0] > self.start.height[1] || self.start.height[0] <= 0.0 {
            return bad("start height range is empty");
        }
        Ok(())
    }
}
