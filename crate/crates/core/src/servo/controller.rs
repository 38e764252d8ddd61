use std::collections::BTreeMap;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::{
    continuity_filter, ibvs_camera_velocity, mean_pixel_error, pbvs_step, predict_goal_features, IbvsGoal, IbvsRow,
    ServoConfig, ServoError,
};
use crate::camera::{camera_matrix, CameraModel, DepthImage};
use crate::features::{ideal_matches, robust_match, FeatureSet, MatchFailure};
use crate::geometry::{velocity_transform, Pose, SpatialVelocity};
use crate::grasp::{desired_camera_pose, grasp_to_pose, Grasp, GraspError, GraspPose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Pbvs,
    Ibvs,
    Grasp,
    Done,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pbvs => "PBVS",
            Mode::Ibvs => "IBVS",
            Mode::Grasp => "GRASP",
            Mode::Done => "DONE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Mode::Pbvs, Mode::Ibvs, Mode::Grasp, Mode::Done]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

/// What the controller sees on one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub frame: u64,
    /// World pose of the camera from forward kinematics.
    pub camera_pose: Pose,
    /// Present only while range data is being acquired.
    pub depth: Option<DepthImage>,
    pub features: FeatureSet,
    /// Tracked best grasp, when a grasp map was computed and had one.
    pub grasp: Option<Grasp>,
    /// Sensed depth at the grasp pixel; `None` when invalid or unknown.
    pub distance: Option<f64>,
}

/// Data recorded once at the PBVS→IBVS switch.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    /// Reference features with valid depth.
    pub stored_ref: FeatureSet,
    /// World camera pose of the reference frame.
    pub stored_pose: Pose,
    /// World camera pose at the synthesized grasp.
    pub grasp_cam_pose: Pose,
    pub goal: IbvsGoal,
    /// Frame number of the observation that triggered the switch.
    pub frame: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct PbvsFrame {
    features: FeatureSet,
    camera_pose: Pose,
    grasp: GraspPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub mode: Mode,
    pub capture: Option<Capture>,
    pub last_cmd: SpatialVelocity,
    /// Number of captures performed; one-shot, so at most 1.
    pub captures: usize,
    /// Consecutive steps with the pixel error under the grasp threshold.
    pub settled: usize,
    last_valid: Option<PbvsFrame>,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self::new()
    }
}

impl ControllerState {
    pub fn new() -> Self {
        Self {
            mode: Mode::Pbvs,
            capture: None,
            last_cmd: SpatialVelocity::zero(),
            captures: 0,
            settled: 0,
            last_valid: None,
        }
    }

    pub fn goal(&self) -> Option<&IbvsGoal> {
        self.capture.as_ref().map(|c| &c.goal)
    }
}

/// Reason a step produced a hold-position command.
#[derive(Debug, Clone, PartialEq)]
pub enum Fault {
    /// PBVS has no grasp to servo on.
    GraspLost(GraspError),
    /// Nothing to capture from, or goal prediction failed.
    NoGoal(String),
    Match(MatchFailure),
    Servo(ServoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub mode: Mode,
    pub mean_err_px: Option<f64>,
    pub n_matches: usize,
    pub captured: bool,
    pub fault: Option<Fault>,
    /// Current pixels of the matched goal features, by reference id.
    pub tracked: BTreeMap<u32, Point2<f64>>,
    /// Unfiltered end-effector command.
    pub raw_cmd: SpatialVelocity,
}

impl StepReport {
    fn new(mode: Mode) -> Self {
        Self {
            mode,
            mean_err_px: None,
            n_matches: 0,
            captured: false,
            fault: None,
            tracked: BTreeMap::new(),
            raw_cmd: SpatialVelocity::zero(),
        }
    }
}

/// One control tick of the switching controller. Returns the filtered
/// end-effector body velocity, the next state and a report for logging.
pub fn switch_and_step(
    obs: &Observation,
    mut state: ControllerState,
    cam: &CameraModel,
    cfg: &ServoConfig,
) -> (SpatialVelocity, ControllerState, StepReport) {
    let mut report = StepReport::new(state.mode);
    let raw = match state.mode {
        Mode::Grasp | Mode::Done => {
            state.mode = Mode::Done;
            state.capture = None;
            SpatialVelocity::zero()
        }
        Mode::Pbvs => pbvs_tick(obs, &mut state, cam, cfg, &mut report),
        Mode::Ibvs => ibvs_tick(obs, &mut state, cam, cfg, &mut report),
    };
    report.raw_cmd = raw;
    report.mode = state.mode;
    let cmd = continuity_filter(&state.last_cmd, &raw, cfg.dt, &cfg.filter);
    state.last_cmd = cmd;
    (cmd, state, report)
}

fn pbvs_frame(obs: &Observation, cam: &CameraModel) -> Result<PbvsFrame, Fault> {
    let grasp = obs.grasp.ok_or(Fault::GraspLost(GraspError::ObjectNotVisible))?;
    let depth = obs
        .depth
        .as_ref()
        .ok_or(Fault::GraspLost(GraspError::InvalidDepthAtGrasp {
            u: grasp.u,
            v: grasp.v,
        }))?;
    let cm = camera_matrix(cam, &Pose::identity());
    let gp = grasp_to_pose(&grasp, &cm, depth).map_err(Fault::GraspLost)?;
    Ok(PbvsFrame {
        features: obs.features.clone(),
        camera_pose: obs.camera_pose,
        grasp: gp,
    })
}

fn pbvs_tick(
    obs: &Observation,
    state: &mut ControllerState,
    cam: &CameraModel,
    cfg: &ServoConfig,
    report: &mut StepReport,
) -> SpatialVelocity {
    if obs.grasp.is_none() {
        report.fault = Some(Fault::GraspLost(GraspError::ObjectNotVisible));
        return SpatialVelocity::zero();
    }
    let hand_eye = cfg.hand_eye_pose();
    let current = obs.distance.map(|_| pbvs_frame(obs, cam));
    match (obs.distance, current) {
        (Some(d), Some(Ok(frame))) if d >= cfg.switch_distance => {
            let rel = desired_camera_pose(&frame.grasp, &hand_eye);
            let nu_c = pbvs_step(&rel, &cfg.gains);
            state.last_valid = Some(frame);
            velocity_transform(&hand_eye, &nu_c)
        }
        (_, current) => {
            let source = match current {
                Some(Ok(frame)) => Some(frame),
                _ => state.last_valid.take(),
            };
            let Some(source) = source else {
                report.fault = Some(Fault::NoGoal("no valid depth frame to capture".into()));
                return SpatialVelocity::zero();
            };
            match capture(&source, obs.frame, cam, cfg) {
                Ok(c) => {
                    state.capture = Some(c);
                    state.captures += 1;
                    state.mode = Mode::Ibvs;
                    state.last_valid = None;
                    report.captured = true;
                    ibvs_tick(obs, state, cam, cfg, report)
                }
                Err(e) => {
                    report.fault = Some(Fault::NoGoal(e.to_string()));
                    SpatialVelocity::zero()
                }
            }
        }
    }
}

fn capture(src: &PbvsFrame, frame: u64, cam: &CameraModel, cfg: &ServoConfig) -> Result<Capture, ServoError> {
    let mut stored_ref = src.features.clone();
    stored_ref.features.retain(|f| f.z.is_some());
    let rel = desired_camera_pose(&src.grasp, &cfg.hand_eye_pose());
    let grasp_cam_pose = src.camera_pose.compose(&rel);
    let cm = camera_matrix(cam, &Pose::identity());
    let goal = predict_goal_features(
        &stored_ref,
        &cm,
        &src.camera_pose,
        &grasp_cam_pose,
        cam,
        &cfg.goal_config(),
    )?;
    Ok(Capture {
        stored_ref,
        stored_pose: src.camera_pose,
        grasp_cam_pose,
        goal,
        frame,
    })
}

fn ibvs_tick(
    obs: &Observation,
    state: &mut ControllerState,
    cam: &CameraModel,
    cfg: &ServoConfig,
    report: &mut StepReport,
) -> SpatialVelocity {
    let cap = state.capture.as_ref().expect("IBVS mode always holds a capture");
    let matches = if cfg.ideal_correspondence {
        ideal_matches(&cap.stored_ref, &obs.features)
    } else {
        match robust_match(&cap.stored_ref, &obs.features, &cfg.matching) {
            Ok(outcome) => outcome.matches().clone(),
            Err(f) => {
                report.fault = Some(Fault::Match(f));
                state.settled = 0;
                return SpatialVelocity::zero();
            }
        }
    };
    report.n_matches = matches.len();
    let goal = &cap.goal;
    let tracked: BTreeMap<u32, Point2<f64>> = matches
        .iter()
        .map(|m| {
            (
                cap.stored_ref.features[m.ref_idx].id,
                obs.features.features[m.cur_idx].p,
            )
        })
        .filter(|(id, _)| goal.pixels.contains_key(id))
        .collect();
    report.mean_err_px = mean_pixel_error(&tracked, goal);
    let to_cam = obs.camera_pose.inverse();
    let rows: Vec<IbvsRow> = tracked
        .iter()
        .map(|(id, p)| {
            let depth = if cfg.use_kinematic_depth {
                to_cam.transform_point(&goal.points[id]).z.max(1e-3)
            } else {
                goal.fixed_depth
            };
            IbvsRow {
                pixel: *p,
                goal: goal.pixels[id],
                depth,
            }
        })
        .collect();
    report.tracked = tracked;
    let nu_c = match ibvs_camera_velocity(&rows, cfg.gains.lambda_i, cam) {
        Ok(v) => v,
        Err(e) => {
            report.fault = Some(Fault::Servo(e));
            state.settled = 0;
            return SpatialVelocity::zero();
        }
    };
    if report.mean_err_px.is_some_and(|e| e < cfg.grasp_err_px) {
        state.settled += 1;
    } else {
        state.settled = 0;
    }
    if state.settled >= cfg.grasp_hold {
        state.mode = Mode::Grasp;
    }
    velocity_transform(&cfg.hand_eye_pose(), &nu_c)
}
