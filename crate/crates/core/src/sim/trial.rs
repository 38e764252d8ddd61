use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{Point2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::geometry::Pose;
use crate::servo::{switch_and_step, ControllerState, Fault, Mode};
use crate::LogError;

use super::{planar_pose, stream_rng, Scenario, SceneObject, Sensor, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    MatchFailure,
    GraspLost,
    NoGoal,
    Timeout,
    PoseError,
}

impl FailureCause {
    pub fn name(self) -> &'static str {
        match self {
            FailureCause::MatchFailure => "MatchFailure",
            FailureCause::GraspLost => "GraspLost",
            FailureCause::NoGoal => "NoGoal",
            FailureCause::Timeout => "Timeout",
            FailureCause::PoseError => "PoseError",
        }
    }

    fn of(fault: &Fault) -> Self {
        match fault {
            Fault::GraspLost(_) => FailureCause::GraspLost,
            Fault::NoGoal(_) => FailureCause::NoGoal,
            Fault::Match(_) | Fault::Servo(_) => FailureCause::MatchFailure,
        }
    }
}

/// Step log record `t,mode,mean_err_px,n_matches,vx,vy,vz,wx,wy,wz`. The
/// error is NaN on steps without a pixel error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub mode: String,
    pub mean_err_px: f64,
    pub n_matches: usize,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
}

impl StepRecord {
    pub fn velocity(&self) -> [f64; 6] {
        [self.vx, self.vy, self.vz, self.wx, self.wy, self.wz]
    }
}

/// Image-plane track record `t,ref_id,u,v,goal_u,goal_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub t: f64,
    pub ref_id: u32,
    pub u: f64,
    pub v: f64,
    pub goal_u: f64,
    pub goal_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub success: bool,
    pub cause: Option<FailureCause>,
    pub steps: usize,
    /// Last reported mean pixel error, NaN if none was ever reported.
    pub final_err_px: f64,
    pub captures: usize,
    /// Step index of the PBVS→IBVS switch.
    pub capture_step: Option<usize>,
    /// Position and closing-axis errors at the grasp, metres and degrees.
    pub pos_err_m: Option<f64>,
    pub yaw_err_deg: Option<f64>,
    pub log: Vec<StepRecord>,
    pub tracks: Vec<TrackRecord>,
}

/// Initial world for `seed`: object placement, anchors and the start pose
/// are drawn from random stream 0, object motion from stream 1.
pub fn initial_world(sc: &Scenario, seed: u64) -> World {
    let mut rng = stream_rng(seed, 0);
    let s = &sc.start;
    let ox = rng.random_range(-s.object_xy..=s.object_xy);
    let oy = rng.random_range(-s.object_xy..=s.object_xy);
    let oyaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let object = SceneObject::generate(&sc.object, planar_pose(ox, oy, oyaw), &mut rng);
    let hand_eye = sc.servo.hand_eye_pose();
    let cam_pose = sample_start(&sc.camera, &object, s, &mut rng);
    let ee_pose = cam_pose.compose(&hand_eye.inverse());
    World::new(ee_pose, hand_eye, object, sc.motion.clone(), stream_rng(seed, 1))
}

fn sample_start<R: Rng>(cam: &CameraModel, object: &SceneObject, s: &super::StartConfig, rng: &mut R) -> Pose {
    let centre = object.grasp_center_world();
    let axis = object.grasp_axis_world();
    let axis_yaw = axis.y.atan2(axis.x);
    let mut pose = Pose::identity();
    for _ in 0..1000 {
        let h = rng.random_range(s.height[0]..=s.height[1]);
        let dx = rng.random_range(-s.xy_offset..=s.xy_offset);
        let dy = rng.random_range(-s.xy_offset..=s.xy_offset);
        let yaw = axis_yaw + rng.random_range(-s.yaw_deg..=s.yaw_deg).to_radians();
        pose = Pose::rot_z(yaw).compose(&Pose::rot_x(std::f64::consts::PI));
        pose.translation = centre + Vector3::new(dx, dy, h);
        let Ok(p) = crate::camera::project(cam, &pose, &centre) else {
            continue;
        };
        let m = s.view_margin_px;
        if p.pixel.x >= m
            && p.pixel.y >= m
            && p.pixel.x <= cam.width() as f64 - m
            && p.pixel.y <= cam.height() as f64 - m
        {
            return pose;
        }
    }
    pose
}

pub fn run_trial(sc: &Scenario, seed: u64) -> TrialResult {
    let mut world = initial_world(sc, seed);
    let mut sensor = Sensor::new(sc.camera, sc.noise, sc.grasp, stream_rng(seed, 2));
    let mut servo = sc.servo;
    servo.matching.ransac.seed ^= seed;
    let dt = servo.dt;
    let mut state = ControllerState::new();
    let mut result = TrialResult {
        seed,
        success: false,
        cause: None,
        steps: 0,
        final_err_px: f64::NAN,
        captures: 0,
        capture_step: None,
        pos_err_m: None,
        yaw_err_deg: None,
        log: Vec::new(),
        tracks: Vec::new(),
    };
    let mut fault_streak = 0usize;

    for step in 0..sc.trial.max_steps {
        let obs = sensor.observe(&world, state.mode == Mode::Pbvs);
        let (cmd, next, report) = switch_and_step(&obs, state, &sc.camera, &servo);
        state = next;
        result.steps = step + 1;
        if report.captured {
            result.capture_step = Some(step);
        }
        if let Some(e) = report.mean_err_px {
            result.final_err_px = e;
        }
        let v = cmd.to_vector();
        result.log.push(StepRecord {
            t: obs.t,
            mode: report.mode.name().to_string(),
            mean_err_px: report.mean_err_px.unwrap_or(f64::NAN),
            n_matches: report.n_matches,
            vx: v[0],
            vy: v[1],
            vz: v[2],
            wx: v[3],
            wy: v[4],
            wz: v[5],
        });
        if let Some(goal) = state.goal() {
            for (id, p) in &report.tracked {
                let g = goal.pixels[id];
                result.tracks.push(TrackRecord {
                    t: obs.t,
                    ref_id: *id,
                    u: p.x,
                    v: p.y,
                    goal_u: g.x,
                    goal_v: g.y,
                });
            }
        }
        match &report.fault {
            Some(f) => {
                fault_streak += 1;
                if fault_streak >= sc.trial.max_fault_steps {
                    result.cause = Some(FailureCause::of(f));
                    break;
                }
            }
            None => fault_streak = 0,
        }
        if state.mode == Mode::Grasp {
            let (pos, axis) = world.grasp_error();
            result.pos_err_m = Some(pos);
            result.yaw_err_deg = Some(axis.to_degrees());
            let fits = world.object.grasp_width < sc.trial.gripper_opening;
            result.success = pos < sc.trial.pos_tol && axis.to_degrees() < sc.trial.yaw_tol_deg && fits;
            if !result.success {
                result.cause = Some(FailureCause::PoseError);
            }
            break;
        }
        world.step(&cmd, dt);
    }
    result.captures = state.captures;
    if !result.success && result.cause.is_none() {
        result.cause = Some(FailureCause::Timeout);
    }
    result
}

impl TrialResult {
    /// Goal pixels of every tracked feature, from the track log.
    pub fn goal_pixels(&self) -> BTreeMap<u32, Point2<f64>> {
        self.tracks
            .iter()
            .map(|r| (r.ref_id, Point2::new(r.goal_u, r.goal_v)))
            .collect()
    }
}

pub fn write_step_log<W: Write>(log: &[StepRecord], out: W) -> Result<(), LogError> {
    write_records(log, out)
}

pub fn read_step_log<R: Read>(input: R) -> Result<Vec<StepRecord>, LogError> {
    read_records(input)
}

pub fn write_tracks<W: Write>(tracks: &[TrackRecord], out: W) -> Result<(), LogError> {
    write_records(tracks, out)
}

pub fn read_tracks<R: Read>(input: R) -> Result<Vec<TrackRecord>, LogError> {
    read_records(input)
}

fn write_records<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), LogError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_records<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>, LogError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(LogError::from)).collect()
}
