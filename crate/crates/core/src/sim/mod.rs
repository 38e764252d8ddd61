//! Kinematic simulator: the planar target, its motion, the camera rig and
//! the trial and campaign drivers.

mod campaign;
mod motion;
mod scenario;
mod scene;
mod trial;
mod world;

pub use campaign::{run_campaign, CampaignSummary, TrialSummary};
pub use motion::{stream_rng, Jump, MotionModel, ObjectMotion, Segment};
pub use scenario::{Scenario, StartConfig, TrialConfig};
pub use scene::{planar_pose, Anchor, ObjectConfig, SceneObject};
pub use trial::{
    initial_world, read_step_log, read_tracks, run_trial, write_step_log, write_tracks, FailureCause, StepRecord,
    TrackRecord, TrialResult,
};
pub use world::{step_world, Sensor, World};

pub use crate::servo::Observation;
