//! Switching position-based / image-based visual servoing for grasping,
//! with goal image features predicted from the last valid depth frame.
//!
//! The crate is split into the pose algebra ([`geometry`]), the pinhole
//! camera and depth sensor ([`camera`]), grasp synthesis ([`grasp`]),
//! synthetic features and robust matching ([`features`]), the control laws
//! and switching state machine ([`servo`]) and a kinematic simulator
//! ([`sim`]).

pub mod camera;
pub mod features;
pub mod geometry;
pub mod grasp;
pub mod grid;
pub mod servo;
pub mod sim;

use thiserror::Error;

pub use camera::{camera_matrix, project, solve_xy, CameraMatrix, CameraModel, DepthImage};
pub use features::{FeatureSet, MatchConfig, MatchSet, NoiseConfig};
pub use geometry::{Pose, RpyPose, SpatialVelocity};
pub use grasp::{Grasp, GraspConfig, GraspMap, GraspPose};
pub use servo::{ControllerState, GainConfig, IbvsGoal, Mode, ServoConfig};
pub use sim::{run_campaign, run_trial, CampaignSummary, FailureCause, Scenario, TrialResult};

/// Errors reading or writing the crate's log and config formats.
#[derive(Debug, Error)]
pub enum LogError {
    #[error("malformed log: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Toml(#[from] toml::de::Error),
}
