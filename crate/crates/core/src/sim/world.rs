use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;

use crate::camera::{sense_depth, CameraModel};
use crate::features::{detect, NoiseConfig};
use crate::geometry::{Pose, SpatialVelocity};
use crate::grasp::{select_best_grasp, synthesize_grasp_map, Grasp, GraspConfig};
use crate::servo::Observation;

use super::{MotionModel, ObjectMotion, SceneObject};

/// Kinematic world: an end-effector driven by body-velocity commands with a
/// rigidly attached camera, and one object moving on the table.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub t: f64,
    pub frame: u64,
    pub ee_pose: Pose,
    /// Camera pose in the end-effector frame.
    pub hand_eye: Pose,
    pub object: SceneObject,
    pub motion: ObjectMotion,
}

impl World {
    pub fn new(
        ee_pose: Pose,
        hand_eye: Pose,
        object: SceneObject,
        motion: MotionModel,
        motion_rng: ChaCha8Rng,
    ) -> Self {
        let motion = ObjectMotion::new(motion, &object.pose, motion_rng);
        Self {
            t: 0.0,
            frame: 0,
            ee_pose,
            hand_eye,
            object,
            motion,
        }
    }

    pub fn camera_pose(&self) -> Pose {
        self.ee_pose.compose(&self.hand_eye)
    }

    /// Integrates the end-effector under the body twist `cmd` and advances
    /// the object.
    pub fn step(&mut self, cmd: &SpatialVelocity, dt: f64) {
        self.ee_pose = self.ee_pose.integrate(cmd, dt);
        self.object.pose = self.motion.advance(&self.object.pose, self.t, dt);
        self.t += dt;
        self.frame += 1;
    }

    /// End-effector position and closing-axis errors against the object's
    /// annotated grasp: metres, and radians modulo π.
    pub fn grasp_error(&self) -> (f64, f64) {
        let pos = (self.ee_pose.translation - self.object.grasp_center_world()).norm();
        let ee_axis = self.ee_pose.rotation * Vector3::x();
        let cos = ee_axis.dot(&self.object.grasp_axis_world()).abs().min(1.0);
        (pos, cos.acos())
    }
}

pub fn step_world(mut world: World, cmd: &SpatialVelocity, dt: f64) -> World {
    world.step(cmd, dt);
    world
}

/// Camera, depth sensor and grasp synthesizer with their own random stream.
/// Keeps the tracked grasp between frames.
#[derive(Debug, Clone)]
pub struct Sensor {
    pub cam: CameraModel,
    pub noise: NoiseConfig,
    pub grasp_cfg: GraspConfig,
    rng: ChaCha8Rng,
    tracked: Option<Grasp>,
}

impl Sensor {
    pub fn new(cam: CameraModel, noise: NoiseConfig, grasp_cfg: GraspConfig, rng: ChaCha8Rng) -> Self {
        Self {
            cam,
            noise,
            grasp_cfg,
            rng,
            tracked: None,
        }
    }

    /// Captures one frame. With `with_range` the depth image and grasp map
    /// are produced and features carry depth; without it only the RGB
    /// features are detected.
    pub fn observe(&mut self, world: &World, with_range: bool) -> Observation {
        let pose = world.camera_pose();
        let (depth, grasp, distance) = if with_range {
            let truth = world.object.render_depth(&self.cam, &pose);
            let depth = sense_depth(&self.cam, &truth, self.noise.depth_sigma, &mut self.rng);
            let grasp = synthesize_grasp_map(&world.object, &self.cam, &pose, &self.grasp_cfg)
                .and_then(|map| select_best_grasp(&map, self.tracked.as_ref(), self.grasp_cfg.q_min))
                .ok();
            self.tracked = grasp;
            let distance = grasp.and_then(|g| depth.at(g.u, g.v));
            (Some(depth), grasp, distance)
        } else {
            (None, None, None)
        };
        let features = detect(
            &world.object,
            &self.cam,
            &pose,
            &self.noise,
            with_range,
            world.frame,
            &mut self.rng,
        );
        Observation {
            t: world.t,
            frame: world.frame,
            camera_pose: pose,
            depth,
            features,
            grasp,
            distance,
        }
    }
}
