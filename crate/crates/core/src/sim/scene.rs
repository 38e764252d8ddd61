use nalgebra::{Point2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::features::{random_descriptor, Descriptor};
use crate::geometry::Pose;
use crate::grid::Grid;

/// A feature point fixed to the object with its ground-truth descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    /// Object-frame position, metres.
    pub position: Vector3<f64>,
    pub descriptor: Descriptor,
}

/// Geometry of the synthetic target: a box resting on the table plane
/// `z = 0` whose top face carries the feature anchors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectConfig {
    /// Half extents of the top face along object x and y, metres.
    pub half_extents: [f64; 2],
    pub height: f64,
    pub anchors: usize,
    /// Grasp axis (finger closing direction) in the object frame, radians.
    pub grasp_axis_yaw: f64,
    /// Object width across the grasp axis, metres.
    pub grasp_width: f64,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        Self {
            half_extents: [0.06, 0.04],
            height: 0.03,
            anchors: 50,
            grasp_axis_yaw: std::f64::consts::FRAC_PI_2,
            grasp_width: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    /// World pose of the object frame; planar (`z = 0`, no roll or pitch).
    pub pose: Pose,
    pub half_extents: [f64; 2],
    pub height: f64,
    pub anchors: Vec<Anchor>,
    /// Object-frame grasp centre (centre of the top face).
    pub grasp_center: Vector3<f64>,
    pub grasp_axis_yaw: f64,
    pub grasp_width: f64,
}

pub fn planar_pose(x: f64, y: f64, yaw: f64) -> Pose {
    let mut p = Pose::rot_z(yaw);
    p.translation = Vector3::new(x, y, 0.0);
    p
}

impl SceneObject {
    /// Samples anchors uniformly over the top face, each with a random unit
    /// descriptor.
    pub fn generate<R: Rng + ?Sized>(cfg: &ObjectConfig, pose: Pose, rng: &mut R) -> Self {
        let [hx, hy] = cfg.half_extents;
        let anchors = (0..cfg.anchors)
            .map(|_| Anchor {
                position: Vector3::new(rng.random_range(-hx..hx), rng.random_range(-hy..hy), cfg.height),
                descriptor: random_descriptor(rng),
            })
            .collect();
        Self::with_anchors(cfg, pose, anchors)
    }

    pub fn with_anchors(cfg: &ObjectConfig, pose: Pose, anchors: Vec<Anchor>) -> Self {
        Self {
            pose,
            half_extents: cfg.half_extents,
            height: cfg.height,
            anchors,
            grasp_center: Vector3::new(0.0, 0.0, cfg.height),
            grasp_axis_yaw: cfg.grasp_axis_yaw,
            grasp_width: cfg.grasp_width,
        }
    }

    pub fn anchor_world(&self, i: usize) -> Vector3<f64> {
        self.pose.transform_point(&self.anchors[i].position)
    }

    pub fn grasp_center_world(&self) -> Vector3<f64> {
        self.pose.transform_point(&self.grasp_center)
    }

    /// Unit world direction of the grasp axis.
    pub fn grasp_axis_world(&self) -> Vector3<f64> {
        let a = Vector3::new(self.grasp_axis_yaw.cos(), self.grasp_axis_yaw.sin(), 0.0);
        self.pose.rotation * a
    }

    pub fn yaw(&self) -> f64 {
        let r = self.pose.rotation.matrix();
        r[(1, 0)].atan2(r[(0, 0)])
    }

    /// True depth along the optical axis of the first surface hit by the ray
    /// through `pixel`, for a camera at world pose `cam_pose`. Infinite when
    /// the ray misses both the object and the table.
    pub fn ray_depth(&self, cam: &CameraModel, cam_pose: &Pose, pixel: &Point2<f64>) -> f64 {
        let dir = cam_pose.rotation * cam.ray(pixel);
        self.ray_depth_world(&cam_pose.translation, &dir)
    }

    fn ray_depth_world(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> f64 {
        // `dir` has unit camera-frame z, so the ray parameter is the depth.
        if dir.z >= -1e-12 {
            return f64::INFINITY;
        }
        let s_top = (self.height - origin.z) / dir.z;
        if s_top > 0.0 {
            let hit = origin + dir * s_top;
            let local = self.pose.inverse_transform_point(&hit);
            if local.x.abs() <= self.half_extents[0] && local.y.abs() <= self.half_extents[1] {
                return s_top;
            }
        }
        let s_table = -origin.z / dir.z;
        if s_table > 0.0 {
            s_table
        } else {
            f64::INFINITY
        }
    }

    /// Full-resolution true depth image for a camera at `cam_pose`.
    pub fn render_depth(&self, cam: &CameraModel, cam_pose: &Pose) -> Grid<f64> {
        let (w, h) = (cam.width(), cam.height());
        let r = cam_pose.rotation.matrix();
        let origin = cam_pose.translation;
        // Pixel (u, v) is centred on the integer coordinate; the world-frame
        // ray direction is affine in (u, v).
        let du = r.column(0) / cam.focal_px;
        let dv = r.column(1) / cam.focal_px;
        let base = r.column(2) - du * cam.u0() - dv * cam.v0();
        let mut data = Vec::with_capacity(w * h);
        for v in 0..h {
            let row = base + dv * v as f64;
            for u in 0..w {
                let dir = row + du * u as f64;
                data.push(self.ray_depth_world(&origin, &dir));
            }
        }
        Grid::from_vec(w, h, data)
    }
}
