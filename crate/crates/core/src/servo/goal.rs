use std::collections::BTreeMap;

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use super::ServoError;
use crate::camera::{solve_xy, CameraMatrix, CameraModel};
use crate::features::FeatureSet;
use crate::geometry::Pose;

/// Goal image features for IBVS, keyed by reference feature id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IbvsGoal {
    pub pixels: BTreeMap<u32, Point2<f64>>,
    pub fixed_depth: f64,
    /// World positions of the captured feature points, used for the
    /// kinematic depth update.
    pub points: BTreeMap<u32, Vector3<f64>>,
}

impl IbvsGoal {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalConfig {
    pub margin: f64,
    pub fixed_depth: f64,
}

impl Default for GoalConfig {
    fn default() -> Self {
        Self {
            margin: 1.5,
            fixed_depth: 0.05,
        }
    }
}

/// Predicts where the captured features appear once the camera sits at
/// `grasp_cam_pose`.
///
/// Each feature with a valid depth is back-projected through `cm_at_ref`,
/// the capturing camera's matrix in its own frame, lifted to the world by
/// `ref_pose`, moved into the grasp-pose camera frame and re-projected.
/// Points behind the goal camera or outside the image scaled by
/// `cfg.margin` about its centre are dropped.
pub fn predict_goal_features(
    reference: &FeatureSet,
    cm_at_ref: &CameraMatrix,
    ref_pose: &Pose,
    grasp_cam_pose: &Pose,
    cam: &CameraModel,
    cfg: &GoalConfig,
) -> Result<IbvsGoal, ServoError> {
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let (hx, hy) = (cfg.margin * w / 2.0, cfg.margin * h / 2.0);
    let mut goal = IbvsGoal {
        fixed_depth: cfg.fixed_depth,
        ..Default::default()
    };
    for f in &reference.features {
        let Some(z) = f.z else { continue };
        let Ok(xy) = solve_xy(cm_at_ref, &f.p, z) else { continue };
        let world = ref_pose.transform_point(&Vector3::new(xy.x, xy.y, z));
        let in_goal = grasp_cam_pose.inverse_transform_point(&world);
        let Ok(p) = cam.project_camera_point(&in_goal) else {
            continue;
        };
        if (p.x - cx).abs() > hx || (p.y - cy).abs() > hy || !p.x.is_finite() || !p.y.is_finite() {
            continue;
        }
        goal.pixels.insert(f.id, p);
        goal.points.insert(f.id, world);
    }
    if goal.pixels.len() < 3 {
        return Err(ServoError::NoValidGoal(goal.pixels.len()));
    }
    Ok(goal)
}

/// Mean Euclidean pixel distance over the ids present in both maps, or
/// `None` when they share no id.
pub fn mean_pixel_error(current: &BTreeMap<u32, Point2<f64>>, goal: &IbvsGoal) -> Option<f64> {
    let (sum, n) = current
        .iter()
        .filter_map(|(id, p)| goal.pixels.get(id).map(|g| (p - g).norm()))
        .fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{camera_matrix, project};
    use crate::features::{detect, NoiseConfig};
    use crate::sim::{planar_pose, ObjectConfig, SceneObject};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn down(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
        let mut p = Pose::rot_x(PI).compose(&Pose::rot_z(yaw));
        p.translation = Vector3::new(x, y, z);
        p
    }

    fn setup() -> (CameraModel, SceneObject, FeatureSet, Pose) {
        let cam = CameraModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let obj = SceneObject::generate(&ObjectConfig::default(), planar_pose(0.01, -0.02, 0.3), &mut rng);
        let ref_pose = down(0.0, 0.0, 0.3, 0.1);
        let set = detect(&obj, &cam, &ref_pose, &NoiseConfig::none(), true, 0, &mut rng);
        (cam, obj, set, ref_pose)
    }

    #[test]
    fn identity_goal_reproduces_reference() {
        let (cam, _, set, ref_pose) = setup();
        let cm = camera_matrix(&cam, &Pose::identity());
        let goal = predict_goal_features(&set, &cm, &ref_pose, &ref_pose, &cam, &GoalConfig::default()).unwrap();
        assert_eq!(goal.len(), set.len());
        for f in &set.features {
            assert!((goal.pixels[&f.id] - f.p).norm() < 1e-9);
        }
    }

    #[test]
    fn forward_motion_matches_ground_truth() {
        let (cam, obj, set, ref_pose) = setup();
        let cm = camera_matrix(&cam, &Pose::identity());
        let grasp_cam = down(0.0, 0.0, 0.15, 0.1);
        let goal = predict_goal_features(&set, &cm, &ref_pose, &grasp_cam, &cam, &GoalConfig::default()).unwrap();
        assert!(goal.len() >= 3);
        for f in &set.features {
            let crate::features::FeatureSource::Anchor(a) = f.source else {
                continue;
            };
            let Some(g) = goal.pixels.get(&f.id) else { continue };
            let truth = project(&cam, &grasp_cam, &obj.anchor_world(a)).unwrap().pixel;
            assert!((g - truth).norm() < 1e-6);
            // Radial expansion about the principal point.
            let c = Point2::new(cam.u0(), cam.v0());
            let r0 = f.p - c;
            let r1 = g - c;
            assert!(r1.norm() > r0.norm());
            assert!(r0.perp(&r1).abs() < 1e-6 * r0.norm() * r1.norm() + 1e-9);
        }
    }

    #[test]
    fn invalid_depth_is_excluded() {
        let (cam, _, mut set, ref_pose) = setup();
        let dropped = set.features[0].id;
        set.features[0].z = None;
        let cm = camera_matrix(&cam, &Pose::identity());
        let goal = predict_goal_features(&set, &cm, &ref_pose, &ref_pose, &cam, &GoalConfig::default()).unwrap();
        assert!(!goal.pixels.contains_key(&dropped));
        assert_eq!(goal.len(), set.len() - 1);
    }

    #[test]
    fn too_few_survivors() {
        let (cam, _, mut set, ref_pose) = setup();
        set.features.truncate(2);
        let cm = camera_matrix(&cam, &Pose::identity());
        let err = predict_goal_features(&set, &cm, &ref_pose, &ref_pose, &cam, &GoalConfig::default());
        assert_eq!(err, Err(ServoError::NoValidGoal(2)));
    }
}
