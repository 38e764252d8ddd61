//! Synthetic feature detection and the robust matching pipeline.
//!
//! Real SIFT is replaced by object-attached anchors that carry fixed random
//! 128-dimensional unit descriptors. Each detection perturbs the descriptor
//! by a small random rotation, jitters the pixel, and mixes in spurious
//! features with unrelated descriptors.

mod epipolar;
mod matching;

pub use epipolar::{
    estimate_fundamental_ransac, fundamental_eight_point, homography_dlt, sampson_distance, transfer_distance,
    EpipolarModel, RansacConfig, RansacFit,
};
pub use matching::{
    dedup, grid_filter, loop_check, match_ratio, robust_match, MatchConfig, MatchFailure, MatchOutcome, Stage,
    StageCounts,
};

use std::io::{Read, Write};

use nalgebra::{Point2, SVector, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{sense_depth_value, CameraModel};
use crate::geometry::Pose;
use crate::sim::SceneObject;
use crate::LogError;

pub const DESCRIPTOR_LEN: usize = 128;

pub type Descriptor = SVector<f64, DESCRIPTOR_LEN>;

pub fn random_descriptor<R: Rng + ?Sized>(rng: &mut R) -> Descriptor {
    loop {
        let d = Descriptor::from_fn(|_, _| StandardNormal.sample(rng));
        let n = d.norm();
        if n > 1e-6 {
            return d / n;
        }
    }
}

/// Rotates a unit descriptor by `angle` radians towards a random orthogonal
/// direction.
pub fn perturb_descriptor<R: Rng + ?Sized>(d: &Descriptor, angle: f64, rng: &mut R) -> Descriptor {
    if angle == 0.0 {
        return *d;
    }
    let ortho = loop {
        let g = random_descriptor(rng);
        let o = g - d * d.dot(&g);
        let n = o.norm();
        if n > 1e-6 {
            break o / n;
        }
    };
    let out = d * angle.cos() + ortho * angle.sin();
    out / out.norm()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("too few matches for model estimation ({found} < {required})")]
    TooFewMatches { found: usize, required: usize },
    #[error("no consensus: best model has {inliers} inliers, {required} required")]
    NoConsensus { inliers: usize, required: usize },
}

/// Ground-truth provenance of a detection, kept for evaluation and for the
/// ideal-correspondence mode. Matching never reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSource {
    Anchor(usize),
    Spurious,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: u32,
    pub p: Point2<f64>,
    pub d: Descriptor,
    pub z: Option<f64>,
    pub source: FeatureSource,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    pub frame: u64,
    /// World pose of the camera at capture.
    pub camera_pose: Pose,
    pub features: Vec<FeatureRecord>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn by_id(&self, id: u32) -> Option<&FeatureRecord> {
        self.features.iter().find(|f| f.id == id)
    }

    pub fn ids_unique(&self) -> bool {
        let mut ids: Vec<u32> = self.features.iter().map(|f| f.id).collect();
        ids.sort_unstable();
        ids.windows(2).all(|w| w[0] != w[1])
    }

    /// CSV rows `frame,id,u,v,z_or_nan`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LogError> {
        let mut w = csv::Writer::from_writer(out);
        for f in &self.features {
            w.serialize(FeatureRow {
                frame: self.frame,
                id: f.id,
                u: f.p.x,
                v: f.p.y,
                z_or_nan: f.z.unwrap_or(f64::NAN),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads back a feature log. Descriptors are not logged, so they come
    /// back zeroed; the capture pose is not logged either.
    pub fn read_csv<R: Read>(input: R) -> Result<Vec<FeatureRow>, LogError> {
        let mut r = csv::Reader::from_reader(input);
        r.deserialize().map(|row| row.map_err(LogError::from)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub frame: u64,
    pub id: u32,
    pub u: f64,
    pub v: f64,
    pub z_or_nan: f64,
}

/// Detection noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Pixel jitter, standard deviation in pixels.
    pub pixel_sigma: f64,
    /// Maximum descriptor perturbation angle, degrees.
    pub descriptor_deg: f64,
    /// Spurious features injected per visible anchor.
    pub outlier_fraction: f64,
    /// Depth noise standard deviation, metres.
    pub depth_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.2,
            descriptor_deg: 10.0,
            outlier_fraction: 0.3,
            depth_sigma: 0.0005,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            pixel_sigma: 0.0,
            descriptor_deg: 0.0,
            outlier_fraction: 0.0,
            depth_sigma: 0.0,
        }
    }
}

/// Projects the visible anchors of `scene` for a camera at world pose `pose`,
/// applies the noise model and appends spurious detections. When
/// `with_depth` is set each feature carries the sensed depth at its pixel,
/// or `None` where the sensor has no valid return.
pub fn detect<R: Rng + ?Sized>(
    scene: &SceneObject,
    cam: &CameraModel,
    pose: &Pose,
    noise: &NoiseConfig,
    with_depth: bool,
    frame: u64,
    rng: &mut R,
) -> FeatureSet {
    let above_top = pose.translation.z > scene.height;
    let mut raw: Vec<(Point2<f64>, Descriptor, FeatureSource)> = Vec::new();
    if above_top {
        for (i, anchor) in scene.anchors.iter().enumerate() {
            let pc = pose.inverse_transform_point(&scene.anchor_world(i));
            let Ok(p) = cam.project_camera_point(&pc) else {
                continue;
            };
            let p = jitter(p, noise.pixel_sigma, rng);
            if !cam.contains(&p) {
                continue;
            }
            let angle = if noise.descriptor_deg > 0.0 {
                rng.random_range(0.0..=noise.descriptor_deg.to_radians())
            } else {
                0.0
            };
            raw.push((
                p,
                perturb_descriptor(&anchor.descriptor, angle, rng),
                FeatureSource::Anchor(i),
            ));
        }
    }
    let n_spurious = (noise.outlier_fraction * raw.len() as f64).round() as usize;
    for _ in 0..n_spurious {
        let p = Point2::new(
            rng.random_range(0.0..cam.width() as f64),
            rng.random_range(0.0..cam.height() as f64),
        );
        raw.push((p, random_descriptor(rng), FeatureSource::Spurious));
    }
    raw.shuffle(rng);

    let features = raw
        .into_iter()
        .enumerate()
        .map(|(id, (p, d, source))| {
            let z = if with_depth {
                sense_depth_value(cam, scene.ray_depth(cam, pose, &p), noise.depth_sigma, rng)
            } else {
                None
            };
            FeatureRecord {
                id: id as u32,
                p,
                d,
                z,
                source,
            }
        })
        .collect();
    FeatureSet {
        frame,
        camera_pose: *pose,
        features,
    }
}

fn jitter<R: Rng + ?Sized>(p: Point2<f64>, sigma: f64, rng: &mut R) -> Point2<f64> {
    if sigma <= 0.0 {
        return p;
    }
    let dx: f64 = StandardNormal.sample(rng);
    let dy: f64 = StandardNormal.sample(rng);
    Point2::new(p.x + sigma * dx, p.y + sigma * dy)
}

/// One correspondence between a reference feature and a current feature,
/// as indices into the two sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub ref_idx: usize,
    pub cur_idx: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn new(mut matches: Vec<Match>) -> Self {
        matches.sort_by_key(|m| (m.ref_idx, m.cur_idx));
        Self { matches }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Match> {
        self.matches.iter()
    }

    pub fn is_one_to_one(&self) -> bool {
        let mut r: Vec<usize> = self.matches.iter().map(|m| m.ref_idx).collect();
        let mut c: Vec<usize> = self.matches.iter().map(|m| m.cur_idx).collect();
        r.sort_unstable();
        c.sort_unstable();
        r.windows(2).all(|w| w[0] != w[1]) && c.windows(2).all(|w| w[0] != w[1])
    }
}

/// CSV rows `stage,ref_id,cur_id,dist`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub stage: String,
    pub ref_id: u32,
    pub cur_id: u32,
    pub dist: f64,
}

pub fn write_match_log<W: Write>(
    outcome: &MatchOutcome,
    reference: &FeatureSet,
    current: &FeatureSet,
    out: W,
) -> Result<(), LogError> {
    let mut w = csv::Writer::from_writer(out);
    for (stage, set) in &outcome.stages {
        for m in set.iter() {
            w.serialize(MatchRow {
                stage: stage.name().to_string(),
                ref_id: reference.features[m.ref_idx].id,
                cur_id: current.features[m.cur_idx].id,
                dist: m.distance,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_match_log<R: Read>(input: R) -> Result<Vec<MatchRow>, LogError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(LogError::from)).collect()
}

/// Anchor-label correspondence for evaluation and the ideal-correspondence
/// controller mode.
pub fn ideal_matches(reference: &FeatureSet, current: &FeatureSet) -> MatchSet {
    let mut out = Vec::new();
    for (ri, r) in reference.features.iter().enumerate() {
        let FeatureSource::Anchor(a) = r.source else {
            continue;
        };
        if let Some(ci) = current
            .features
            .iter()
            .position(|c| c.source == FeatureSource::Anchor(a))
        {
            out.push(Match {
                ref_idx: ri,
                cur_idx: ci,
                distance: (r.d - current.features[ci].d).norm(),
            });
        }
    }
    MatchSet::new(out)
}

pub(crate) fn descriptor_distance(a: &Descriptor, b: &Descriptor) -> f64 {
    (a - b).norm()
}

pub(crate) fn homogeneous(p: &Point2<f64>) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{planar_pose, ObjectConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn down(z: f64) -> Pose {
        let mut p = Pose::rot_x(std::f64::consts::PI);
        p.translation = Vector3::new(0.0, 0.0, z);
        p
    }

    fn object(n: usize, seed: u64) -> SceneObject {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ObjectConfig {
            anchors: n,
            ..Default::default()
        };
        SceneObject::generate(&cfg, planar_pose(0.0, 0.0, 0.0), &mut rng)
    }

    #[test]
    fn noiseless_detection_is_exact() {
        let cam = CameraModel::default();
        let obj = object(20, 1);
        let pose = down(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let set = detect(&obj, &cam, &pose, &NoiseConfig::none(), true, 0, &mut rng);
        assert_eq!(set.len(), 20);
        assert!(set.ids_unique());
        for f in &set.features {
            let FeatureSource::Anchor(a) = f.source else {
                panic!("unexpected spurious feature")
            };
            let proj = crate::camera::project(&cam, &pose, &obj.anchor_world(a)).unwrap();
            assert!((proj.pixel - f.p).norm() < 1e-12);
            assert!((f.z.unwrap() - proj.depth).abs() < 1e-9);
            assert_eq!(f.d, obj.anchors[a].descriptor);
        }
    }

    #[test]
    fn outlier_count() {
        let cam = CameraModel::default();
        let obj = object(100, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = NoiseConfig {
            outlier_fraction: 0.3,
            ..NoiseConfig::none()
        };
        let set = detect(&obj, &cam, &down(0.5), &noise, false, 0, &mut rng);
        assert_eq!(set.len(), 130);
        let spurious = set
            .features
            .iter()
            .filter(|f| f.source == FeatureSource::Spurious)
            .count();
        assert_eq!(spurious, 30);
    }

    #[test]
    fn close_camera_has_no_depth() {
        let cam = CameraModel::default();
        let obj = object(50, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let near = down(obj.height + 0.10);
        let set = detect(&obj, &cam, &near, &NoiseConfig::none(), true, 0, &mut rng);
        assert!(!set.is_empty());
        assert!(set.features.iter().all(|f| f.z.is_none()));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let without = detect(&obj, &cam, &near, &NoiseConfig::none(), false, 0, &mut rng);
        for (a, b) in set.features.iter().zip(&without.features) {
            assert_eq!((a.p, a.d), (b.p, b.d));
        }
    }

    #[test]
    fn perturbation_angle_and_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_descriptor(&mut rng);
        let p = perturb_descriptor(&d, 0.2, &mut rng);
        assert!((p.norm() - 1.0).abs() < 1e-12);
        assert!((d.dot(&p).acos() - 0.2).abs() < 1e-9);
    }
}
