//! Pinhole camera, partitioned camera-matrix back-projection and the depth
//! sensor's range model.

use std::io::{BufRead, Write};

use nalgebra::{Matrix1x2, Matrix2, Matrix2x1, Matrix3x4, Point2, Vector2, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::grid::Grid;

/// Points closer than this to the image plane are treated as behind the camera.
pub const MIN_FRONT_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point is behind the camera (Z = {z:.3e} m)")]
    BehindCamera { z: f64 },
    #[error("back-projection system is singular (condition number {cond:.3e})")]
    SingularSystem { cond: f64 },
    #[error("invalid camera model: {0}")]
    InvalidModel(String),
}

/// Pinhole intrinsics together with the depth sensor's valid range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub focal_px: f64,
    pub principal: [f64; 2],
    pub image_size: [usize; 2],
    pub depth_min: f64,
    pub depth_max: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            focal_px: 600.0,
            principal: [320.0, 240.0],
            image_size: [640, 480],
            depth_min: 0.16,
            depth_max: 3.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), CameraError> {
        let [w, h] = self.image_size;
        let [u0, v0] = self.principal;
        let ok = self.focal_px > 0.0
            && (0.0..w as f64).contains(&u0)
            && (0.0..h as f64).contains(&v0)
            && 0.0 < self.depth_min
            && self.depth_min < self.depth_max;
        if ok {
            Ok(())
        } else {
            Err(CameraError::InvalidModel(format!("{self:?}")))
        }
    }

    pub fn width(&self) -> usize {
        self.image_size[0]
    }

    pub fn height(&self) -> usize {
        self.image_size[1]
    }

    pub fn u0(&self) -> f64 {
        self.principal[0]
    }

    pub fn v0(&self) -> f64 {
        self.principal[1]
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width() as f64 && p.y < self.height() as f64
    }

    /// Projects a point already expressed in the camera frame.
    pub fn project_camera_point(&self, pc: &Vector3<f64>) -> Result<Point2<f64>, CameraError> {
        if pc.z <= MIN_FRONT_DEPTH {
            return Err(CameraError::BehindCamera { z: pc.z });
        }
        Ok(Point2::new(
            self.u0() + self.focal_px * pc.x / pc.z,
            self.v0() + self.focal_px * pc.y / pc.z,
        ))
    }

    /// Direction (with unit `z`) of the ray through a pixel, in the camera frame.
    pub fn ray(&self, p: &Point2<f64>) -> Vector3<f64> {
        Vector3::new(
            (p.x - self.u0()) / self.focal_px,
            (p.y - self.v0()) / self.focal_px,
            1.0,
        )
    }

    pub fn in_range(&self, depth: f64) -> bool {
        depth >= self.depth_min && depth <= self.depth_max
    }
}

/// 3×4 camera matrix `K [Rᵀ | −Rᵀt]` for a camera at world pose `(R, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMatrix(pub Matrix3x4<f64>);

/// The blocks of `[[A, B, C], [D, E, F]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMatrixBlocks {
    pub a: Matrix2<f64>,
    pub b: Matrix2x1<f64>,
    pub c: Matrix2x1<f64>,
    pub d: Matrix1x2<f64>,
    pub e: f64,
    pub f: f64,
}

impl CameraMatrix {
    pub fn blocks(&self) -> CameraMatrixBlocks {
        let m = &self.0;
        CameraMatrixBlocks {
            a: m.fixed_view::<2, 2>(0, 0).into_owned(),
            b: m.fixed_view::<2, 1>(0, 2).into_owned(),
            c: m.fixed_view::<2, 1>(0, 3).into_owned(),
            d: m.fixed_view::<1, 2>(2, 0).into_owned(),
            e: m[(2, 2)],
            f: m[(2, 3)],
        }
    }

    pub fn from_blocks(b: &CameraMatrixBlocks) -> Self {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&b.a);
        m.fixed_view_mut::<2, 1>(0, 2).copy_from(&b.b);
        m.fixed_view_mut::<2, 1>(0, 3).copy_from(&b.c);
        m.fixed_view_mut::<1, 2>(2, 0).copy_from(&b.d);
        m[(2, 2)] = b.e;
        m[(2, 3)] = b.f;
        Self(m)
    }

    /// Homogeneous product `(u w, v w, w)`.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.0 * Vector4::new(p.x, p.y, p.z, 1.0)
    }
}

pub fn camera_matrix(cam: &CameraModel, pose: &Pose) -> CameraMatrix {
    let k = nalgebra::Matrix3::new(cam.focal_px, 0.0, cam.u0(), 0.0, cam.focal_px, cam.v0(), 0.0, 0.0, 1.0);
    let rt = pose.rotation.matrix().transpose();
    let mut ext = Matrix3x4::zeros();
    ext.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    ext.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-rt * pose.translation));
    CameraMatrix(k * ext)
}

/// A projected pixel together with the point's depth along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Point2<f64>,
    pub depth: f64,
}

/// Projects a world point through a camera at world pose `pose`.
pub fn project(cam: &CameraModel, pose: &Pose, point: &Vector3<f64>) -> Result<Projection, CameraError> {
    let pc = pose.inverse_transform_point(point);
    let pixel = cam.project_camera_point(&pc)?;
    Ok(Projection { pixel, depth: pc.z })
}

/// Recovers `(X, Y)` of a point whose third coordinate `z` is known, from its
/// pixel and the camera matrix.
///
/// Writing the projection as `f·w = A(X,Y) + Bz + C` with `w = D(X,Y) + Ez + F`
/// gives the 2×2 system `(f·D − A)(X,Y) = Bz + C − (Ez + F)f`.
pub fn solve_xy(cm: &CameraMatrix, pixel: &Point2<f64>, z: f64) -> Result<Vector2<f64>, CameraError> {
    let blk = cm.blocks();
    let f = Vector2::new(pixel.x, pixel.y);
    let system = f * blk.d - blk.a;
    let rhs = blk.b * z + blk.c - f * (blk.e * z + blk.f);
    let sv = system.singular_values();
    let cond = if sv[1] > 0.0 { sv[0] / sv[1] } else { f64::INFINITY };
    if cond.is_nan() || cond >= 1e12 {
        return Err(CameraError::SingularSystem { cond });
    }
    system.lu().solve(&rhs).ok_or(CameraError::SingularSystem { cond })
}

/// Depth image with an explicit validity marker per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub depth_min: f64,
    pub depth_max: f64,
    values: Grid<Option<f64>>,
}

impl DepthImage {
    pub fn new(depth_min: f64, depth_max: f64, values: Grid<Option<f64>>) -> Self {
        Self {
            depth_min,
            depth_max,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn values(&self) -> &Grid<Option<f64>> {
        &self.values
    }

    /// Depth at an integer pixel; `None` when invalid or out of bounds.
    pub fn at(&self, u: usize, v: usize) -> Option<f64> {
        self.values.get(u, v).copied().flatten()
    }

    /// Depth at the pixel nearest to `p` (pixel centres sit on integer
    /// coordinates).
    pub fn at_pixel(&self, p: &Point2<f64>) -> Option<f64> {
        let (u, v) = (p.x.round(), p.y.round());
        if u < 0.0 || v < 0.0 {
            return None;
        }
        self.at(u as usize, v as usize)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Writes `W,H,depth_min,depth_max` followed by one CSV row per image
    /// row; invalid pixels are written as `NaN`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{}",
            self.width(),
            self.height(),
            self.depth_min,
            self.depth_max
        )?;
        let mut line = String::new();
        for row in self.values.rows() {
            line.clear();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                match v {
                    Some(d) => line.push_str(&d.to_string()),
                    None => line.push_str("NaN"),
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, crate::LogError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| crate::LogError::Malformed("empty depth log".into()))??;
        let fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(crate::LogError::Malformed(format!("bad depth header: {header}")));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| crate::LogError::Malformed(e.to_string()))
        };
        let parse_f64 = |s: &str| s.parse::<f64>().map_err(|e| crate::LogError::Malformed(e.to_string()));
        let (w, h) = (parse_usize(fields[0])?, parse_usize(fields[1])?);
        let (dmin, dmax) = (parse_f64(fields[2])?, parse_f64(fields[3])?);
        let mut data = Vec::with_capacity(w * h);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.split(',') {
                let v = parse_f64(tok.trim())?;
                data.push(if v.is_nan() { None } else { Some(v) });
            }
        }
        if data.len() != w * h {
            return Err(crate::LogError::Malformed(format!(
                "depth log has {} values, header says {}x{}",
                data.len(),
                w,
                h
            )));
        }
        Ok(Self::new(dmin, dmax, Grid::from_vec(w, h, data)))
    }
}

/// Applies the sensor model to one true depth sample: out-of-range returns
/// are invalid, valid ones get zero-mean Gaussian noise and are kept inside
/// the valid range.
pub fn sense_depth_value<R: Rng + ?Sized>(cam: &CameraModel, true_depth: f64, sigma: f64, rng: &mut R) -> Option<f64> {
    if !true_depth.is_finite() || !cam.in_range(true_depth) {
        return None;
    }
    let noisy = if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("sigma is positive and finite");
        true_depth + n.sample(rng)
    } else {
        true_depth
    };
    Some(noisy.clamp(cam.depth_min, cam.depth_max))
}

pub fn sense_depth<R: Rng + ?Sized>(cam: &CameraModel, true_depth: &Grid<f64>, sigma: f64, rng: &mut R) -> DepthImage {
    let values = true_depth.map(|&d| sense_depth_value(cam, d, sigma, rng));
    DepthImage::new(cam.depth_min, cam.depth_max, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_matrix_is_intrinsics() {
        let cam = CameraModel::default();
        let cm = camera_matrix(&cam, &Pose::identity());
        let expected = Matrix3x4::new(600.0, 0.0, 320.0, 0.0, 0.0, 600.0, 240.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        assert_eq!(cm.0, expected);
    }

    #[test]
    fn on_axis_and_offset_projection() {
        let cam = CameraModel::default();
        let p = project(&cam, &Pose::identity(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(p.pixel, Point2::new(320.0, 240.0));
        let p = project(&cam, &Pose::identity(), &Vector3::new(0.1, 0.0, 1.0)).unwrap();
        assert_relative_eq!(p.pixel.x, 380.0, epsilon = 1e-12);
        assert_relative_eq!(p.pixel.y, 240.0, epsilon = 1e-12);
    }

    #[test]
    fn translated_camera_sees_origin_on_axis() {
        let cam = CameraModel::default();
        let pose = Pose::from_translation(0.0, 0.0, -1.0);
        let h = camera_matrix(&cam, &pose).apply(&Vector3::zeros());
        assert_relative_eq!(h, Vector3::new(320.0, 240.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn behind_camera() {
        let cam = CameraModel::default();
        let err = project(&cam, &Pose::identity(), &Vector3::new(0.0, 0.0, -0.5)).unwrap_err();
        assert!(matches!(err, CameraError::BehindCamera { .. }));
    }

    #[test]
    fn solve_xy_on_axis() {
        let cam = CameraModel::default();
        let cm = camera_matrix(&cam, &Pose::identity());
        let xy = solve_xy(&cm, &Point2::new(320.0, 240.0), 0.7).unwrap();
        assert_relative_eq!(xy, Vector2::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn solve_xy_singular() {
        // A camera whose optical axis lies in the X–Y plane cannot recover
        // (X, Y) from a known Z at the principal point.
        let cam = CameraModel::default();
        let pose = Pose::rot_x(std::f64::consts::FRAC_PI_2);
        let cm = camera_matrix(&cam, &pose);
        let err = solve_xy(&cm, &Point2::new(320.0, 240.0), 0.5).unwrap_err();
        assert!(matches!(err, CameraError::SingularSystem { .. }));
    }

    #[test]
    fn blocks_reassemble() {
        let cam = CameraModel::default();
        let pose = Pose::rot_y(0.2).compose(&Pose::from_translation(0.1, 0.2, -0.4));
        let cm = camera_matrix(&cam, &pose);
        assert_eq!(CameraMatrix::from_blocks(&cm.blocks()), cm);
    }

    #[test]
    fn sense_depth_range() {
        let cam = CameraModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all_far = sense_depth(&cam, &Grid::filled(4, 3, 0.5), 0.0, &mut rng);
        assert_eq!(all_far.valid_count(), 12);
        let all_near = sense_depth(&cam, &Grid::filled(4, 3, 0.10), 0.0, &mut rng);
        assert_eq!(all_near.valid_count(), 0);
        let mixed = Grid::from_fn(4, 3, |u, _| if u % 2 == 0 { 0.10 } else { 0.50 });
        let img = sense_depth(&cam, &mixed, 0.0, &mut rng);
        for v in 0..3 {
            for u in 0..4 {
                assert_eq!(img.at(u, v).is_none(), u % 2 == 0);
            }
        }
    }

    #[test]
    fn noisy_depth_stays_in_range() {
        let cam = CameraModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = sense_depth(&cam, &Grid::filled(50, 50, cam.depth_min + 1e-4), 0.002, &mut rng);
        assert!(img.values().iter().flatten().all(|d| cam.in_range(*d)));
    }

    #[test]
    fn depth_csv_round_trip() {
        let vals = Grid::from_vec(3, 2, vec![Some(0.5), None, Some(0.25), Some(1.0), Some(0.3), None]);
        let img = DepthImage::new(0.16, 3.0, vals);
        let mut buf = Vec::new();
        img.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("3,2,0.16,3\n"));
        assert!(text.contains("NaN"));
        let back = DepthImage::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, img);
    }
}
