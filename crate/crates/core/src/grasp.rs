//! Grasp maps, best-grasp selection with temporal tracking, and the grasp
//! and desired-camera poses derived from them.
//!
//! The learned synthesizer is replaced by an oracle that renders a Gaussian
//! quality bump around the projection of the object's annotated grasp centre.

use std::io::{BufRead, Write};

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{project, solve_xy, CameraError, CameraMatrix, CameraModel, DepthImage};
use crate::geometry::{wrap_half_angle, Pose, RpyPose};
use crate::grid::Grid;
use crate::sim::SceneObject;
use crate::LogError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraspError {
    #[error("object grasp centre is not visible")]
    ObjectNotVisible,
    #[error("no local maximum of grasp quality exceeds {q_min}")]
    NoGraspFound { q_min: f64 },
    #[error("depth is invalid at grasp pixel ({u}, {v})")]
    InvalidDepthAtGrasp { u: usize, v: usize },
    #[error(transparent)]
    Camera(#[from] CameraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspConfig {
    /// Minimum quality for a local maximum to count as a grasp.
    pub q_min: f64,
    /// Standard deviation of the oracle's quality bump, pixels.
    pub sigma_px: f64,
    /// Quality at the bump's peak.
    pub peak_quality: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            q_min: 0.2,
            sigma_px: 15.0,
            peak_quality: 0.95,
        }
    }
}

/// Per-pixel finger orientation (rad), opening width (m) and quality.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspMap {
    pub phi: Grid<f64>,
    pub width: Grid<f64>,
    pub quality: Grid<f64>,
}

/// A grasp candidate at pixel `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grasp {
    pub u: usize,
    pub v: usize,
    pub phi: f64,
    pub w: f64,
    pub q: f64,
}

impl Grasp {
    pub fn pixel(&self) -> Point2<f64> {
        Point2::new(self.u as f64, self.v as f64)
    }

    /// `u,v,phi_rad,w_m,q`
    pub fn to_log_line(&self) -> String {
        format!("{},{},{},{},{}", self.u, self.v, self.phi, self.w, self.q)
    }

    pub fn from_log_line(line: &str) -> Result<Self, LogError> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(LogError::Malformed(format!("grasp line needs 5 fields: {line}")));
        }
        let bad = |e: &dyn std::fmt::Display| LogError::Malformed(e.to_string());
        Ok(Self {
            u: f[0].parse().map_err(|e| bad(&e))?,
            v: f[1].parse().map_err(|e| bad(&e))?,
            phi: f[2].parse().map_err(|e| bad(&e))?,
            w: f[3].parse().map_err(|e| bad(&e))?,
            q: f[4].parse().map_err(|e| bad(&e))?,
        })
    }
}

/// Camera-frame grasp: a position plus a yaw about the optical axis. Roll and
/// pitch are zero because the fingers approach normal to the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub position: Vector3<f64>,
    pub yaw: f64,
}

impl GraspPose {
    pub fn to_rpy(&self) -> RpyPose {
        RpyPose {
            x: self.position.x,
            y: self.position.y,
            z: self.position.z,
            roll: 0.0,
            pitch: 0.0,
            yaw: self.yaw,
        }
    }

    pub fn to_pose(&self) -> Pose {
        self.to_rpy().to_pose()
    }
}

impl GraspMap {
    pub fn dims(&self) -> (usize, usize) {
        self.quality.dims()
    }

    fn grasp_at(&self, u: usize, v: usize) -> Grasp {
        Grasp {
            u,
            v,
            phi: *self.phi.at(u, v),
            w: *self.width.at(u, v),
            q: *self.quality.at(u, v),
        }
    }

    /// Local maxima of quality above `q_min`.
    ///
    /// A pixel is a maximum when it is strictly greater than its 8-neighbours
    /// that precede it in raster order and not smaller than those that follow,
    /// so an exactly flat pair of peaks yields one maximum, not zero.
    pub fn local_maxima(&self, q_min: f64) -> Vec<Grasp> {
        let (w, h) = self.dims();
        let q = self.quality.as_slice();
        let mut out = Vec::new();
        for v in 0..h {
            for u in 0..w {
                let c = q[v * w + u];
                if c <= q_min {
                    continue;
                }
                let mut is_max = true;
                'nbr: for dv in -1i64..=1 {
                    for du in -1i64..=1 {
                        if du == 0 && dv == 0 {
                            continue;
                        }
                        let (nu, nv) = (u as i64 + du, v as i64 + dv);
                        if nu < 0 || nv < 0 || nu >= w as i64 || nv >= h as i64 {
                            continue;
                        }
                        let n = q[nv as usize * w + nu as usize];
                        let precedes = dv < 0 || (dv == 0 && du < 0);
                        if (precedes && n >= c) || (!precedes && n > c) {
                            is_max = false;
                            break 'nbr;
                        }
                    }
                }
                if is_max {
                    out.push(self.grasp_at(u, v));
                }
            }
        }
        out
    }

    /// Writes the three grids, each prefixed by the shared `W,H` header.
    pub fn write_csv<W: Write>(&self, phi: W, width: W, quality: W) -> std::io::Result<()> {
        for (grid, out) in [(&self.phi, phi), (&self.width, width), (&self.quality, quality)] {
            write_grid(grid, out)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(phi: R, width: R, quality: R) -> Result<Self, LogError> {
        let map = Self {
            phi: read_grid(phi)?,
            width: read_grid(width)?,
            quality: read_grid(quality)?,
        };
        if map.phi.dims() != map.quality.dims() || map.width.dims() != map.quality.dims() {
            return Err(LogError::Malformed("grasp map grids differ in size".into()));
        }
        Ok(map)
    }
}

fn write_grid<W: Write>(grid: &Grid<f64>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{},{}", grid.width(), grid.height())?;
    for row in grid.rows() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

fn read_grid<R: BufRead>(input: R) -> Result<Grid<f64>, LogError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| LogError::Malformed("empty grid".into()))??;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| LogError::Malformed(e.to_string()))?;
    let [w, h] = dims[..] else {
        return Err(LogError::Malformed(format!("bad grid header: {header}")));
    };
    let mut data = Vec::with_capacity(w * h);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split(',') {
            data.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| LogError::Malformed(e.to_string()))?,
            );
        }
    }
    if data.len() != w * h {
        return Err(LogError::Malformed("grid size mismatch".into()));
    }
    Ok(Grid::from_vec(w, h, data))
}

/// Image-plane angle of a camera-frame direction `d` at camera-frame point `p`.
fn projected_angle(p: &Vector3<f64>, d: &Vector3<f64>) -> f64 {
    let du = d.x * p.z - p.x * d.z;
    let dv = d.y * p.z - p.y * d.z;
    wrap_half_angle(dv.atan2(du))
}

/// Oracle grasp map for a camera at world pose `cam_pose`.
pub fn synthesize_grasp_map(
    scene: &SceneObject,
    cam: &CameraModel,
    cam_pose: &Pose,
    cfg: &GraspConfig,
) -> Result<GraspMap, GraspError> {
    let centre = scene.grasp_center_world();
    let proj = project(cam, cam_pose, &centre).map_err(|_| GraspError::ObjectNotVisible)?;
    if !cam.contains(&proj.pixel) {
        return Err(GraspError::ObjectNotVisible);
    }
    let pc = cam_pose.inverse_transform_point(&centre);
    let axis_c = cam_pose.rotation.inverse() * scene.grasp_axis_world();
    let phi = projected_angle(&pc, &axis_c);

    let (w, h) = (cam.width(), cam.height());
    let mut quality = Grid::filled(w, h, 0.0);
    // The bump is negligible beyond 6σ; only that window is evaluated.
    let reach = (6.0 * cfg.sigma_px).ceil();
    let u_lo = (proj.pixel.x - reach).max(0.0) as usize;
    let u_hi = ((proj.pixel.x + reach).min(w as f64 - 1.0)) as usize;
    let v_lo = (proj.pixel.y - reach).max(0.0) as usize;
    let v_hi = ((proj.pixel.y + reach).min(h as f64 - 1.0)) as usize;
    let inv = 1.0 / (2.0 * cfg.sigma_px * cfg.sigma_px);
    for v in v_lo..=v_hi {
        let dv = v as f64 - proj.pixel.y;
        for u in u_lo..=u_hi {
            let du = u as f64 - proj.pixel.x;
            *quality.get_mut(u, v).expect("window is inside the image") =
                cfg.peak_quality * (-(du * du + dv * dv) * inv).exp();
        }
    }
    Ok(GraspMap {
        phi: Grid::filled(w, h, phi),
        width: Grid::filled(w, h, scene.grasp_width),
        quality,
    })
}

/// Global best grasp, or the local maximum nearest to `previous` when one is
/// being tracked.
pub fn select_best_grasp(map: &GraspMap, previous: Option<&Grasp>, q_min: f64) -> Result<Grasp, GraspError> {
    let candidates = map.local_maxima(q_min);
    let tie_break = |a: &Grasp, b: &Grasp| b.q.total_cmp(&a.q).then(a.u.cmp(&b.u)).then(a.v.cmp(&b.v));
    let best = match previous {
        None => candidates.into_iter().min_by(tie_break),
        Some(prev) => {
            let dist2 = |g: &Grasp| {
                let du = g.u as f64 - prev.u as f64;
                let dv = g.v as f64 - prev.v as f64;
                du * du + dv * dv
            };
            candidates
                .into_iter()
                .min_by(|a, b| dist2(a).total_cmp(&dist2(b)).then_with(|| tie_break(a, b)))
        }
    };
    best.ok_or(GraspError::NoGraspFound { q_min })
}

/// Camera-frame grasp pose from a grasp pixel and the depth at that pixel.
///
/// `cm` is the camera matrix of the capturing camera expressed in its own
/// frame, so that the known third coordinate is the sensed depth.
pub fn grasp_to_pose(g: &Grasp, cm: &CameraMatrix, depth: &DepthImage) -> Result<GraspPose, GraspError> {
    let z = depth
        .at(g.u, g.v)
        .ok_or(GraspError::InvalidDepthAtGrasp { u: g.u, v: g.v })?;
    let xy = solve_xy(cm, &g.pixel(), z)?;
    Ok(GraspPose {
        position: Vector3::new(xy.x, xy.y, z),
        yaw: g.phi,
    })
}

/// Desired camera pose relative to the current camera, `c_T_c* = c_T_g • e_T_c`,
/// which places the end-effector frame on the grasp frame.
pub fn desired_camera_pose(grasp: &GraspPose, hand_eye: &Pose) -> Pose {
    grasp.to_pose().compose(hand_eye)
}
