use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Pose};

use super::planar_pose;

/// Instantaneous planar displacement of the object at time `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub at: f64,
    pub dx: f64,
    pub dy: f64,
    #[serde(default)]
    pub dyaw: f64,
}

/// Constant planar velocity over `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub duration: f64,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionModel {
    #[default]
    Static,
    /// Alternates straight moves towards random waypoints with rests. The
    /// object stays inside a square zone centred on its start position.
    RandomPlanar {
        /// Speed bound, m/s.
        speed: f64,
        /// Half side of the workspace zone, metres.
        zone_half: f64,
        /// Longest single move, metres.
        max_step: f64,
        /// Rest duration range, seconds.
        rest: [f64; 2],
    },
    Scripted {
        #[serde(default)]
        jumps: Vec<Jump>,
        #[serde(default)]
        segments: Vec<Segment>,
    },
}

impl MotionModel {
    pub fn random_planar(speed: f64) -> Self {
        MotionModel::RandomPlanar {
            speed,
            zone_half: 0.15,
            max_step: 0.04,
            rest: [4.0, 10.0],
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, MotionModel::Static)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Resting { until: f64 },
    Moving { target: [f64; 2] },
}

/// Runtime state of a [`MotionModel`] with its own random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMotion {
    pub model: MotionModel,
    zone_center: [f64; 2],
    phase: Phase,
    rng: ChaCha8Rng,
}

impl ObjectMotion {
    pub fn new(model: MotionModel, start: &Pose, mut rng: ChaCha8Rng) -> Self {
        // The first move starts within a second so the approach itself sees
        // the object in motion.
        let first_rest = match &model {
            MotionModel::RandomPlanar { .. } => rng.random_range(0.0..=1.0),
            _ => 0.0,
        };
        Self {
            model,
            zone_center: [start.translation.x, start.translation.y],
            phase: Phase::Resting { until: first_rest },
            rng,
        }
    }

    /// Object pose after advancing from time `t` to `t + dt`.
    pub fn advance(&mut self, pose: &Pose, t: f64, dt: f64) -> Pose {
        let (x, y) = (pose.translation.x, pose.translation.y);
        let r = pose.rotation.matrix();
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        match &self.model {
            MotionModel::Static => *pose,
            MotionModel::Scripted { jumps, segments } => {
                let t1 = t + dt;
                let (mut nx, mut ny, mut nyaw) = (x, y, yaw);
                for s in segments {
                    let overlap = (t1.min(s.start + s.duration) - t.max(s.start)).max(0.0);
                    nx += s.vx * overlap;
                    ny += s.vy * overlap;
                }
                for j in jumps {
                    if j.at >= t && j.at < t1 {
                        nx += j.dx;
                        ny += j.dy;
                        nyaw = wrap_angle(nyaw + j.dyaw);
                    }
                }
                planar_pose(nx, ny, nyaw)
            }
            &MotionModel::RandomPlanar {
                speed,
                zone_half,
                max_step,
                rest,
            } => {
                if let Phase::Resting { until } = self.phase {
                    if t < until {
                        return *pose;
                    }
                    let [cx, cy] = self.zone_center;
                    let ang = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    let len = self.rng.random_range(0.3 * max_step..=max_step);
                    let tx = (x + len * ang.cos()).clamp(cx - zone_half, cx + zone_half);
                    let ty = (y + len * ang.sin()).clamp(cy - zone_half, cy + zone_half);
                    self.phase = Phase::Moving { target: [tx, ty] };
                }
                let Phase::Moving { target } = self.phase else {
                    unreachable!()
                };
                let (dx, dy) = (target[0] - x, target[1] - y);
                let dist = dx.hypot(dy);
                let reach = speed * dt;
                if dist <= reach {
                    let pause = self.rng.random_range(rest[0]..=rest[1]);
                    self.phase = Phase::Resting { until: t + dt + pause };
                    planar_pose(target[0], target[1], yaw)
                } else {
                    planar_pose(x + dx / dist * reach, y + dy / dist * reach, yaw)
                }
            }
        }
    }
}

/// Independent random stream `stream` derived from a trial seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_never_moves() {
        let p = planar_pose(0.1, -0.2, 0.3);
        let mut m = ObjectMotion::new(MotionModel::Static, &p, stream_rng(1, 1));
        assert_eq!(m.advance(&p, 0.0, 1.0 / 30.0), p);
    }

    #[test]
    fn random_planar_respects_bounds() {
        let start = planar_pose(0.02, 0.01, 0.5);
        let model = MotionModel::random_planar(0.05);
        let mut m = ObjectMotion::new(model, &start, stream_rng(7, 1));
        let dt = 1.0 / 30.0;
        let mut p = start;
        let mut moved = 0.0;
        for k in 0..30 * 60 {
            let q = m.advance(&p, k as f64 * dt, dt);
            let d = (q.translation - p.translation).norm();
            assert!(d <= 0.05 * dt + 1e-12);
            assert!((q.translation.x - 0.02).abs() <= 0.15 + 1e-12);
            assert!((q.translation.y - 0.01).abs() <= 0.15 + 1e-12);
            assert_eq!(q.translation.z, 0.0);
            moved += d;
            p = q;
        }
        assert!(moved > 0.1);
    }

    #[test]
    fn scripted_jump_and_segment() {
        let start = planar_pose(0.0, 0.0, 0.0);
        let model = MotionModel::Scripted {
            jumps: vec![Jump {
                at: 0.5,
                dx: 0.03,
                dy: 0.0,
                dyaw: 0.0,
            }],
            segments: vec![Segment {
                start: 1.0,
                duration: 1.0,
                vx: 0.0,
                vy: 0.1,
            }],
        };
        let mut m = ObjectMotion::new(model, &start, stream_rng(0, 1));
        let dt = 0.1;
        let mut p = start;
        for k in 0..30 {
            p = m.advance(&p, k as f64 * dt, dt);
        }
        assert!((p.translation.x - 0.03).abs() < 1e-12);
        assert!((p.translation.y - 0.1).abs() < 1e-12);
    }

    #[test]
    fn deterministic_streams() {
        let start = planar_pose(0.0, 0.0, 0.0);
        let run = || {
            let mut m = ObjectMotion::new(MotionModel::random_planar(0.03), &start, stream_rng(3, 1));
            let mut p = start;
            for k in 0..600 {
                p = m.advance(&p, k as f64 / 30.0, 1.0 / 30.0);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
