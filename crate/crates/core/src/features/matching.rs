//! Descriptor matching and the five-stage filtering hierarchy:
//! ratio test, duplicate removal, forward–backward loop check, epipolar
//! RANSAC, and one-match-per-cell grid thinning.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::epipolar::{estimate_fundamental_ransac, RansacConfig};
use super::{descriptor_distance, FeatureSet, Match, MatchError, MatchSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Ratio,
    Dedup,
    LoopCheck,
    Ransac,
    Grid,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ratio => "ratio",
            Stage::Dedup => "dedup",
            Stage::LoopCheck => "loop",
            Stage::Ransac => "ransac",
            Stage::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub ratio: f64,
    pub dedup_radius_px: f64,
    pub ransac: RansacConfig,
    /// `(cols, rows)` of the thinning grid.
    pub grid: [usize; 2],
    /// Image size the grid cells partition, `(width, height)`.
    pub image_size: [usize; 2],
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            dedup_radius_px: 5.0,
            ransac: RansacConfig::default(),
            grid: [20, 20],
            image_size: [640, 480],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub ratio: usize,
    pub dedup: usize,
    pub loop_check: usize,
    pub ransac: usize,
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    /// Output of every stage, in pipeline order.
    pub stages: Vec<(Stage, MatchSet)>,
    pub model: nalgebra::Matrix3<f64>,
}

impl MatchOutcome {
    pub fn matches(&self) -> &MatchSet {
        &self.stages.last().expect("pipeline has stages").1
    }

    pub fn counts(&self) -> StageCounts {
        counts_of(&self.stages)
    }
}

fn counts_of(stages: &[(Stage, MatchSet)]) -> StageCounts {
    let mut c = StageCounts::default();
    for (stage, set) in stages {
        let n = set.len();
        match stage {
            Stage::Ratio => c.ratio = n,
            Stage::Dedup => c.dedup = n,
            Stage::LoopCheck => c.loop_check = n,
            Stage::Ransac => c.ransac = n,
            Stage::Grid => c.grid = n,
        }
    }
    c
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("feature matching failed: {cause}")]
pub struct MatchFailure {
    pub cause: MatchError,
    pub counts: StageCounts,
}

fn nearest_two<'a>(
    query: &super::Descriptor,
    pool: impl Iterator<Item = (usize, &'a super::Descriptor)>,
) -> (Option<(usize, f64)>, f64) {
    let mut best: Option<(usize, f64)> = None;
    let mut second = f64::INFINITY;
    for (j, d) in pool {
        let dist = descriptor_distance(query, d);
        match best {
            Some((_, b)) if dist >= b => second = second.min(dist),
            _ => {
                if let Some((_, b)) = best {
                    second = b;
                }
                best = Some((j, dist));
            }
        }
    }
    (best, second)
}

/// Nearest-neighbour matching with the distance-ratio test. A reference
/// feature needs a second neighbour to be tested, so a single-feature current
/// set yields no matches. When two reference features claim the same current
/// feature the closer one keeps it.
pub fn match_ratio(reference: &FeatureSet, current: &FeatureSet, ratio: f64) -> MatchSet {
    let mut claims: HashMap<usize, Match> = HashMap::new();
    for (ri, r) in reference.features.iter().enumerate() {
        let (best, second) = nearest_two(&r.d, current.features.iter().enumerate().map(|(j, f)| (j, &f.d)));
        let Some((cj, d1)) = best else {
            continue;
        };
        if !second.is_finite() || d1 >= ratio * second {
            continue;
        }
        let candidate = Match {
            ref_idx: ri,
            cur_idx: cj,
            distance: d1,
        };
        claims
            .entry(cj)
            .and_modify(|m| {
                if candidate.distance < m.distance {
                    *m = candidate;
                }
            })
            .or_insert(candidate);
    }
    MatchSet::new(claims.into_values().collect())
}

/// Removes matches whose current pixels lie within `radius_px` of an already
/// accepted match, visiting matches by ascending descriptor distance.
pub fn dedup(m: &MatchSet, current: &FeatureSet, radius_px: f64) -> MatchSet {
    let mut order: Vec<Match> = m.matches.clone();
    order.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.ref_idx.cmp(&b.ref_idx)));
    let r2 = radius_px * radius_px;
    let mut kept: Vec<Match> = Vec::with_capacity(order.len());
    for cand in order {
        let p = current.features[cand.cur_idx].p;
        let clash = kept
            .iter()
            .any(|k| (current.features[k.cur_idx].p - p).norm_squared() <= r2);
        if !clash {
            kept.push(cand);
        }
    }
    MatchSet::new(kept)
}

/// Keeps `(i, j)` only if reference feature `i` is also the nearest
/// neighbour of current feature `j`.
pub fn loop_check(reference: &FeatureSet, current: &FeatureSet, m: &MatchSet) -> MatchSet {
    let kept = m
        .iter()
        .filter(|x| {
            let q = &current.features[x.cur_idx].d;
            let (best, _) = nearest_two(q, reference.features.iter().enumerate().map(|(i, f)| (i, &f.d)));
            best.map(|(i, _)| i) == Some(x.ref_idx)
        })
        .copied()
        .collect();
    MatchSet::new(kept)
}

/// At most one match per grid cell, the one with the smallest descriptor
/// distance. Cell of pixel `(u, v)` is `(⌊u·cols/W⌋, ⌊v·rows/H⌋)`.
pub fn grid_filter(m: &MatchSet, current: &FeatureSet, grid: [usize; 2], image_size: [usize; 2]) -> MatchSet {
    let [cols, rows] = grid;
    let [w, h] = image_size;
    let mut cells: HashMap<(usize, usize), Match> = HashMap::new();
    for x in m.iter() {
        let p = current.features[x.cur_idx].p;
        let cu = ((p.x * cols as f64 / w as f64).floor().max(0.0) as usize).min(cols - 1);
        let cv = ((p.y * rows as f64 / h as f64).floor().max(0.0) as usize).min(rows - 1);
        cells
            .entry((cu, cv))
            .and_modify(|k| {
                if (x.distance, x.ref_idx) < (k.distance, k.ref_idx) {
                    *k = *x;
                }
            })
            .or_insert(*x);
    }
    MatchSet::new(cells.into_values().collect())
}

/// Runs the full hierarchy. The RANSAC seed is mixed with the current frame
/// number so consecutive frames draw different samples.
pub fn robust_match(
    reference: &FeatureSet,
    current: &FeatureSet,
    cfg: &MatchConfig,
) -> Result<MatchOutcome, MatchFailure> {
    let mut stages: Vec<(Stage, MatchSet)> = Vec::with_capacity(5);
    let ratio = match_ratio(reference, current, cfg.ratio);
    let deduped = dedup(&ratio, current, cfg.dedup_radius_px);
    let looped = loop_check(reference, current, &deduped);
    stages.push((Stage::Ratio, ratio));
    stages.push((Stage::Dedup, deduped));
    stages.push((Stage::LoopCheck, looped));

    let mut ransac_cfg = cfg.ransac;
    ransac_cfg.seed = cfg.ransac.seed ^ current.frame.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let fit =
        estimate_fundamental_ransac(&stages[2].1, reference, current, &ransac_cfg).map_err(|cause| MatchFailure {
            cause,
            counts: counts_of(&stages),
        })?;
    let gridded = grid_filter(&fit.inliers, current, cfg.grid, cfg.image_size);
    stages.push((Stage::Ransac, fit.inliers));
    stages.push((Stage::Grid, gridded));
    Ok(MatchOutcome {
        stages,
        model: fit.model,
    })
}
