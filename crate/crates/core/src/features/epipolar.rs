//! Two-view model estimation: the normalized eight-point fundamental matrix,
//! a normalized DLT homography, and a seeded RANSAC wrapper around both.

use nalgebra::{DMatrix, Matrix3, Point2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{homogeneous, FeatureSet, Match, MatchError, MatchSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpipolarModel {
    Fundamental,
    /// For strictly planar targets, where the fundamental matrix is not
    /// uniquely determined.
    Homography,
}

impl EpipolarModel {
    pub fn sample_size(self) -> usize {
        match self {
            EpipolarModel::Fundamental => 8,
            EpipolarModel::Homography => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Inlier threshold in pixels (Sampson distance for F, transfer
    /// distance for H).
    pub threshold_px: f64,
    pub max_iterations: usize,
    /// Probability of drawing at least one outlier-free sample, used for
    /// adaptive early termination.
    pub confidence: f64,
    pub min_inliers: usize,
    pub seed: u64,
    pub model: EpipolarModel,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold_px: 1.5,
            max_iterations: 1000,
            confidence: 0.999,
            min_inliers: 8,
            seed: 0,
            model: EpipolarModel::Fundamental,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    /// `F` with `x_curᵀ F x_ref = 0`, or `H` with `x_cur ~ H x_ref`; unit
    /// Frobenius norm.
    pub model: Matrix3<f64>,
    pub kind: EpipolarModel,
    pub inliers: MatchSet,
    pub iterations: usize,
}

/// Similarity transform moving the centroid to the origin with mean
/// distance √2.
fn normalization(points: &[Point2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean = points
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean > 1e-12 {
        std::f64::consts::SQRT_2 / mean
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply(t: &Matrix3<f64>, p: &Point2<f64>) -> Vector3<f64> {
    t * homogeneous(p)
}

/// Right null vector (smallest singular direction) of `a`, padded with zero
/// rows so the full 9-dimensional basis is available.
fn null_vector(mut a: DMatrix<f64>) -> Option<nalgebra::DVector<f64>> {
    let cols = a.ncols();
    if a.nrows() < cols {
        a = a.resize_vertically(cols, 0.0);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    Some(v_t.row(imin).transpose())
}

fn unit_frobenius(m: Matrix3<f64>) -> Option<Matrix3<f64>> {
    let n = m.norm();
    (n > 1e-300 && n.is_finite()).then(|| m / n)
}

/// Normalized eight-point estimate with the rank-2 constraint enforced.
pub fn fundamental_eight_point(refs: &[Point2<f64>], curs: &[Point2<f64>]) -> Option<Matrix3<f64>> {
    if refs.len() < 8 || refs.len() != curs.len() {
        return None;
    }
    let t1 = normalization(refs);
    let t2 = normalization(curs);
    let mut a = DMatrix::zeros(refs.len(), 9);
    for (i, (r, c)) in refs.iter().zip(curs).enumerate() {
        let x = apply(&t1, r);
        let y = apply(&t2, c);
        let row = [y.x * x.x, y.x * x.y, y.x, y.y * x.x, y.y * x.y, y.y, x.x, x.y, 1.0];
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let f = null_vector(a)?;
    let f = Matrix3::from_row_slice(f.as_slice());
    let svd = f.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut s = svd.singular_values;
    let imin = s.imin();
    s[imin] = 0.0;
    let f = u * Matrix3::from_diagonal(&s) * v_t;
    unit_frobenius(t2.transpose() * f * t1)
}

/// Normalized DLT homography mapping reference pixels to current pixels.
pub fn homography_dlt(refs: &[Point2<f64>], curs: &[Point2<f64>]) -> Option<Matrix3<f64>> {
    if refs.len() < 4 || refs.len() != curs.len() {
        return None;
    }
    let t1 = normalization(refs);
    let t2 = normalization(curs);
    let mut a = DMatrix::zeros(2 * refs.len(), 9);
    for (i, (r, c)) in refs.iter().zip(curs).enumerate() {
        let x = apply(&t1, r);
        let y = apply(&t2, c);
        let r0 = [-x.x, -x.y, -1.0, 0.0, 0.0, 0.0, y.x * x.x, y.x * x.y, y.x];
        let r1 = [0.0, 0.0, 0.0, -x.x, -x.y, -1.0, y.y * x.x, y.y * x.y, y.y];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    let h = null_vector(a)?;
    let h = Matrix3::from_row_slice(h.as_slice());
    let t2_inv = t2.try_inverse()?;
    unit_frobenius(t2_inv * h * t1)
}

/// First-order geometric distance (pixels) of a correspondence to `F`.
pub fn sampson_distance(f: &Matrix3<f64>, r: &Point2<f64>, c: &Point2<f64>) -> f64 {
    let x = homogeneous(r);
    let y = homogeneous(c);
    let fx = f * x;
    let fty = f.transpose() * y;
    let num = y.dot(&fx);
    let den = fx.x * fx.x + fx.y * fx.y + fty.x * fty.x + fty.y * fty.y;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (num * num / den).sqrt()
}

/// Distance in the current image between `c` and the transfer of `r` by `H`.
pub fn transfer_distance(h: &Matrix3<f64>, r: &Point2<f64>, c: &Point2<f64>) -> f64 {
    let p = h * homogeneous(r);
    if p.z.abs() < 1e-12 {
        return f64::INFINITY;
    }
    ((p.x / p.z - c.x).powi(2) + (p.y / p.z - c.y).powi(2)).sqrt()
}

fn fit(kind: EpipolarModel, refs: &[Point2<f64>], curs: &[Point2<f64>]) -> Option<Matrix3<f64>> {
    match kind {
        EpipolarModel::Fundamental => fundamental_eight_point(refs, curs),
        EpipolarModel::Homography => homography_dlt(refs, curs),
    }
}

fn residual(kind: EpipolarModel, m: &Matrix3<f64>, r: &Point2<f64>, c: &Point2<f64>) -> f64 {
    match kind {
        EpipolarModel::Fundamental => sampson_distance(m, r, c),
        EpipolarModel::Homography => transfer_distance(m, r, c),
    }
}

fn required_iterations(confidence: f64, inlier_ratio: f64, sample_size: usize) -> usize {
    let w = inlier_ratio.powi(sample_size as i32);
    if w >= 1.0 {
        return 1;
    }
    if w <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - w).ln();
    if n.is_finite() {
        n.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

/// RANSAC over the matches in `m`; the winning model is refit on all its
/// inliers. Sequential and fully determined by `cfg.seed`.
pub fn estimate_fundamental_ransac(
    m: &MatchSet,
    reference: &FeatureSet,
    current: &FeatureSet,
    cfg: &RansacConfig,
) -> Result<RansacFit, MatchError> {
    let s = cfg.model.sample_size();
    let required = s.max(8);
    if m.len() < required {
        return Err(MatchError::TooFewMatches {
            found: m.len(),
            required,
        });
    }
    let refs: Vec<Point2<f64>> = m.iter().map(|x| reference.features[x.ref_idx].p).collect();
    let curs: Vec<Point2<f64>> = m.iter().map(|x| current.features[x.cur_idx].p).collect();
    let n = refs.len();

    let inlier_mask = |model: &Matrix3<f64>| -> Vec<bool> {
        refs.iter()
            .zip(&curs)
            .map(|(r, c)| residual(cfg.model, model, r, c) < cfg.threshold_px)
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Matrix3<f64>, Vec<bool>, usize)> = None;
    let mut budget = cfg.max_iterations;
    let mut iterations = 0;
    let mut sr = Vec::with_capacity(s);
    let mut sc = Vec::with_capacity(s);
    while iterations < budget.min(cfg.max_iterations) {
        iterations += 1;
        let idx = sample(&mut rng, n, s);
        sr.clear();
        sc.clear();
        for i in idx.iter() {
            sr.push(refs[i]);
            sc.push(curs[i]);
        }
        let Some(model) = fit(cfg.model, &sr, &sc) else {
            continue;
        };
        let mask = inlier_mask(&model);
        let count = mask.iter().filter(|b| **b).count();
        if best.as_ref().is_none_or(|b| count > b.2) {
            budget = required_iterations(cfg.confidence, count as f64 / n as f64, s);
            best = Some((model, mask, count));
        }
    }

    let Some((mut model, mut mask, mut count)) = best else {
        return Err(MatchError::NoConsensus {
            inliers: 0,
            required: cfg.min_inliers,
        });
    };
    if count >= s {
        let (ir, ic): (Vec<_>, Vec<_>) = refs
            .iter()
            .zip(&curs)
            .zip(&mask)
            .filter(|(_, keep)| **keep)
            .map(|((r, c), _)| (*r, *c))
            .unzip();
        if let Some(refit) = fit(cfg.model, &ir, &ic) {
            let refit_mask = inlier_mask(&refit);
            let refit_count = refit_mask.iter().filter(|b| **b).count();
            if refit_count >= count {
                model = refit;
                mask = refit_mask;
                count = refit_count;
            }
        }
    }
    if count < cfg.min_inliers {
        return Err(MatchError::NoConsensus {
            inliers: count,
            required: cfg.min_inliers,
        });
    }
    let inliers: Vec<Match> = m.iter().zip(&mask).filter(|(_, k)| **k).map(|(x, _)| *x).collect();
    Ok(RansacFit {
        model,
        kind: cfg.model,
        inliers: MatchSet::new(inliers),
        iterations,
    })
}
