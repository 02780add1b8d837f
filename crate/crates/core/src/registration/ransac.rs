//! Robust similarity estimation from point correspondences.
//!
//! A similarity acts on points written as complex numbers as `w = a z + t`,
//! so two correspondences determine it and the least-squares fit over many
//! has a closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Point2, Similarity2D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacParams {
    pub iterations: usize,
    /// Maximum reprojection distance of an inlier, px.
    pub inlier_tol: f64,
    pub seed: u64,
    /// Hypotheses with a scale outside `[lo, hi]` are discarded.
    pub scale_range: Option<(f64, f64)>,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_tol: 3.0,
            seed: 0x5EED_0A01,
            scale_range: Some((0.5, 2.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityFit {
    pub transform: Similarity2D,
    pub inliers: Vec<bool>,
    /// RMS reprojection error over the inliers, px.
    pub rms: f64,
}

impl SimilarityFit {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Closed-form least-squares similarity mapping `src` onto `dst`, using the
/// pairs where `mask` is set. `None` when the selected sources coincide.
pub fn fit_similarity_lsq(pairs: &[(Point2, Point2)], mask: Option<&[bool]>) -> Option<Similarity2D> {
    let selected = || {
        pairs
            .iter()
            .enumerate()
            .filter(move |(i, _)| mask.is_none_or(|m| m[*i]))
            .map(|(_, p)| p)
    };
    let n = selected().count();
    if n < 2 {
        return None;
    }
    let (mut zx, mut zy, mut wx, mut wy) = (0.0, 0.0, 0.0, 0.0);
    for (z, w) in selected() {
        zx += z.x;
        zy += z.y;
        wx += w.x;
        wy += w.y;
    }
    let nf = n as f64;
    let (zx, zy, wx, wy) = (zx / nf, zy / nf, wx / nf, wy / nf);
    let (mut re, mut im, mut den) = (0.0, 0.0, 0.0);
    for (z, w) in selected() {
        let (px, py) = (z.x - zx, z.y - zy);
        let (qx, qy) = (w.x - wx, w.y - wy);
        re += px * qx + py * qy;
        im += px * qy - py * qx;
        den += px * px + py * py;
    }
    similarity_from(re / den, im / den, zx, zy, wx, wy, den)
}

fn similarity_from(a: f64, b: f64, zx: f64, zy: f64, wx: f64, wy: f64, den: f64) -> Option<Similarity2D> {
    if !(den > 1e-12) {
        return None;
    }
    let scale = a.hypot(b);
    if !(scale > 0.0 && scale.is_finite()) {
        return None;
    }
    Some(Similarity2D {
        scale,
        angle: b.atan2(a),
        tx: wx - (a * zx - b * zy),
        ty: wy - (b * zx + a * zy),
    })
}

/// Exact similarity through two correspondences.
fn from_two(p: &(Point2, Point2), q: &(Point2, Point2)) -> Option<Similarity2D> {
    let (dzx, dzy) = (q.0.x - p.0.x, q.0.y - p.0.y);
    let (dwx, dwy) = (q.1.x - p.1.x, q.1.y - p.1.y);
    let den = dzx * dzx + dzy * dzy;
    let re = (dzx * dwx + dzy * dwy) / den;
    let im = (dzx * dwy - dzy * dwx) / den;
    similarity_from(re, im, p.0.x, p.0.y, p.1.x, p.1.y, den)
}

fn score(t: &Similarity2D, pairs: &[(Point2, Point2)], tol: f64) -> (usize, f64) {
    let mut count = 0;
    let mut resid = 0.0;
    for (z, w) in pairs {
        let d = t.apply(*z).distance(w);
        if d <= tol {
            count += 1;
            resid += d * d;
        }
    }
    (count, resid)
}

fn mask_for(t: &Similarity2D, pairs: &[(Point2, Point2)], tol: f64) -> Vec<bool> {
    pairs.iter().map(|(z, w)| t.apply(*z).distance(w) <= tol).collect()
}

/// RANSAC over minimal two-point samples followed by least-squares refits on
/// the consensus set. Maps the first point of each pair onto the second.
pub fn estimate_similarity(pairs: &[(Point2, Point2)], params: &RansacParams) -> Result<SimilarityFit> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "similarity needs at least 2 correspondences, got {}",
            pairs.len()
        )));
    }
    if !(params.inlier_tol > 0.0) {
        return Err(Error::InvalidArgument("inlier_tol must be > 0".into()));
    }
    let in_range = |t: &Similarity2D| params.scale_range.is_none_or(|(lo, hi)| t.scale >= lo && t.scale <= hi);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = pairs.len();
    // (inliers, residual, model)
    let mut best: Option<(usize, f64, Similarity2D)> = None;
    for _ in 0..params.iterations.max(1) {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let Some(t) = from_two(&pairs[i], &pairs[j]) else {
            continue;
        };
        if !in_range(&t) {
            continue;
        }
        let (count, resid) = score(&t, pairs, params.inlier_tol);
        let better = match &best {
            None => true,
            Some((bc, br, _)) => count > *bc || (count == *bc && resid < *br),
        };
        if better {
            best = Some((count, resid, t));
        }
    }
    let Some((_, _, mut model)) = best else {
        return Err(Error::InsufficientData(
            "every sampled correspondence pair was degenerate".into(),
        ));
    };

    let mut inliers = mask_for(&model, pairs, params.inlier_tol);
    for _ in 0..10 {
        let Some(refit) = fit_similarity_lsq(pairs, Some(&inliers)) else {
            break;
        };
        let next = mask_for(&refit, pairs, params.inlier_tol);
        let done = next == inliers;
        if next.iter().filter(|&&b| b).count() < 2 {
            break;
        }
        model = refit;
        inliers = next;
        if done {
            break;
        }
    }
    // one more fit so the model is exactly the least-squares one on `inliers`
    if let Some(t) = fit_similarity_lsq(pairs, Some(&inliers)) {
        model = t;
    }
    let (count, resid) = pairs
        .iter()
        .zip(&inliers)
        .filter(|(_, &m)| m)
        .fold((0, 0.0), |(c, r), ((z, w), _)| {
            let d = model.apply(*z).distance(w);
            (c + 1, r + d * d)
        });
    Ok(SimilarityFit {
        transform: model,
        inliers,
        rms: if count > 0 { (resid / count as f64).sqrt() } else { 0.0 },
    })
}
