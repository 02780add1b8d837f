//! Feature-based alignment of a test image onto its template.

mod features;
mod matching;
mod ransac;
mod warp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GrayImage, Point2, Raster, Similarity2D};

pub use features::{detect_features, Descriptor, DetectorParams, Keypoint, DESCRIPTOR_LEN};
pub use matching::{match_descriptors, MatchPair};
pub use ransac::{estimate_similarity, fit_similarity_lsq, RansacParams, SimilarityFit};
pub use warp::{centered_rotation, warp_image};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    pub detector: DetectorParams,
    pub match_ratio: f64,
    pub ransac: RansacParams,
    pub min_inliers: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            detector: DetectorParams::default(),
            match_ratio: 0.8,
            ransac: RansacParams::default(),
            min_inliers: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    /// Maps test coordinates onto template coordinates.
    pub transform: Similarity2D,
    pub matches: usize,
    pub inliers: usize,
    pub rms: f64,
}

/// Estimates the similarity taking `test` onto `template` without warping.
pub fn align(template: &GrayImage, test: &GrayImage, cfg: &RegistrationConfig) -> Result<Alignment> {
    let (kt, dt) = detect_features(template, &cfg.detector)?;
    let (ks, ds) = detect_features(test, &cfg.detector)?;
    let matches = match_descriptors(&ds, &dt, cfg.match_ratio)?;
    let pairs: Vec<(Point2, Point2)> = matches
        .iter()
        .map(|m| {
            let s = &ks[m.index_a];
            let t = &kt[m.index_b];
            (Point2::new(s.x, s.y), Point2::new(t.x, t.y))
        })
        .collect();
    if pairs.len() < cfg.min_inliers.max(2) {
        return Err(Error::RegistrationFailed {
            inliers: 0,
            required: cfg.min_inliers,
        });
    }
    let fit = estimate_similarity(&pairs, &cfg.ransac)?;
    let inliers = fit.inlier_count();
    if inliers < cfg.min_inliers {
        return Err(Error::RegistrationFailed {
            inliers,
            required: cfg.min_inliers,
        });
    }
    Ok(Alignment {
        transform: fit.transform,
        matches: pairs.len(),
        inliers,
        rms: fit.rms,
    })
}

/// Aligns `test` to `template` and resamples it onto the template grid.
/// Uncovered pixels take the median of the test image border.
pub fn register(template: &GrayImage, test: &GrayImage, cfg: &RegistrationConfig) -> Result<(GrayImage, Similarity2D)> {
    let a = align(template, test, cfg)?;
    let fill = border_median(test);
    let warped = warp_image(test, &a.transform, (template.width(), template.height()), &fill)?;
    Ok((warped, a.transform))
}

/// Per-channel median of the outermost pixel ring.
pub fn border_median<R: Raster>(img: &R) -> Vec<u8> {
    let (w, h, c) = (img.width(), img.height(), R::CHANNELS);
    let px = img.data();
    let mut hist = vec![[0u32; 256]; c];
    let mut n = 0u32;
    for y in 0..h {
        for x in 0..w {
            if y != 0 && y + 1 != h && x != 0 && x + 1 != w {
                continue;
            }
            for ch in 0..c {
                hist[ch][px[(y * w + x) * c + ch] as usize] += 1;
            }
            n += 1;
        }
    }
    hist.iter()
        .map(|hc| {
            let mut acc = 0;
            for (v, &k) in hc.iter().enumerate() {
                acc += k;
                if 2 * acc >= n {
                    return v as u8;
                }
            }
            0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn featureless_fails_cleanly() {
        let g = GrayImage::from_raw(64, 64, vec![90; 64 * 64]).unwrap();
        let err = register(&g, &g, &RegistrationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::RegistrationFailed { required: 10, .. }));
    }

    #[test]
    fn border_median_of_frame() {
        let mut g = GrayImage::from_raw(5, 5, vec![7; 25]).unwrap();
        g.put(2, 2, 200);
        g.put(0, 0, 1);
        assert_eq!(border_median(&g), vec![7]);
    }
}
