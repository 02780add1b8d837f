//! Synthetic bare-board generator with the six defect classes.

mod annotation;
mod dataset;
mod defects;
mod layout;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::registration::{centered_rotation, warp_image};
use crate::types::{ColorImage, Raster};

pub use annotation::{annotation_from_xml, annotation_to_xml, read_annotation, write_annotation};
pub use dataset::{
    board_filename, generate_board, read_dataset, template_filename, template_layouts, write_dataset, BoardEntry,
    DatasetManifest, DatasetSpec, GeneratedBoard,
};
pub use defects::{diff_box, inject_defects, plan_defects, Anchor, DefectParams, DefectSpec, PlacedDefect, Shape};
pub use layout::{
    gen_layout, gen_template, render, segment_rect, BoardConfig, BoardLayout, IPoint, Pad, Palette, Rect, Trace,
};

/// Mixes a master seed with two stream identifiers (splitmix64 finalizer).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rotates by `angle_deg` about the pixel-grid center; uncovered pixels take
/// `fill`.
pub fn rotate_sample(img: &ColorImage, angle_deg: f64, fill: [u8; 3]) -> ColorImage {
    let t = centered_rotation(img.width(), img.height(), angle_deg);
    warp_image(img, &t, (img.width(), img.height()), &fill).expect("rotation has unit scale and 3-channel fill")
}

/// Photometric disturbance for robustness runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Nuisance {
    /// Peak relative brightness change of a linear illumination ramp.
    pub gradient: f64,
    /// Standard deviation of additive Gaussian noise, gray levels.
    pub noise_sigma: f64,
}

impl Default for Nuisance {
    fn default() -> Self {
        Self {
            gradient: 0.15,
            noise_sigma: 5.0,
        }
    }
}

/// Applies a random-direction illumination ramp and additive noise in place.
pub fn apply_nuisance(img: &mut ColorImage, n: &Nuisance, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = theta.sin_cos();
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let reach = cx.hypot(cy).max(1.0);
    let noise = (n.noise_sigma > 0.0).then(|| Normal::new(0.0, n.noise_sigma).expect("sigma > 0"));
    for y in 0..h {
        for x in 0..w {
            let proj = ((x as f64 - cx) * dx + (y as f64 - cy) * dy) / reach;
            let gain = 1.0 + n.gradient * proj;
            let mut px = img.get(x, y);
            for v in &mut px {
                let e = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                *v = (*v as f64 * gain + e).round().clamp(0.0, 255.0) as u8;
            }
            img.put(x, y, px);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn board() -> ColorImage {
        gen_template(5, &BoardConfig::default()).unwrap().0
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = board();
        assert_eq!(rotate_sample(&img, 0.0, [0, 0, 0]), img);
    }

    #[test]
    fn full_turn_within_one_level() {
        let img = board();
        let out = rotate_sample(&img, 360.0, [0, 0, 0]);
        let worst = img
            .data()
            .iter()
            .zip(out.data())
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap();
        assert!(worst <= 1, "{worst}");
    }

    #[test]
    fn quarter_turn_permutes() {
        let img = board();
        let n = img.width();
        let out = rotate_sample(&img, 90.0, [0, 0, 0]);
        for y in (0..n).step_by(7) {
            for x in (0..n).step_by(5) {
                assert_eq!(out.get(n - 1 - y, x), img.get(x, y));
            }
        }
    }

    #[test]
    fn seeds_are_distinct() {
        let a = derive_seed(1, 2, 3);
        assert_ne!(a, derive_seed(1, 3, 2));
        assert_ne!(a, derive_seed(2, 2, 3));
        assert_eq!(a, derive_seed(1, 2, 3));
    }

    #[test]
    fn nuisance_is_deterministic() {
        let mut a = board();
        let mut b = a.clone();
        apply_nuisance(&mut a, &Nuisance::default(), 4);
        apply_nuisance(&mut b, &Nuisance::default(), 4);
        assert_eq!(a, b);
        assert_ne!(a, board());
    }
}
