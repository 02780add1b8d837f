//! Gaussian-weighted adaptive thresholding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BinaryImage, GrayImage, Raster};

/// Guard added to the threshold before the strict `src > T` comparison.
///
/// The separable weighted mean of a flat patch can land one ulp either side
/// of the patch value depending on summation order; the guard makes the
/// decision independent of that order.
pub const THRESHOLD_GUARD: f64 = 1e-9;

/// Normalized, symmetric 1-D Gaussian window.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel1D {
    ksize: usize,
    sigma: f64,
    weights: Vec<f64>,
}

impl GaussianKernel1D {
    pub fn ksize(&self) -> usize {
        self.ksize
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn radius(&self) -> usize {
        self.ksize / 2
    }
}

/// Builds a `ksize`-tap Gaussian window normalized to unit sum.
///
/// With `sigma = None` the width is derived from the aperture as
/// `0.3 * ((ksize - 1) / 2 - 1) + 0.8`.
pub fn gaussian_kernel(ksize: usize, sigma: Option<f64>) -> Result<GaussianKernel1D> {
    if ksize == 0 || ksize.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "gaussian ksize must be odd and >= 1, got {ksize}"
        )));
    }
    let sigma = match sigma {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::InvalidArgument(format!("gaussian sigma must be > 0, got {s}"))),
        None => 0.3 * ((ksize as f64 - 1.0) * 0.5 - 1.0) + 0.8,
    };
    let center = (ksize as f64 - 1.0) / 2.0;
    let mut weights: Vec<f64> = (0..ksize)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(GaussianKernel1D { ksize, sigma, weights })
}

/// Parameters of the local-mean binarization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdParams {
    /// Odd neighbourhood size, >= 3.
    pub blocksize: usize,
    /// Value written for foreground when rendering the mask to 8-bit.
    pub max_value: u8,
    /// Bias added to the local mean; positive values demand a brighter pixel.
    pub offset_c: f64,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            blocksize: 51,
            max_value: 255,
            offset_c: 10.0,
        }
    }
}

impl ThresholdParams {
    pub fn validate(&self) -> Result<()> {
        if self.blocksize < 3 || self.blocksize.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "threshold blocksize must be odd and >= 3, got {}",
                self.blocksize
            )));
        }
        if self.max_value == 0 {
            return Err(Error::InvalidArgument("max_value must be non-zero".into()));
        }
        Ok(())
    }

    pub fn render(&self, mask: &BinaryImage) -> GrayImage {
        mask.to_gray(self.max_value)
    }
}

/// Marks pixels brighter than their Gaussian-weighted neighbourhood mean plus
/// `offset_c`. Borders are replicated.
pub fn adaptive_threshold(src: &GrayImage, params: &ThresholdParams) -> Result<BinaryImage> {
    params.validate()?;
    let kernel = gaussian_kernel(params.blocksize, None)?;
    let mean = separable_mean(src, &kernel);
    let data = src
        .data()
        .iter()
        .zip(&mean)
        .map(|(&v, &m)| u8::from(v as f64 > m + params.offset_c + THRESHOLD_GUARD))
        .collect();
    BinaryImage::from_raw(src.width(), src.height(), data)
}

fn separable_mean(src: &GrayImage, kernel: &GaussianKernel1D) -> Vec<f64> {
    let (w, h) = (src.width(), src.height());
    let r = kernel.radius();
    let k = kernel.weights();
    let px = src.data();

    let mut horiz = vec![0.0f64; w * h];
    let mut padded = vec![0.0f64; w + 2 * r];
    for y in 0..h {
        let row = &px[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            let x = (i as isize - r as isize).clamp(0, w as isize - 1) as usize;
            *p = row[x] as f64;
        }
        let out = &mut horiz[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            *o = k.iter().zip(&padded[x..x + k.len()]).map(|(a, b)| a * b).sum();
        }
    }

    let mut mean = vec![0.0f64; w * h];
    for y in 0..h {
        let out = &mut mean[y * w..(y + 1) * w];
        for (t, &wt) in k.iter().enumerate() {
            let sy = (y as isize + t as isize - r as isize).clamp(0, h as isize - 1) as usize;
            let src_row = &horiz[sy * w..(sy + 1) * w];
            for (o, &s) in out.iter_mut().zip(src_row) {
                *o += wt * s;
            }
        }
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(blocksize: usize, offset_c: f64) -> ThresholdParams {
        ThresholdParams {
            blocksize,
            max_value: 255,
            offset_c,
        }
    }

    #[test]
    fn kernel_single_tap() {
        let k = gaussian_kernel(1, None).unwrap();
        assert_eq!(k.weights(), &[1.0]);
    }

    #[test]
    fn kernel_three_taps_auto_sigma() {
        let k = gaussian_kernel(3, None).unwrap();
        assert!((k.sigma() - 0.8).abs() < 1e-15);
        // exp(-1 / 1.28), normalized against 1 + 2e
        let e = 0.457_833_361_771_614_27_f64;
        let s = 1.0 + 2.0 * e;
        let expected = [e / s, 1.0 / s, e / s];
        for (a, b) in k.weights().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn kernel_rejects_even_or_zero() {
        assert!(gaussian_kernel(0, None).is_err());
        assert!(gaussian_kernel(4, None).is_err());
        assert!(gaussian_kernel(5, Some(-1.0)).is_err());
    }

    #[test]
    fn kernel_sums_to_one_and_is_symmetric() {
        for ksize in (1..=101).step_by(2) {
            let k = gaussian_kernel(ksize, None).unwrap();
            let s: f64 = k.weights().iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            let w = k.weights();
            for i in 0..ksize {
                assert_eq!(w[i], w[ksize - 1 - i]);
                assert!(w[i] > 0.0);
            }
        }
    }

    #[test]
    fn constant_image_is_background() {
        let src = GrayImage::from_raw(40, 30, vec![137; 1200]).unwrap();
        let out = adaptive_threshold(&src, &params(31, 0.0)).unwrap();
        assert_eq!(out.count_ones(), 0);
    }

    #[test]
    fn huge_offset_clears_everything() {
        let data: Vec<u8> = (0..64 * 64).map(|i| (i * 37 % 256) as u8).collect();
        let src = GrayImage::from_raw(64, 64, data).unwrap();
        let out = adaptive_threshold(&src, &params(5, 300.0)).unwrap();
        assert_eq!(out.count_ones(), 0);
    }

    #[test]
    fn even_blocksize_rejected() {
        let src = GrayImage::new(8, 8);
        assert!(adaptive_threshold(&src, &params(4, 0.0)).is_err());
        assert!(adaptive_threshold(&src, &params(1, 0.0)).is_err());
    }
}
