//! Binary erosion, dilation, opening and closing.
//!
//! Only in-image pixels take part: a structuring-element cell that falls
//! outside the raster neither blocks an erosion nor feeds a dilation. Under
//! this convention erosion and dilation are exact duals under complement,
//! opening is anti-extensive, closing is extensive and both are idempotent on
//! finite rasters.
//!
//! Both operators are evaluated per element row: every row of the mask is a
//! set of horizontal runs, and a run test is a constant-time lookup in the
//! row prefix sums of the source.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BinaryImage, Raster};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementShape {
    Rectangle,
    Ellipse,
}

/// Odd-sized structuring element anchored at its center cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructElem {
    shape: ElementShape,
    mask: BinaryImage,
    /// Horizontal runs as `(dy, dx_lo, dx_hi)` offsets from the center.
    runs: Vec<(isize, isize, isize)>,
}

impl StructElem {
    pub fn new(shape: ElementShape, width: usize, height: usize) -> Result<Self> {
        if width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "structuring element must have odd sides, got {width}x{height}"
            )));
        }
        let mut mask = BinaryImage::new(width, height);
        match shape {
            ElementShape::Rectangle => mask.data_mut().fill(1),
            ElementShape::Ellipse => {
                // Cell (i, j) is set iff its center lies inside the ellipse
                // with semi-axes (w-1)/2 and (h-1)/2.
                let a = (width as f64 - 1.0) / 2.0;
                let b = (height as f64 - 1.0) / 2.0;
                for j in 0..height {
                    for i in 0..width {
                        let dx = i as f64 - a;
                        let dy = j as f64 - b;
                        let nx = if a > 0.0 { dx / a } else { 0.0 };
                        let ny = if b > 0.0 { dy / b } else { 0.0 };
                        mask.put(i, j, nx * nx + ny * ny <= 1.0);
                    }
                }
            }
        }
        Ok(Self::from_parts(shape, mask))
    }

    pub fn rect(width: usize, height: usize) -> Result<Self> {
        Self::new(ElementShape::Rectangle, width, height)
    }

    pub fn ellipse(width: usize, height: usize) -> Result<Self> {
        Self::new(ElementShape::Ellipse, width, height)
    }

    fn from_parts(shape: ElementShape, mask: BinaryImage) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let (cx, cy) = ((w / 2) as isize, (h / 2) as isize);
        let mut runs = Vec::new();
        for j in 0..h {
            let mut i = 0;
            while i < w {
                if mask.get(i, j) {
                    let lo = i;
                    while i < w && mask.get(i, j) {
                        i += 1;
                    }
                    runs.push((j as isize - cy, lo as isize - cx, i as isize - 1 - cx));
                } else {
                    i += 1;
                }
            }
        }
        Self { shape, mask, runs }
    }

    pub fn shape(&self) -> ElementShape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn mask(&self) -> &BinaryImage {
        &self.mask
    }

    /// Point reflection through the center.
    pub fn reflect(&self) -> StructElem {
        let (w, h) = (self.width(), self.height());
        let mut m = BinaryImage::new(w, h);
        for j in 0..h {
            for i in 0..w {
                m.put(w - 1 - i, h - 1 - j, self.mask.get(i, j));
            }
        }
        Self::from_parts(self.shape, m)
    }

    /// Offsets `(dx, dy)` of every set cell relative to the center.
    pub fn offsets(&self) -> impl Iterator<Item = (isize, isize)> + '_ {
        self.runs
            .iter()
            .flat_map(|&(dy, lo, hi)| (lo..=hi).map(move |dx| (dx, dy)))
    }
}

struct RowPrefix {
    width: usize,
    /// `sums[y * (w + 1) + x]` = ones in row y over columns `[0, x)`.
    sums: Vec<u32>,
}

impl RowPrefix {
    fn new(a: &BinaryImage) -> Self {
        let w = a.width();
        let mut sums = vec![0u32; (w + 1) * a.height()];
        for (row, out) in a.data().chunks_exact(w).zip(sums.chunks_exact_mut(w + 1)) {
            let mut acc = 0;
            for (x, &v) in row.iter().enumerate() {
                acc += v as u32;
                out[x + 1] = acc;
            }
        }
        Self { width: w, sums }
    }

    /// Ones in row `y` over the columns `[lo, hi]` clipped to the image, and
    /// the number of in-image columns in that range.
    #[inline]
    fn count(&self, y: usize, lo: isize, hi: isize) -> (u32, u32) {
        let lo = lo.max(0);
        let hi = hi.min(self.width as isize - 1);
        if lo > hi {
            return (0, 0);
        }
        let base = y * (self.width + 1);
        (
            self.sums[base + hi as usize + 1] - self.sums[base + lo as usize],
            (hi - lo + 1) as u32,
        )
    }
}

/// `{z | B_z ⊆ A}`, with out-of-image cells of `B_z` ignored.
pub fn erode(a: &BinaryImage, e: &StructElem) -> BinaryImage {
    let (w, h) = (a.width(), a.height());
    let pre = RowPrefix::new(a);
    let mut out = vec![1u8; w * h];
    for y in 0..h {
        let row = &mut out[y * w..(y + 1) * w];
        for &(dy, lo, hi) in &e.runs {
            let sy = y as isize + dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for (x, o) in row.iter_mut().enumerate() {
                if *o == 0 {
                    continue;
                }
                let (ones, len) = pre.count(sy as usize, x as isize + lo, x as isize + hi);
                if ones != len {
                    *o = 0;
                }
            }
        }
    }
    BinaryImage::from_raw(w, h, out).expect("same dimensions")
}

/// `{z | (B̄)_z ∩ A ≠ ∅}` where `B̄` is the reflection of `B`.
pub fn dilate(a: &BinaryImage, e: &StructElem) -> BinaryImage {
    let (w, h) = (a.width(), a.height());
    let pre = RowPrefix::new(a);
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let row = &mut out[y * w..(y + 1) * w];
        for &(dy, lo, hi) in &e.runs {
            // z - b ∈ A for b = (dx, dy) in the run
            let sy = y as isize - dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for (x, o) in row.iter_mut().enumerate() {
                if *o == 1 {
                    continue;
                }
                let (ones, _) = pre.count(sy as usize, x as isize - hi, x as isize - lo);
                if ones > 0 {
                    *o = 1;
                }
            }
        }
    }
    BinaryImage::from_raw(w, h, out).expect("same dimensions")
}

/// Erosion followed by dilation.
pub fn open(a: &BinaryImage, e: &StructElem) -> BinaryImage {
    dilate(&erode(a, e), e)
}

/// Dilation followed by erosion.
pub fn close(a: &BinaryImage, e: &StructElem) -> BinaryImage {
    erode(&dilate(a, e), e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(w: usize, h: usize, x0: usize, y0: usize, bw: usize, bh: usize) -> BinaryImage {
        let mut a = BinaryImage::new(w, h);
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                a.put(x, y, true);
            }
        }
        a
    }

    #[test]
    fn ellipse_masks() {
        let e = StructElem::ellipse(5, 5).unwrap();
        #[rustfmt::skip]
        let expected = [
            0, 0, 1, 0, 0,
            0, 1, 1, 1, 0,
            1, 1, 1, 1, 1,
            0, 1, 1, 1, 0,
            0, 0, 1, 0, 0,
        ];
        assert_eq!(e.mask().data(), &expected);
        let big = StructElem::ellipse(29, 29).unwrap();
        assert!(big.mask().get(14, 14));
        assert!(big.mask().get(0, 14) && big.mask().get(14, 0));
        assert!(!big.mask().get(0, 0));
        assert!(StructElem::ellipse(4, 5).is_err());
    }

    #[test]
    fn unit_element_is_identity() {
        let a = block(7, 7, 2, 1, 3, 4);
        let e = StructElem::rect(1, 1).unwrap();
        assert_eq!(erode(&a, &e), a);
        assert_eq!(dilate(&a, &e), a);
    }

    #[test]
    fn erode_block_to_center() {
        let a = block(9, 9, 3, 3, 3, 3);
        let out = erode(&a, &StructElem::rect(3, 3).unwrap());
        assert_eq!(out.count_ones(), 1);
        assert!(out.get(4, 4));
    }

    #[test]
    fn dilate_point_to_block() {
        let a = block(9, 9, 4, 4, 1, 1);
        assert_eq!(dilate(&a, &StructElem::rect(3, 3).unwrap()), block(9, 9, 3, 3, 3, 3));
    }

    #[test]
    fn empty_stays_empty() {
        let a = BinaryImage::new(10, 8);
        let e = StructElem::ellipse(5, 3).unwrap();
        assert_eq!(erode(&a, &e).count_ones(), 0);
        assert_eq!(dilate(&a, &e).count_ones(), 0);
    }

    #[test]
    fn opening_removes_isolated_pixel() {
        let a = block(9, 9, 4, 4, 1, 1);
        assert_eq!(open(&a, &StructElem::rect(3, 3).unwrap()).count_ones(), 0);
    }

    #[test]
    fn closing_fills_line_gap() {
        let mut a = block(11, 7, 1, 3, 9, 1);
        a.put(5, 3, false);
        let c = close(&a, &StructElem::rect(3, 3).unwrap());
        assert!(c.get(5, 3));
        assert!(a.is_subset_of(&c));
    }

    #[test]
    fn reflect_asymmetric_mask() {
        let mut m = BinaryImage::new(3, 3);
        m.put(2, 0, true);
        m.put(1, 1, true);
        let e = StructElem::from_parts(ElementShape::Rectangle, m);
        let r = e.reflect();
        assert!(r.mask().get(0, 2) && r.mask().get(1, 1));
        assert_eq!(r.mask().count_ones(), 2);
        assert_eq!(r.reflect(), e);
    }
}
