//! Scale- and rotation-tolerant blob features in the style of SURF.
//!
//! Detection uses box-filter approximations of the Hessian determinant over a
//! small scale pyramid built on an integral image. Each keypoint gets a
//! dominant orientation from Haar responses and a 64-d descriptor made of
//! Haar-response statistics on a rotated 4x4 grid of overlapping subregions.
//! Descriptor values are not intended to match any other implementation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GrayImage, Raster};

pub const DESCRIPTOR_LEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Gaussian-equivalent scale in pixels.
    pub scale: f64,
    /// Radians.
    pub orientation: f64,
    pub response: f64,
    /// Sign of the Hessian trace; bright blobs on dark ground are negative.
    pub laplacian_positive: bool,
}

/// Unit-norm 64-d feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor(pub [f32; DESCRIPTOR_LEN]);

impl Descriptor {
    pub fn distance_sq(&self, other: &Descriptor) -> f32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum()
    }

    pub fn norm(&self) -> f32 {
        self.0.iter().map(|v| v * v).sum::<f32>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    pub octaves: usize,
    /// Minimum Hessian-determinant response, intensities scaled to [0, 1].
    pub threshold: f64,
    pub max_keypoints: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            octaves: 3,
            threshold: 4e-4,
            max_keypoints: 1500,
        }
    }
}

/// Summed-area table over intensities scaled to [0, 1].
pub(crate) struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<f64>,
}

impl IntegralImage {
    pub(crate) fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        let px = img.data();
        for y in 0..h {
            let mut run = 0.0;
            for x in 0..w {
                run += px[y * w + x] as f64 / 255.0;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + run;
            }
        }
        Self {
            width: w,
            height: h,
            sums,
        }
    }

    /// Sum over rows `[row, row+rows)` and columns `[col, col+cols)`, clipped.
    #[inline]
    fn box_sum(&self, row: isize, col: isize, rows: isize, cols: isize) -> f64 {
        let r0 = row.clamp(0, self.height as isize) as usize;
        let c0 = col.clamp(0, self.width as isize) as usize;
        let r1 = (row + rows).clamp(0, self.height as isize) as usize;
        let c1 = (col + cols).clamp(0, self.width as isize) as usize;
        if r1 <= r0 || c1 <= c0 {
            return 0.0;
        }
        let s = self.width + 1;
        self.sums[r1 * s + c1] - self.sums[r0 * s + c1] - self.sums[r1 * s + c0] + self.sums[r0 * s + c0]
    }

    #[inline]
    fn haar_x(&self, row: isize, col: isize, size: isize) -> f64 {
        let h = size / 2;
        self.box_sum(row - h, col, size, h) - self.box_sum(row - h, col - h, size, h)
    }

    #[inline]
    fn haar_y(&self, row: isize, col: isize, size: isize) -> f64 {
        let h = size / 2;
        self.box_sum(row, col - h, h, size) - self.box_sum(row - h, col - h, h, size)
    }
}

struct ResponseLayer {
    width: usize,
    height: usize,
    step: usize,
    filter: usize,
    responses: Vec<f64>,
    laplacian: Vec<bool>,
}

impl ResponseLayer {
    fn build(ii: &IntegralImage, step: usize, filter: usize) -> Self {
        let width = ii.width / step;
        let height = ii.height / step;
        let mut responses = vec![0.0; width * height];
        let mut laplacian = vec![false; width * height];
        let b = (filter as isize - 1) / 2;
        let l = filter as isize / 3;
        let w = filter as isize;
        let inv_area = 1.0 / (w * w) as f64;
        for ar in 0..height {
            for ac in 0..width {
                let r = (ar * step) as isize;
                let c = (ac * step) as isize;
                let dxx =
                    ii.box_sum(r - l + 1, c - b, 2 * l - 1, w) - 3.0 * ii.box_sum(r - l + 1, c - l / 2, 2 * l - 1, l);
                let dyy =
                    ii.box_sum(r - b, c - l + 1, w, 2 * l - 1) - 3.0 * ii.box_sum(r - l / 2, c - l + 1, l, 2 * l - 1);
                let dxy = ii.box_sum(r - l, c + 1, l, l) + ii.box_sum(r + 1, c - l, l, l)
                    - ii.box_sum(r - l, c - l, l, l)
                    - ii.box_sum(r + 1, c + 1, l, l);
                let (dxx, dyy, dxy) = (dxx * inv_area, dyy * inv_area, dxy * inv_area);
                let i = ar * width + ac;
                responses[i] = dxx * dyy - 0.81 * dxy * dxy;
                laplacian[i] = dxx + dyy >= 0.0;
            }
        }
        Self {
            width,
            height,
            step,
            filter,
            responses,
            laplacian,
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.responses[r * self.width + c]
    }
}

/// Detects up to `params.max_keypoints` keypoints, strongest first, and
/// computes their descriptors.
pub fn detect_features(img: &GrayImage, params: &DetectorParams) -> Result<(Vec<Keypoint>, Vec<Descriptor>)> {
    if img.width() < 32 || img.height() < 32 {
        return Err(Error::InvalidArgument(format!(
            "feature detection needs at least 32x32 pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    if params.octaves == 0 {
        return Err(Error::InvalidArgument("octaves must be >= 1".into()));
    }
    let ii = IntegralImage::new(img);
    let mut candidates = Vec::new();
    for octave in 0..params.octaves {
        let step = 1usize << octave;
        if ii.width / step < 8 || ii.height / step < 8 {
            break;
        }
        let layers: Vec<ResponseLayer> = (1..=4)
            .map(|i| ResponseLayer::build(&ii, step, 3 * ((1 << (octave + 1)) * i + 1)))
            .collect();
        for mid in 1..=2 {
            find_extrema(
                &layers[mid - 1],
                &layers[mid],
                &layers[mid + 1],
                params.threshold,
                &mut candidates,
            );
        }
    }

    candidates.sort_by(|a: &Keypoint, b: &Keypoint| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });

    let mut keypoints = Vec::new();
    let mut descriptors = Vec::new();
    for mut kp in candidates {
        if keypoints.len() >= params.max_keypoints {
            break;
        }
        kp.orientation = orientation(&ii, &kp);
        if let Some(d) = describe(&ii, &kp) {
            keypoints.push(kp);
            descriptors.push(d);
        }
    }
    Ok((keypoints, descriptors))
}

fn find_extrema(
    bottom: &ResponseLayer,
    mid: &ResponseLayer,
    top: &ResponseLayer,
    threshold: f64,
    out: &mut Vec<Keypoint>,
) {
    let border = (top.filter + 1) / (2 * top.step) + 1;
    if mid.height <= 2 * border || mid.width <= 2 * border {
        return;
    }
    for r in border..mid.height - border {
        for c in border..mid.width - border {
            let v = mid.at(r, c);
            if v <= threshold {
                continue;
            }
            let mut is_max = true;
            // Ties go to the neighbour that comes first in (scale, row, col)
            // order so that plateaus still yield exactly one extremum.
            'scan: for (li, layer) in [bottom, mid, top].into_iter().enumerate() {
                for dr in [-1isize, 0, 1] {
                    for dc in [-1isize, 0, 1] {
                        if li == 1 && dr == 0 && dc == 0 {
                            continue;
                        }
                        let rr = (r as isize + dr) as usize;
                        let cc = (c as isize + dc) as usize;
                        let n = layer.at(rr, cc);
                        let earlier = (li, dr, dc) < (1, 0, 0);
                        if n > v || (n == v && earlier) {
                            is_max = false;
                            break 'scan;
                        }
                    }
                }
            }
            if !is_max {
                continue;
            }
            if let Some(kp) = interpolate(bottom, mid, top, r, c) {
                out.push(kp);
            }
        }
    }
}

/// Quadratic refinement of an extremum in (x, y, scale).
fn interpolate(b: &ResponseLayer, m: &ResponseLayer, t: &ResponseLayer, r: usize, c: usize) -> Option<Keypoint> {
    let dx = (m.at(r, c + 1) - m.at(r, c - 1)) / 2.0;
    let dy = (m.at(r + 1, c) - m.at(r - 1, c)) / 2.0;
    let ds = (t.at(r, c) - b.at(r, c)) / 2.0;
    let v = m.at(r, c);
    let dxx = m.at(r, c + 1) + m.at(r, c - 1) - 2.0 * v;
    let dyy = m.at(r + 1, c) + m.at(r - 1, c) - 2.0 * v;
    let dss = t.at(r, c) + b.at(r, c) - 2.0 * v;
    let dxy = (m.at(r + 1, c + 1) - m.at(r + 1, c - 1) - m.at(r - 1, c + 1) + m.at(r - 1, c - 1)) / 4.0;
    let dxs = (t.at(r, c + 1) - t.at(r, c - 1) - b.at(r, c + 1) + b.at(r, c - 1)) / 4.0;
    let dys = (t.at(r + 1, c) - t.at(r - 1, c) - b.at(r + 1, c) + b.at(r - 1, c)) / 4.0;
    let h = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
    let off = solve3(h, [-dx, -dy, -ds])?;
    if off.iter().any(|o| o.abs() >= 1.0) {
        return None;
    }
    let filter_step = (m.filter - b.filter) as f64;
    let step = m.step as f64;
    Some(Keypoint {
        x: (c as f64 + off[0]) * step,
        y: (r as f64 + off[1]) * step,
        scale: 0.1333 * (m.filter as f64 + off[2] * filter_step),
        orientation: 0.0,
        response: v,
        laplacian_positive: m.laplacian[r * m.width + c],
    })
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][k] = b[row];
        }
        *xk = det(&m) / d;
    }
    Some(x)
}

fn gaussian(x: f64, y: f64, sigma: f64) -> f64 {
    (-(x * x + y * y) / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma)
}

fn orientation(ii: &IntegralImage, kp: &Keypoint) -> f64 {
    let s = kp.scale;
    let haar = (4.0 * s).round().max(2.0) as isize;
    let mut samples = Vec::with_capacity(113);
    for i in -6isize..=6 {
        for j in -6isize..=6 {
            if i * i + j * j >= 36 {
                continue;
            }
            let px = (kp.x + i as f64 * s).round() as isize;
            let py = (kp.y + j as f64 * s).round() as isize;
            let g = gaussian(i as f64, j as f64, 2.5);
            let rx = g * ii.haar_x(py, px, haar);
            let ry = g * ii.haar_y(py, px, haar);
            if rx != 0.0 || ry != 0.0 {
                samples.push((ry.atan2(rx), rx, ry));
            }
        }
    }
    let tau = std::f64::consts::TAU;
    let window = std::f64::consts::FRAC_PI_3;
    let mut best = (0.0, 0.0, 0.0);
    let mut a = 0.0;
    while a < tau {
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(ang, rx, ry) in &samples {
            let mut d = ang - a;
            if d < 0.0 {
                d += tau;
            }
            if d < window {
                sx += rx;
                sy += ry;
            }
        }
        let mag = sx * sx + sy * sy;
        if mag > best.0 {
            best = (mag, sx, sy);
        }
        a += 0.15;
    }
    if best.0 == 0.0 {
        0.0
    } else {
        best.2.atan2(best.1)
    }
}

/// 4x4 grid of overlapping 9x9-sample subregions over a 24s window aligned
/// with the keypoint orientation.
fn describe(ii: &IntegralImage, kp: &Keypoint) -> Option<Descriptor> {
    let s = kp.scale;
    let (si, co) = kp.orientation.sin_cos();
    let haar = (2.0 * s).round().max(2.0) as isize;
    let mut desc = [0f32; DESCRIPTOR_LEN];
    let mut k = 0;
    for a in 0..4 {
        let cu = -7.5 + 5.0 * a as f64;
        for b in 0..4 {
            let cv = -7.5 + 5.0 * b as f64;
            let (mut du, mut dv, mut adu, mut adv) = (0.0, 0.0, 0.0, 0.0);
            for iu in -4..=4 {
                for iv in -4..=4 {
                    let u = cu + iu as f64;
                    let v = cv + iv as f64;
                    let px = (kp.x + s * (u * co - v * si)).round() as isize;
                    let py = (kp.y + s * (u * si + v * co)).round() as isize;
                    let g = gaussian(iu as f64, iv as f64, 2.5);
                    let rx = ii.haar_x(py, px, haar);
                    let ry = ii.haar_y(py, px, haar);
                    let ru = g * (rx * co + ry * si);
                    let rv = g * (-rx * si + ry * co);
                    du += ru;
                    dv += rv;
                    adu += ru.abs();
                    adv += rv.abs();
                }
            }
            let g2 = gaussian(a as f64 - 1.5, b as f64 - 1.5, 1.5);
            for val in [du, dv, adu, adv] {
                desc[k] = (val * g2) as f32;
                k += 1;
            }
        }
    }
    let norm = desc.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return None;
    }
    desc.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
    Some(Descriptor(desc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(w: usize, h: usize) -> GrayImage {
        let mut g = GrayImage::from_raw(w, h, vec![40; w * h]).unwrap();
        let centers = [
            (30.0, 40.0, 6.0),
            (90.0, 35.0, 9.0),
            (60.0, 90.0, 5.0),
            (100.0, 100.0, 12.0),
        ];
        for y in 0..h {
            for x in 0..w {
                for &(cx, cy, r) in &centers {
                    let d: f64 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                    if d <= r {
                        g.put(x, y, 220);
                    }
                }
            }
        }
        g
    }

    #[test]
    fn constant_image_has_no_features() {
        let g = GrayImage::from_raw(64, 64, vec![100; 64 * 64]).unwrap();
        let (k, d) = detect_features(&g, &DetectorParams::default()).unwrap();
        assert!(k.is_empty() && d.is_empty());
    }

    #[test]
    fn too_small_is_an_error() {
        let g = GrayImage::new(31, 40);
        assert!(detect_features(&g, &DetectorParams::default()).is_err());
    }

    #[test]
    fn blobs_are_found_with_unit_descriptors() {
        let g = blobs(140, 140);
        let (k, d) = detect_features(&g, &DetectorParams::default()).unwrap();
        assert!(k.len() >= 4, "{} keypoints", k.len());
        assert_eq!(k.len(), d.len());
        for w in k.windows(2) {
            assert!(w[0].response >= w[1].response);
        }
        for desc in &d {
            assert!((desc.norm() - 1.0).abs() < 1e-6);
        }
        // every planted blob center has a keypoint nearby
        for (cx, cy) in [(30.0, 40.0), (90.0, 35.0), (60.0, 90.0), (100.0, 100.0)] {
            assert!(
                k.iter().any(|p| (p.x - cx).hypot(p.y - cy) < 2.5),
                "no keypoint at ({cx},{cy})"
            );
        }
    }

    #[test]
    fn max_keypoints_respected() {
        let g = blobs(140, 140);
        let p = DetectorParams {
            max_keypoints: 2,
            ..Default::default()
        };
        assert!(detect_features(&g, &p).unwrap().0.len() <= 2);
    }
}
