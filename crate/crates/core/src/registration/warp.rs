use crate::error::{Error, Result};
use crate::types::{Point2, Raster, Similarity2D};

/// Slack allowed when deciding whether an inverse-mapped sample lies inside
/// the source grid; absorbs trigonometric round-off at exact quarter turns.
const EDGE_SLACK: f64 = 1e-6;

/// Resamples `img` so that output pixel `p` takes the bilinear sample at
/// `t⁻¹(p)`. Samples falling outside the source grid take `fill`.
pub fn warp_image<R: Raster>(img: &R, t: &Similarity2D, out_size: (usize, usize), fill: &[u8]) -> Result<R> {
    if !(t.scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "warp scale must be > 0, got {}",
            t.scale
        )));
    }
    let c = R::CHANNELS;
    if fill.len() != c {
        return Err(Error::InvalidArgument(format!(
            "fill has {} channels, image has {c}",
            fill.len()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let (ow, oh) = out_size;
    let inv = t.inverse();
    let (a, b) = inv.linear();
    let src = img.data();
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    let mut data = Vec::with_capacity(ow * oh * c);
    for y in 0..oh {
        for x in 0..ow {
            let (px, py) = (x as f64, y as f64);
            let sx = a * px - b * py + inv.tx;
            let sy = b * px + a * py + inv.ty;
            if sx < -EDGE_SLACK || sy < -EDGE_SLACK || sx > max_x + EDGE_SLACK || sy > max_y + EDGE_SLACK {
                data.extend_from_slice(fill);
                continue;
            }
            let sx = sx.clamp(0.0, max_x);
            let sy = sy.clamp(0.0, max_y);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            for ch in 0..c {
                let p = |xx: usize, yy: usize| src[(yy * w + xx) * c + ch] as f64;
                let top = p(x0, y0) + (p(x1, y0) - p(x0, y0)) * fx;
                let bot = p(x0, y1) + (p(x1, y1) - p(x0, y1)) * fx;
                let v = top + (bot - top) * fy;
                data.push(v.round().clamp(0.0, R::MAX as f64) as u8);
            }
        }
    }
    R::from_raw(ow, oh, data)
}

/// Rotation by `angle_deg` about the pixel-grid center of a `w x h` raster.
pub fn centered_rotation(w: usize, h: usize, angle_deg: f64) -> Similarity2D {
    let center = Point2::new((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    Similarity2D::rotation_about(center, angle_deg.to_radians())
}
