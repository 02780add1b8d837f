use crate::error::{Error, Result};
use crate::types::{BoundingBox, Raster};

/// Extracts `box` grown by `pad` on every side, clamped to the image.
pub fn crop<R: Raster>(img: &R, bbox: &BoundingBox, pad: u32) -> Result<R> {
    let (w, h) = (img.width(), img.height());
    let g = bbox.expand_clamped(pad, w, h);
    if g.xmin >= g.xmax || g.ymin >= g.ymax {
        return Err(Error::InvalidArgument(format!(
            "crop box {bbox:?} does not intersect the {w}x{h} image"
        )));
    }
    let c = R::CHANNELS;
    let (x0, x1) = (g.xmin as usize, g.xmax as usize);
    let mut data = Vec::with_capacity((x1 - x0) * g.height() as usize * c);
    for y in g.ymin as usize..g.ymax as usize {
        data.extend_from_slice(&img.data()[(y * w + x0) * c..(y * w + x1) * c]);
    }
    R::from_raw(x1 - x0, g.height() as usize, data)
}

/// Bilinear resampling with pixel centers at half-integer positions.
///
/// Binary masks are resampled the same way and rounded back to {0, 1}.
pub fn resize_bilinear<R: Raster>(img: &R, out_w: usize, out_h: usize) -> Result<R> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be at least 1x1, got {out_w}x{out_h}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    if (w, h) == (out_w, out_h) {
        return Ok(img.clone());
    }
    let c = R::CHANNELS;
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = taps(out_w, w);
    let ys = taps(out_h, h);
    let src = img.data();
    let max = R::MAX as f64;
    let mut data = Vec::with_capacity(out_w * out_h * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p = |x: usize, y: usize| src[(y * w + x) * c + ch] as f64;
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bot = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                let v = top * (1.0 - fy) + bot * fy;
                data.push(v.round().clamp(0.0, max) as u8);
            }
        }
    }
    R::from_raw(out_w, out_h, data)
}
