use crate::error::{Error, Result};
use crate::types::{BinaryImage, Raster};

/// `ksize x ksize` median of a binary mask with replicated borders.
///
/// For {0,1} data the median is a majority vote, computed from a summed-area
/// table over the padded image.
pub fn median_filter(src: &BinaryImage, ksize: usize) -> Result<BinaryImage> {
    if ksize == 0 || ksize.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "median ksize must be odd and >= 1, got {ksize}"
        )));
    }
    if ksize == 1 {
        return Ok(src.clone());
    }
    let (w, h) = (src.width(), src.height());
    let r = ksize / 2;
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    // sat[(y)*(pw+1) + x] = sum of padded[0..y, 0..x]
    let stride = pw + 1;
    let mut sat = vec![0u32; stride * (ph + 1)];
    let px = src.data();
    for py in 0..ph {
        let sy = (py as isize - r as isize).clamp(0, h as isize - 1) as usize;
        let mut run = 0u32;
        for pxi in 0..pw {
            let sx = (pxi as isize - r as isize).clamp(0, w as isize - 1) as usize;
            run += px[sy * w + sx] as u32;
            sat[(py + 1) * stride + pxi + 1] = sat[py * stride + pxi + 1] + run;
        }
    }
    let majority = (ksize * ksize / 2 + 1) as u32;
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let top = y * stride;
        let bot = (y + ksize) * stride;
        for x in 0..w {
            let s = sat[bot + x + ksize] + sat[top + x] - sat[top + x + ksize] - sat[bot + x];
            out[y * w + x] = u8::from(s >= majority);
        }
    }
    BinaryImage::from_raw(w, h, out)
}
