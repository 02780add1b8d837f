use crate::error::{Error, Result};
use crate::types::{BinaryImage, Raster};

/// Pixelwise difference mask: 1 exactly where the two inputs disagree.
pub fn xor_diff(a: &BinaryImage, b: &BinaryImage) -> Result<BinaryImage> {
    if !a.same_size(b) {
        return Err(Error::DimensionMismatch(format!(
            "xor_diff: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| p ^ q).collect();
    BinaryImage::from_raw(a.width(), a.height(), data)
}
