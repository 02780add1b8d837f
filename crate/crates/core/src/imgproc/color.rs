use crate::types::{ColorImage, GrayImage, Raster};

/// ITU-R BT.601 luma, rounded to nearest.
pub fn to_grayscale(img: &ColorImage) -> GrayImage {
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| {
            let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::from_raw(img.width(), img.height(), data).expect("same dimensions")
}

pub fn gray_to_color(img: &GrayImage) -> ColorImage {
    let data = img.data().iter().flat_map(|&v| [v, v, v]).collect();
    ColorImage::from_raw(img.width(), img.height(), data).expect("same dimensions")
}
