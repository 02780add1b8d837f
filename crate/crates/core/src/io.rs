//! PNG encode/decode for the raster types.

use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::types::{ColorImage, GrayImage, Raster};

fn codec(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Codec {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn encode(data: &[u8], w: usize, h: usize, kind: ExtendedColorType) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PngEncoder::new(&mut buf)
        .write_image(data, w as u32, h as u32, kind)
        .map_err(|e| codec(Path::new("<memory>"), e))?;
    Ok(buf)
}

pub fn encode_color_png(img: &ColorImage) -> Result<Vec<u8>> {
    encode(img.data(), img.width(), img.height(), ExtendedColorType::Rgb8)
}

pub fn encode_gray_png(img: &GrayImage) -> Result<Vec<u8>> {
    encode(img.data(), img.width(), img.height(), ExtendedColorType::L8)
}

pub fn write_color_png(path: impl AsRef<Path>, img: &ColorImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_color_png(img)?).map_err(|e| Error::io(path, e))
}

pub fn write_gray_png(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_gray_png(img)?).map_err(|e| Error::io(path, e))
}

/// Reads any PNG and converts it to 8-bit RGB.
pub fn read_color_png(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| codec(path, e))?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    ColorImage::from_raw(w, h, img.into_raw())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = ColorImage::from_raw(7, 3, (0..63).map(|v| (v * 4) as u8).collect()).unwrap();
        write_color_png(&p, &img).unwrap();
        assert_eq!(read_color_png(&p).unwrap(), img);
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_color_png("/nonexistent/x.png").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }
}
