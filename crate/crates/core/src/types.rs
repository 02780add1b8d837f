//! Shared value types: rasters, boxes, defect classes, annotations and the
//! 4-DOF similarity transform used for registration.
//!
//! Coordinates follow raster indexing: origin at the top-left pixel, x to the
//! right, y downward. Boxes are half-open, so `width = xmax - xmin`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Common surface of the three raster kinds.
///
/// Data is row-major and interleaved; `MAX` is the largest legal sample value
/// (255 for 8-bit rasters, 1 for binary masks).
pub trait Raster: Sized + Clone {
    const CHANNELS: usize;
    const MAX: u8;

    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn data(&self) -> &[u8];
    fn data_mut(&mut self) -> &mut [u8];
    fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self>;

    fn filled(width: usize, height: usize, value: &[u8]) -> Result<Self> {
        if value.len() != Self::CHANNELS {
            return Err(Error::InvalidArgument(format!(
                "fill value has {} channels, raster has {}",
                value.len(),
                Self::CHANNELS
            )));
        }
        let mut data = Vec::with_capacity(width * height * Self::CHANNELS);
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Self::from_raw(width, height, data)
    }

    fn same_size<R: Raster>(&self, other: &R) -> bool {
        self.width() == other.width() && self.height() == other.height()
    }
}

macro_rules! raster_type {
    ($(#[$meta:meta])* $name:ident, $channels:expr, $max:expr) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq)]
        pub struct $name {
            width: usize,
            height: usize,
            data: Vec<u8>,
        }

        impl $name {
            pub fn new(width: usize, height: usize) -> Self {
                assert!(width >= 1 && height >= 1, "raster dimensions must be >= 1");
                Self {
                    width,
                    height,
                    data: vec![0; width * height * $channels],
                }
            }

            pub fn into_raw(self) -> Vec<u8> {
                self.data
            }

            #[inline]
            pub fn index(&self, x: usize, y: usize) -> usize {
                (y * self.width + x) * $channels
            }
        }

        impl Raster for $name {
            const CHANNELS: usize = $channels;
            const MAX: u8 = $max;

            #[inline]
            fn width(&self) -> usize {
                self.width
            }
            #[inline]
            fn height(&self) -> usize {
                self.height
            }
            #[inline]
            fn data(&self) -> &[u8] {
                &self.data
            }
            #[inline]
            fn data_mut(&mut self) -> &mut [u8] {
                &mut self.data
            }

            fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
                if width == 0 || height == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "{} must be at least 1x1, got {width}x{height}",
                        stringify!($name)
                    )));
                }
                if data.len() != width * height * $channels {
                    return Err(Error::DimensionMismatch(format!(
                        "{}: {} samples for {width}x{height}x{}",
                        stringify!($name),
                        data.len(),
                        $channels
                    )));
                }
                if data.iter().any(|&v| v > <Self as Raster>::MAX) {
                    return Err(Error::InvalidArgument(format!(
                        "{} samples must be <= {}",
                        stringify!($name),
                        $max
                    )));
                }
                Ok(Self { width, height, data })
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.debug_struct(stringify!($name))
                    .field("width", &self.width)
                    .field("height", &self.height)
                    .finish_non_exhaustive()
            }
        }
    };
}

raster_type!(
    /// 8-bit RGB raster.
    ColorImage,
    3,
    255
);
raster_type!(
    /// 8-bit single-channel raster.
    GrayImage,
    1,
    255
);
raster_type!(
    /// Foreground mask with samples in {0, 1}.
    BinaryImage,
    1,
    1
);

impl ColorImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = self.index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

impl GrayImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }
}

impl BinaryImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn complement(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// True when every foreground pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryImage) -> bool {
        self.same_size(other) && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    /// Renders to 8-bit with foreground at `max_value`.
    pub fn to_gray(&self, max_value: u8) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v * max_value).collect(),
        }
    }
}

/// Sub-pixel point in image coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned box, inclusive min and exclusive max.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoundingBox {
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

#[derive(Deserialize)]
struct RawBox {
    xmin: u32,
    ymin: u32,
    xmax: u32,
    ymax: u32,
}

impl TryFrom<RawBox> for BoundingBox {
    type Error = Error;

    fn try_from(r: RawBox) -> Result<Self> {
        BoundingBox::new(r.xmin, r.ymin, r.xmax, r.ymax)
    }
}

impl BoundingBox {
    pub fn new(xmin: u32, ymin: u32, xmax: u32, ymax: u32) -> Result<Self> {
        if xmin >= xmax || ymin >= ymax {
            return Err(Error::InvalidArgument(format!(
                "degenerate box ({xmin},{ymin},{xmax},{ymax})"
            )));
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    pub fn width(&self) -> u32 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> u32 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let xmin = self.xmin.max(other.xmin);
        let ymin = self.ymin.max(other.ymin);
        let xmax = self.xmax.min(other.xmax);
        let ymax = self.ymax.min(other.ymax);
        (xmin < xmax && ymin < ymax).then_some(BoundingBox { xmin, ymin, xmax, ymax })
    }

    /// Intersection over union; 0 for disjoint boxes.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection(other).map_or(0, |b| b.area());
        if inter == 0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            xmin: self.xmin.min(other.xmin),
            ymin: self.ymin.min(other.ymin),
            xmax: self.xmax.max(other.xmax),
            ymax: self.ymax.max(other.ymax),
        }
    }

    /// Grows the box by `pad` on every side, clamped to `[0,width)x[0,height)`.
    pub fn expand_clamped(&self, pad: u32, width: usize, height: usize) -> BoundingBox {
        BoundingBox {
            xmin: self.xmin.saturating_sub(pad),
            ymin: self.ymin.saturating_sub(pad),
            xmax: (self.xmax + pad).min(width as u32),
            ymax: (self.ymax + pad).min(height as u32),
        }
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.xmax as usize <= width && self.ymax as usize <= height
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.xmin <= other.xmin && self.ymin <= other.ymin && self.xmax >= other.xmax && self.ymax >= other.ymax
    }
}

/// The six bare-board defect categories, in their stable ordinal order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectClass {
    MissingHole,
    MouseBite,
    OpenCircuit,
    Short,
    Spur,
    SpuriousCopper,
}

impl DefectClass {
    pub const ALL: [DefectClass; 6] = [
        DefectClass::MissingHole,
        DefectClass::MouseBite,
        DefectClass::OpenCircuit,
        DefectClass::Short,
        DefectClass::Spur,
        DefectClass::SpuriousCopper,
    ];

    pub const COUNT: usize = 6;

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Lowercase name used inside annotation files, e.g. `missing_hole`.
    pub fn name(self) -> &'static str {
        match self {
            DefectClass::MissingHole => "missing_hole",
            DefectClass::MouseBite => "mouse_bite",
            DefectClass::OpenCircuit => "open_circuit",
            DefectClass::Short => "short",
            DefectClass::Spur => "spur",
            DefectClass::SpuriousCopper => "spurious_copper",
        }
    }

    /// Capitalised directory name used in the dataset tree, e.g. `Missing_hole`.
    pub fn folder_name(self) -> &'static str {
        match self {
            DefectClass::MissingHole => "Missing_hole",
            DefectClass::MouseBite => "Mouse_bite",
            DefectClass::OpenCircuit => "Open_circuit",
            DefectClass::Short => "Short",
            DefectClass::Spur => "Spur",
            DefectClass::SpuriousCopper => "Spurious_copper",
        }
    }

    /// Human-readable label for report tables.
    pub fn title(self) -> &'static str {
        match self {
            DefectClass::MissingHole => "Missing hole",
            DefectClass::MouseBite => "Mouse bite",
            DefectClass::OpenCircuit => "Open circuit",
            DefectClass::Short => "Short",
            DefectClass::Spur => "Spur",
            DefectClass::SpuriousCopper => "Spurious copper",
        }
    }
}

impl fmt::Display for DefectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DefectClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DefectClass::ALL
            .into_iter()
            .find(|c| c.name() == s || c.folder_name() == s)
            .ok_or_else(|| Error::parse("name", format!("unknown defect class `{s}`")))
    }
}

/// A located (and possibly classified) defect candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub class: Option<DefectClass>,
    /// Ranking score; the localizer uses the component pixel area.
    pub score: f64,
    /// Class probabilities in `DefectClass` order, when classified.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probabilities: Option<[f32; 6]>,
}

impl Detection {
    pub fn unclassified(bbox: BoundingBox, score: f64) -> Self {
        Self {
            bbox,
            class: None,
            score,
            probabilities: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub class: DefectClass,
    pub bbox: BoundingBox,
}

/// Ground truth for one board image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub filename: String,
    pub width: u32,
    pub height: u32,
    pub depth: u32,
    pub objects: Vec<AnnotatedObject>,
}

impl Annotation {
    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            if !o.bbox.fits_within(self.width as usize, self.height as usize) {
                return Err(Error::parse(
                    format!("object[{i}].bndbox"),
                    format!("box {:?} exceeds image {}x{}", o.bbox, self.width, self.height),
                ));
            }
        }
        Ok(())
    }
}

/// Rotation + isotropic scale + translation: `p -> scale * R(angle) * p + t`.
///
/// `R(angle)` is the standard matrix `[[cos, -sin], [sin, cos]]`. With y
/// pointing down, a positive angle turns the image visually clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Similarity2D {
    pub scale: f64,
    /// Radians.
    pub angle: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Similarity2D {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Similarity2D {
    pub const IDENTITY: Similarity2D = Similarity2D {
        scale: 1.0,
        angle: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(scale: f64, angle: f64, tx: f64, ty: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "similarity scale must be > 0, got {scale}"
            )));
        }
        Ok(Self { scale, angle, tx, ty })
    }

    /// Pure rotation by `angle` radians about `center`.
    pub fn rotation_about(center: Point2, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            scale: 1.0,
            angle,
            tx: center.x - (c * center.x - s * center.y),
            ty: center.y - (s * center.x + c * center.y),
        }
    }

    /// Linear part as `(a, b)` where the matrix is `[[a, -b], [b, a]]`.
    #[inline]
    pub fn linear(&self) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        (self.scale * c, self.scale * s)
    }

    #[inline]
    pub fn apply(&self, p: Point2) -> Point2 {
        let (a, b) = self.linear();
        Point2 {
            x: a * p.x - b * p.y + self.tx,
            y: b * p.x + a * p.y + self.ty,
        }
    }

    pub fn inverse(&self) -> Similarity2D {
        let inv_scale = 1.0 / self.scale;
        let angle = -self.angle;
        let (s, c) = angle.sin_cos();
        let (a, b) = (inv_scale * c, inv_scale * s);
        Similarity2D {
            scale: inv_scale,
            angle,
            tx: -(a * self.tx - b * self.ty),
            ty: -(b * self.tx + a * self.ty),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Similarity2D) -> Similarity2D {
        let t = self.apply(Point2::new(other.tx, other.ty));
        Similarity2D {
            scale: self.scale * other.scale,
            angle: self.angle + other.angle,
            tx: t.x,
            ty: t.y,
        }
    }

    pub fn angle_degrees(&self) -> f64 {
        self.angle.to_degrees()
    }
}

/// Maps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}
