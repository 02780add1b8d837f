//! Pixel-level primitives for the detection stage.
//!
//! Border conventions: smoothing, thresholding and median filtering replicate
//! the edge pixels; morphology only looks at in-image pixels (see
//! [`morphology`]).

mod color;
mod components;
mod diff;
mod geometry;
mod median;
pub mod morphology;
mod nms;
mod threshold;

pub use color::{gray_to_color, to_grayscale};
pub use components::{connected_components, label_components, Component, Connectivity};
pub use diff::xor_diff;
pub use geometry::{crop, resize_bilinear};
pub use median::median_filter;
pub use morphology::{close, dilate, erode, open, ElementShape, StructElem};
pub use nms::nms;
pub use threshold::{adaptive_threshold, gaussian_kernel, GaussianKernel1D, ThresholdParams};
