#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod imgproc;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod registration;
pub mod synthgen;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
