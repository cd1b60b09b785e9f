//! Automatic comparison of cartridge-case surface topographies.
//!
//! The crate covers the full chain: loading scans, preprocessing them down to
//! the filtered breech-face impression, scoring every pair by maximized
//! cross-correlation, clustering the scores into same-source groups, and
//! evaluating the result against ground truth.

// Validation guards are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`,
// the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod error;
pub mod evaluate;
pub mod linkage;
pub mod pipeline;
pub mod preprocess;
pub mod surface;
pub mod synthetic;

pub use error::{Error, Result};
pub use surface::Surface;
