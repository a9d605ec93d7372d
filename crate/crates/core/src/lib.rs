//! Allocation-only algorithms behind the `facepress` benchmark harness.
//!
//! Everything in this crate is pure: images arrive as [`image::ImagePlane`]
//! rasters, encoders arrive as probe closures, and results are plain values.
//! File formats, codecs and process plumbing live in the `facepress` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod budget;
pub mod dataset;
pub mod fiqa;
pub mod geometry;
pub mod image;
pub mod resample;
pub mod synth;
pub mod trials;

pub use budget::{ByteBudget, CodecId, CodecParam, CompressionOutcome};
pub use dataset::{DatasetManifest, ImageRecord, Variant};
pub use image::{ImageError, ImagePlane, LumaPlane};

/// Rounds half away from zero, the rounding rule used for every reported value.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    libm::round(x)
}
