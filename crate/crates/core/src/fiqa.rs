//! Built-in face image quality measures.
//!
//! Both sharpness scores are computed on an integer luma plane
//! (`299 R + 587 G + 114 B`, i.e. Rec.601 luma scaled by 1000), so sums are
//! exact and the scores are bit-identical under mirroring and luminance
//! inversion. [`to_gray`] and [`box_blur_3x3`] expose the same quantities
//! as real values in `[0, 1]`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::image::{ImagePlane, LumaPlane};

pub const SHARPNESS1: &str = "sharpness-1";
pub const SHARPNESS2: &str = "sharpness-2";

/// Full-scale value of the integer luma plane.
const LUMA_MAX: i64 = 255_000;

#[derive(Debug, Clone, PartialEq)]
pub struct QualityScore {
    pub image_id: String,
    pub method: String,
    pub value: f64,
}

fn luma_int(image: &ImagePlane) -> Vec<i64> {
    image
        .samples()
        .chunks_exact(3)
        .map(|p| 299 * p[0] as i64 + 587 * p[1] as i64 + 114 * p[2] as i64)
        .collect()
}

/// Rec.601 luma normalized to `[0, 1]`.
pub fn to_gray(image: &ImagePlane) -> LumaPlane {
    let values = luma_int(image)
        .into_iter()
        .map(|g| g as f64 / LUMA_MAX as f64)
        .collect();
    LumaPlane::new(image.width(), image.height(), values).expect("same dimensions as source")
}

/// 3x3 mean filter with replicate-edge padding.
pub fn box_blur_3x3(plane: &LumaPlane) -> LumaPlane {
    let (w, h) = (plane.width() as i64, plane.height() as i64);
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    s += plane.get_clamped(x + dx, y + dy);
                }
            }
            out.push(s / 9.0);
        }
    }
    LumaPlane::new(plane.width(), plane.height(), out).expect("same dimensions as input")
}

#[inline]
fn clamp_idx(i: i64, len: usize) -> usize {
    i.clamp(0, len as i64 - 1) as usize
}

/// Mean absolute difference between the luma plane and its 3x3 box blur.
pub fn sharpness2(image: &ImagePlane) -> f64 {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let g = luma_int(image);
    let mut total: u64 = 0;
    for y in 0..h {
        for x in 0..w {
            let mut s = 0i64;
            for dy in -1..=1i64 {
                let row = clamp_idx(y as i64 + dy, h) * w;
                for dx in -1..=1i64 {
                    s += g[row + clamp_idx(x as i64 + dx, w)];
                }
            }
            total += (9 * g[y * w + x] - s).unsigned_abs();
        }
    }
    total as f64 / (9 * LUMA_MAX) as f64 / (w * h) as f64
}

/// Configuration of the perceptual blur metric behind [`sharpness1`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlurMetricConfig {
    /// Length of the uniform directional smoothing kernel; must be odd.
    pub kernel_len: usize,
}

impl Default for BlurMetricConfig {
    fn default() -> Self {
        Self { kernel_len: 9 }
    }
}

/// Sum of neighbor variation `D` and of the variation lost to blurring `V`
/// along one axis. `stride` and `len` describe the axis, `lines`/`line_step`
/// enumerate the lines along it.
fn directional_variation(
    g: &[i64],
    lines: usize,
    line_step: usize,
    len: usize,
    stride: usize,
    k: usize,
) -> (u64, u64) {
    let half = (k / 2) as i64;
    let k = k as i64;
    let mut blurred = Vec::with_capacity(len);
    let (mut sum_d, mut sum_v) = (0u64, 0u64);
    for line in 0..lines {
        let base = line * line_step;
        let at = |i: usize| g[base + i * stride];
        blurred.clear();
        for i in 0..len as i64 {
            let s: i64 = (-half..=half).map(|d| at(clamp_idx(i + d, len))).sum();
            blurred.push(s);
        }
        for i in 1..len {
            // Scale the original difference by k to match the unnormalized blur sums.
            let d_orig = (at(i) - at(i - 1)).abs() * k;
            let d_blur = (blurred[i] - blurred[i - 1]).abs();
            sum_d += d_orig as u64;
            sum_v += (d_orig - d_blur).max(0) as u64;
        }
    }
    (sum_d, sum_v)
}

/// No-reference blur score `1 - b` in `[0, 1]`, higher meaning sharper.
///
/// The luma plane is smoothed separately along rows and columns with a
/// uniform kernel. Along each axis, `D` sums absolute neighbor differences
/// of the original and `V` sums `max(0, D_orig - D_blurred)`; the blur
/// annoyance of that axis is `(D - V) / D` and `b` is the larger of the two.
/// Axes without any variation are skipped; an image without variation
/// scores 0.
pub fn sharpness1_with(image: &ImagePlane, config: &BlurMetricConfig) -> f64 {
    assert!(config.kernel_len % 2 == 1, "kernel length must be odd");
    let (w, h) = (image.width() as usize, image.height() as usize);
    let g = luma_int(image);
    let horizontal = directional_variation(&g, h, w, w, 1, config.kernel_len);
    let vertical = directional_variation(&g, w, 1, h, w, config.kernel_len);
    let mut blur: Option<f64> = None;
    for (d, v) in [horizontal, vertical] {
        if d == 0 {
            continue;
        }
        let b = (d - v) as f64 / d as f64;
        blur = Some(blur.map_or(b, |cur| cur.max(b)));
    }
    match blur {
        Some(b) => (1.0 - b).clamp(0.0, 1.0),
        None => 0.0,
    }
}

pub fn sharpness1(image: &ImagePlane) -> f64 {
    sharpness1_with(image, &BlurMetricConfig::default())
}

/// A built-in quality measure selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BuiltinMetric {
    Sharpness1,
    Sharpness2,
}

impl BuiltinMetric {
    pub const ALL: [BuiltinMetric; 2] = [BuiltinMetric::Sharpness1, BuiltinMetric::Sharpness2];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinMetric::Sharpness1 => SHARPNESS1,
            BuiltinMetric::Sharpness2 => SHARPNESS2,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn score(self, image: &ImagePlane) -> f64 {
        match self {
            BuiltinMetric::Sharpness1 => sharpness1(image),
            BuiltinMetric::Sharpness2 => sharpness2(image),
        }
    }

    pub fn score_record(self, image_id: &str, image: &ImagePlane) -> QualityScore {
        QualityScore {
            image_id: String::from(image_id),
            method: String::from(self.name()),
            value: self.score(image),
        }
    }
}
