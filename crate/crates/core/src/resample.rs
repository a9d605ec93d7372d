//! Bilinear resampling with the half-pixel-center coordinate convention.
//!
//! Output pixel `(i, j)` of an `out_w x out_h` raster samples the source at
//! `((i + 0.5) * w / out_w - 0.5, (j + 0.5) * h / out_h - 0.5)`, clamped to
//! the source bounds. Channels are interpolated independently and rounded
//! half away from zero.

use alloc::vec::Vec;

use crate::image::{ImageError, ImagePlane, LumaPlane};
use crate::round_half_away;

/// Converts an interpolated sample to 8 bits.
#[inline]
pub fn quantize(v: f64) -> u8 {
    round_half_away(v).clamp(0.0, 255.0) as u8
}

#[inline]
fn source_coord(out_index: u32, src_len: u32, out_len: u32) -> f64 {
    let s = (out_index as f64 + 0.5) * src_len as f64 / out_len as f64 - 0.5;
    s.clamp(0.0, (src_len - 1) as f64)
}

/// Neighbor indices and weight for a coordinate already clamped to `[0, len - 1]`.
#[inline]
fn taps(s: f64, len: u32) -> (u32, u32, f64) {
    let i0 = libm::floor(s) as u32;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, s - i0 as f64)
}

/// Interpolates all three channels at a source position given in
/// pixel-center coordinates. The position is clamped to the raster.
pub fn sample_rgb(src: &ImagePlane, x: f64, y: f64) -> [f64; 3] {
    let x = x.clamp(0.0, (src.width() - 1) as f64);
    let y = y.clamp(0.0, (src.height() - 1) as f64);
    let (x0, x1, fx) = taps(x, src.width());
    let (y0, y1, fy) = taps(y, src.height());
    let p00 = src.pixel(x0, y0);
    let p10 = src.pixel(x1, y0);
    let p01 = src.pixel(x0, y1);
    let p11 = src.pixel(x1, y1);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = top * (1.0 - fy) + bottom * fy;
    }
    out
}

pub fn bilinear_resize(src: &ImagePlane, out_w: u32, out_h: u32) -> Result<ImagePlane, ImageError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::ZeroDimension {
            width: out_w,
            height: out_h,
        });
    }
    if src.dims() == (out_w, out_h) {
        return Ok(src.clone());
    }
    let xs: Vec<f64> = (0..out_w)
        .map(|i| source_coord(i, src.width(), out_w))
        .collect();
    let ys: Vec<f64> = (0..out_h)
        .map(|j| source_coord(j, src.height(), out_h))
        .collect();
    ImagePlane::from_fn(out_w, out_h, |i, j| {
        let v = sample_rgb(src, xs[i as usize], ys[j as usize]);
        [quantize(v[0]), quantize(v[1]), quantize(v[2])]
    })
}

/// Same convention as [`bilinear_resize`] on a real-valued plane, without
/// quantization.
pub fn bilinear_resize_luma(src: &LumaPlane, out_w: u32, out_h: u32) -> Result<LumaPlane, ImageError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::ZeroDimension {
            width: out_w,
            height: out_h,
        });
    }
    let mut values = Vec::with_capacity(out_w as usize * out_h as usize);
    for j in 0..out_h {
        let (y0, y1, fy) = taps(source_coord(j, src.height(), out_h), src.height());
        for i in 0..out_w {
            let (x0, x1, fx) = taps(source_coord(i, src.width(), out_w), src.width());
            let top = src.get(x0, y0) * (1.0 - fx) + src.get(x1, y0) * fx;
            let bottom = src.get(x0, y1) * (1.0 - fx) + src.get(x1, y1) * fx;
            values.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    LumaPlane::new(out_w, out_h, values)
}
