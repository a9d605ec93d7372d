use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("expected {expected} samples for the given dimensions, got {actual}")]
    SampleLength { expected: usize, actual: usize },
}

/// Decoded 8-bit RGB raster, row-major, three interleaved samples per pixel.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImagePlane {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl core::fmt::Debug for ImagePlane {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ImagePlane")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

fn check_dims(width: u32, height: u32) -> Result<usize, ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension { width, height });
    }
    Ok(width as usize * height as usize * 3)
}

impl ImagePlane {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Self, ImageError> {
        let expected = check_dims(width, height)?;
        if samples.len() != expected {
            return Err(ImageError::SampleLength {
                expected,
                actual: samples.len(),
            });
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let len = check_dims(width, height)?;
        let mut samples = vec![0u8; len];
        for px in samples.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> [u8; 3],
    ) -> Result<Self, ImageError> {
        let len = check_dims(width, height)?;
        let mut samples = Vec::with_capacity(len);
        for y in 0..height {
            for x in 0..width {
                samples.extend_from_slice(&f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    /// Panics when `(x, y)` is out of bounds.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        let o = self.offset(x, y);
        [self.samples[o], self.samples[o + 1], self.samples[o + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        let o = self.offset(x, y);
        self.samples[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn mirrored_horizontally(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.pixel(self.width - 1 - x, y)
        })
        .expect("dimensions already validated")
    }

    pub fn mirrored_vertically(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.pixel(x, self.height - 1 - y)
        })
        .expect("dimensions already validated")
    }

    /// Photographic negative: every sample `v` becomes `255 - v`.
    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            samples: self.samples.iter().map(|v| 255 - v).collect(),
        }
    }
}

/// Single-channel real-valued plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LumaPlane {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl LumaPlane {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, ImageError> {
        let expected = check_dims(width, height)? / 3;
        if values.len() != expected {
            return Err(ImageError::SampleLength {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Value at signed coordinates with replicate-edge padding.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let cx = x.clamp(0, self.width as i64 - 1) as u32;
        let cy = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(cx, cy)
    }
}
