//! Landmark-driven preprocessing: similarity alignment onto a five-point
//! template and landmark-relative portrait cropping.
//!
//! Landmark coordinates are continuous image coordinates in which pixel
//! `(i, j)` covers `[i, i + 1) x [j, j + 1)`, so its center lies at
//! `(i + 0.5, j + 0.5)`. Under this convention a pure scale by `s` maps
//! onto exactly the sample grid used by [`crate::resample::bilinear_resize`].

use thiserror::Error;

use crate::image::{ImageError, ImagePlane};
use crate::resample::{quantize, sample_rgb};
use crate::round_half_away;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("landmark coordinates must be finite")]
    NonFiniteLandmark,
    #[error("landmarks are degenerate; no similarity transform fits them")]
    DegenerateLandmarks,
    #[error("inter-eye distance is zero")]
    ZeroInterEyeDistance,
    #[error("eye-mouth distance is zero")]
    ZeroEyeMouthDistance,
    #[error("portrait ratios must be finite and strictly positive")]
    InvalidPortraitGeometry,
    #[error("output size must be at least 1 pixel")]
    EmptyOutput,
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }
}

/// Five facial landmarks in the usual order: image-left eye, image-right
/// eye, nose tip, image-left mouth corner, image-right mouth corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmarks(pub [Point; 5]);

impl Landmarks {
    pub fn new(points: [Point; 5]) -> Result<Self, GeometryError> {
        let lm = Self(points);
        lm.validate()?;
        Ok(lm)
    }

    /// Builds landmarks from `x1, y1, ..., x5, y5`.
    pub fn from_flat(v: [f64; 10]) -> Result<Self, GeometryError> {
        Self::new(core::array::from_fn(|i| Point::new(v[2 * i], v[2 * i + 1])))
    }

    pub fn to_flat(&self) -> [f64; 10] {
        core::array::from_fn(|i| {
            let p = self.0[i / 2];
            if i % 2 == 0 {
                p.x
            } else {
                p.y
            }
        })
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.0.iter().all(|p| p.x.is_finite() && p.y.is_finite()) {
            Ok(())
        } else {
            Err(GeometryError::NonFiniteLandmark)
        }
    }

    pub fn points(&self) -> &[Point; 5] {
        &self.0
    }

    pub fn eye_midpoint(&self) -> Point {
        self.0[0].midpoint(self.0[1])
    }

    pub fn mouth_midpoint(&self) -> Point {
        self.0[3].midpoint(self.0[4])
    }

    pub fn inter_eye_distance(&self) -> f64 {
        self.0[0].distance(self.0[1])
    }

    pub fn eye_mouth_distance(&self) -> f64 {
        self.eye_midpoint().distance(self.mouth_midpoint())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.map(|p| Point::new(p.x * s, p.y * s)))
    }
}

/// The widely used 112x112 five-point face alignment template.
pub const FACE_TEMPLATE_112: [Point; 5] = [
    Point::new(38.2946, 51.6963),
    Point::new(73.5318, 51.5014),
    Point::new(56.0252, 71.7366),
    Point::new(41.5493, 92.3655),
    Point::new(70.7299, 92.2041),
];

/// [`FACE_TEMPLATE_112`] linearly scaled to an `out_size x out_size` raster.
pub fn face_template(out_size: u32) -> Landmarks {
    Landmarks(FACE_TEMPLATE_112).scaled(out_size as f64 / 112.0)
}

/// `p' = [a -b; b a] p + t`: rotation, uniform scale and translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: Self = Self {
        a: 1.0,
        b: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.a * p.x - self.b * p.y + self.tx,
            self.b * p.x + self.a * p.y + self.ty,
        )
    }

    pub fn scale(&self) -> f64 {
        libm::hypot(self.a, self.b)
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.a * self.a + self.b * self.b;
        if !(det > 0.0) || !det.is_finite() {
            return None;
        }
        let a = self.a / det;
        let b = -self.b / det;
        Some(Self {
            a,
            b,
            tx: -(a * self.tx - b * self.ty),
            ty: -(b * self.tx + a * self.ty),
        })
    }

    /// Least-squares fit mapping `src[i]` onto `dst[i]`.
    pub fn estimate(src: &[Point], dst: &[Point]) -> Result<Self, GeometryError> {
        assert_eq!(src.len(), dst.len(), "point sets differ in length");
        let n = src.len() as f64;
        let mean = |pts: &[Point]| {
            let (sx, sy) = pts.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
            Point::new(sx / n, sy / n)
        };
        let ms = mean(src);
        let md = mean(dst);
        let (mut var, mut dot, mut cross) = (0.0, 0.0, 0.0);
        for (s, d) in src.iter().zip(dst) {
            let (sx, sy) = (s.x - ms.x, s.y - ms.y);
            let (dx, dy) = (d.x - md.x, d.y - md.y);
            var += sx * sx + sy * sy;
            dot += sx * dx + sy * dy;
            cross += sx * dy - sy * dx;
        }
        let spread = src.iter().map(|p| p.distance(ms)).fold(0.0, f64::max);
        if !(var.is_finite() && spread > 1e-9 * (1.0 + libm::fabs(ms.x) + libm::fabs(ms.y))) {
            return Err(GeometryError::DegenerateLandmarks);
        }
        let a = dot / var;
        let b = cross / var;
        let t = Self {
            a,
            b,
            tx: md.x - (a * ms.x - b * ms.y),
            ty: md.y - (b * ms.x + a * ms.y),
        };
        if !(t.scale() > 1e-12) || !t.scale().is_finite() {
            return Err(GeometryError::DegenerateLandmarks);
        }
        Ok(t)
    }
}

/// Warps `source` so that `landmarks` land on `template`, producing an
/// `out_size x out_size` raster. Samples falling outside the source pixel
/// area take `fill`.
pub fn align_with_template(
    source: &ImagePlane,
    landmarks: &Landmarks,
    template: &Landmarks,
    out_size: u32,
    fill: [u8; 3],
) -> Result<ImagePlane, GeometryError> {
    if out_size == 0 {
        return Err(GeometryError::EmptyOutput);
    }
    landmarks.validate()?;
    let forward = SimilarityTransform::estimate(landmarks.points(), template.points())?;
    let back = forward.inverse().ok_or(GeometryError::DegenerateLandmarks)?;
    let (w, h) = (source.width() as f64, source.height() as f64);
    let img = ImagePlane::from_fn(out_size, out_size, |i, j| {
        let p = back.apply(Point::new(i as f64 + 0.5, j as f64 + 0.5));
        if p.x < 0.0 || p.y < 0.0 || p.x > w || p.y > h {
            return fill;
        }
        let v = sample_rgb(source, p.x - 0.5, p.y - 0.5);
        [quantize(v[0]), quantize(v[1]), quantize(v[2])]
    })?;
    Ok(img)
}

/// Aligns onto the default template scaled to `out_size` with a black fill.
pub fn align_to_roi(
    source: &ImagePlane,
    landmarks: &Landmarks,
    out_size: u32,
) -> Result<ImagePlane, GeometryError> {
    align_with_template(source, landmarks, &face_template(out_size), out_size, [0, 0, 0])
}

pub const DEFAULT_ROI_SIZE: u32 = 250;

/// Portrait crop proportions relative to the inter-eye distance (IED) and
/// the eye-mouth distance (EMD). The default ratios are an operator choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortraitGeometry {
    pub width_per_ied: f64,
    pub height_per_emd: f64,
    /// Eye line position measured from the top, as a fraction of crop height.
    pub eye_line_fraction: f64,
    pub fill: [u8; 3],
}

impl Default for PortraitGeometry {
    fn default() -> Self {
        Self {
            width_per_ied: 4.0,
            height_per_emd: 6.4,
            eye_line_fraction: 0.45,
            fill: [0, 0, 0],
        }
    }
}

impl PortraitGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.width_per_ied)
            && ok(self.height_per_emd)
            && self.eye_line_fraction.is_finite()
            && (0.0..=1.0).contains(&self.eye_line_fraction)
        {
            Ok(())
        } else {
            Err(GeometryError::InvalidPortraitGeometry)
        }
    }

    /// Crop rectangle `(left, top, width, height)` in source pixels.
    pub fn crop_rect(&self, landmarks: &Landmarks) -> Result<(i64, i64, u32, u32), GeometryError> {
        self.validate()?;
        landmarks.validate()?;
        let ied = landmarks.inter_eye_distance();
        if !(ied > 0.0) {
            return Err(GeometryError::ZeroInterEyeDistance);
        }
        let emd = landmarks.eye_mouth_distance();
        if !(emd > 0.0) {
            return Err(GeometryError::ZeroEyeMouthDistance);
        }
        let w = round_half_away(self.width_per_ied * ied);
        let h = round_half_away(self.height_per_emd * emd);
        if w < 1.0 || h < 1.0 || w > u32::MAX as f64 || h > u32::MAX as f64 {
            return Err(GeometryError::EmptyOutput);
        }
        let eyes = landmarks.eye_midpoint();
        let left = libm::floor(eyes.x - w / 2.0 + 0.5) as i64;
        let top = libm::floor(eyes.y - self.eye_line_fraction * h + 0.5) as i64;
        Ok((left, top, w as u32, h as u32))
    }
}

/// Pixel-aligned crop around the eyes; pixels outside the source take
/// `geometry.fill`.
pub fn crop_portrait(
    source: &ImagePlane,
    landmarks: &Landmarks,
    geometry: &PortraitGeometry,
) -> Result<ImagePlane, GeometryError> {
    let (left, top, w, h) = geometry.crop_rect(landmarks)?;
    let (sw, sh) = (source.width() as i64, source.height() as i64);
    let img = ImagePlane::from_fn(w, h, |i, j| {
        let (x, y) = (left + i as i64, top + j as i64);
        if (0..sw).contains(&x) && (0..sh).contains(&y) {
            source.pixel(x as u32, y as u32)
        } else {
            geometry.fill
        }
    })?;
    Ok(img)
}
