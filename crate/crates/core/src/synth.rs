//! Deterministic synthetic face-like images for tests and demos.
//!
//! A "subject" seed fixes identity traits (face shape, skin and hair tone,
//! feature spacing); a "capture" seed adds pose jitter, lighting and sensor
//! noise. Landmarks are reported in the same continuous coordinates used by
//! [`crate::geometry`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{face_template, Landmarks, Point, SimilarityTransform};
use crate::image::ImagePlane;
use crate::resample::quantize;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFace {
    pub image: ImagePlane,
    pub landmarks: Landmarks,
}

struct Identity {
    skin: [f64; 3],
    hair: [f64; 3],
    background: [f64; 3],
    face_rx: f64,
    face_ry: f64,
    eye_r: f64,
    mouth_w: f64,
    iris: [f64; 3],
}

fn color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    ]
}

impl Identity {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d_cafe_0001);
        let tone = rng.random_range(90.0..230.0);
        Self {
            skin: [tone, tone * rng.random_range(0.72..0.85), tone * rng.random_range(0.55..0.7)],
            hair: color(&mut rng, 10.0, 120.0),
            background: color(&mut rng, 60.0, 220.0),
            face_rx: rng.random_range(0.30..0.36),
            face_ry: rng.random_range(0.40..0.47),
            eye_r: rng.random_range(0.035..0.05),
            mouth_w: rng.random_range(0.09..0.14),
            iris: color(&mut rng, 20.0, 110.0),
        }
    }
}

/// Soft inside-ness of an ellipse: 1 inside, 0 outside, linear over `edge`.
fn ellipse(p: Point, c: Point, rx: f64, ry: f64, edge: f64) -> f64 {
    let dx = (p.x - c.x) / rx;
    let dy = (p.y - c.y) / ry;
    let r = libm::sqrt(dx * dx + dy * dy);
    let scale = rx.min(ry);
    ((1.0 - r) * scale / edge + 0.5).clamp(0.0, 1.0)
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Renders a `size x size` face of `subject` under capture conditions
/// `capture`.
pub fn synth_face(size: u32, subject: u64, capture: u64) -> SyntheticFace {
    let id = Identity::new(subject);
    let mut rng = ChaCha8Rng::seed_from_u64(
        subject.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ capture.wrapping_add(0x1234_5678),
    );
    let s = size as f64;
    let angle: f64 = rng.random_range(-0.08..0.08);
    let scale: f64 = rng.random_range(0.93..1.05);
    let shift = Point::new(rng.random_range(-0.03..0.03) * s, rng.random_range(-0.03..0.03) * s);
    let light: f64 = rng.random_range(0.85..1.12);
    let light_dir: f64 = rng.random_range(-0.25..0.25);
    let noise_amp: f64 = rng.random_range(2.0..6.0);

    // Canonical face geometry lives in template coordinates; the pose maps it
    // into the image around the center.
    let c = s / 2.0;
    let pose = SimilarityTransform {
        a: scale * libm::cos(angle),
        b: scale * libm::sin(angle),
        tx: 0.0,
        ty: 0.0,
    };
    let place = |p: Point| {
        let q = pose.apply(Point::new(p.x - c, p.y - c));
        Point::new(q.x + c + shift.x, q.y + c + shift.y)
    };
    let inverse = pose.inverse().expect("nonzero scale");
    let unplace = |p: Point| {
        let q = inverse.apply(Point::new(p.x - c - shift.x, p.y - c - shift.y));
        Point::new(q.x + c, q.y + c)
    };

    let t = face_template(size);
    let [le, re, nose, lm, rm] = *t.points();
    let face_c = Point::new(nose.x, nose.y - 0.02 * s);
    let mouth_c = lm.midpoint(rm);

    let image = ImagePlane::from_fn(size, size, |x, y| {
        let p = unplace(Point::new(x as f64 + 0.5, y as f64 + 0.5));
        let u = p.x / s;
        let v = p.y / s;
        let mut col = mix(id.background, [id.background[0] * 0.6, id.background[1] * 0.6, id.background[2] * 0.7], v);
        // Hair cap behind the face.
        let hair = ellipse(p, Point::new(face_c.x, face_c.y - 0.08 * s), id.face_rx * s * 1.08, id.face_ry * s * 1.0, 2.0);
        col = mix(col, id.hair, hair);
        let face = ellipse(p, face_c, id.face_rx * s, id.face_ry * s, 1.5);
        let hairline = ((p.y - (face_c.y - 0.27 * s)) / (0.02 * s)).clamp(0.0, 1.0);
        let du = (u - 0.5) * 2.0;
        let shade = 1.0 - 0.35 * du * du - 0.1 * (v - 0.5);
        let skin = id.skin.map(|ch| ch * shade);
        col = mix(col, skin, face * hairline);
        for eye in [le, re] {
            let white = ellipse(p, eye, id.eye_r * s * 1.6, id.eye_r * s * 0.8, 1.0);
            col = mix(col, [235.0, 230.0, 225.0], white * face);
            let iris = ellipse(p, eye, id.eye_r * s * 0.75, id.eye_r * s * 0.75, 1.0);
            col = mix(col, id.iris, iris * face);
            let pupil = ellipse(p, eye, id.eye_r * s * 0.3, id.eye_r * s * 0.3, 0.8);
            col = mix(col, [8.0, 8.0, 10.0], pupil * face);
            let brow = ellipse(
                p,
                Point::new(eye.x, eye.y - id.eye_r * s * 2.0),
                id.eye_r * s * 2.0,
                id.eye_r * s * 0.35,
                1.0,
            );
            col = mix(col, id.hair, brow * face);
        }
        let nose_shadow = ellipse(p, Point::new(nose.x, nose.y + 0.01 * s), 0.03 * s, 0.018 * s, 2.0);
        col = mix(col, skin.map(|ch| ch * 0.7), nose_shadow * face);
        let lips = ellipse(p, mouth_c, id.mouth_w * s, 0.022 * s, 1.0);
        col = mix(col, [170.0, 60.0, 70.0], lips * face);
        let gap = ellipse(p, mouth_c, id.mouth_w * s * 0.9, 0.004 * s, 0.6);
        col = mix(col, [60.0, 20.0, 25.0], gap * face);
        // Pore-scale texture on the skin.
        let tex = libm::sin(p.x * 0.9 + libm::sin(p.y * 0.35) * 2.0) * libm::cos(p.y * 0.8) * 4.0 * face;
        let lighting = light * (1.0 + light_dir * (u - 0.5));
        let n: f64 = (0..3).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() * noise_amp / 1.7;
        col.map(|ch| quantize(ch * lighting + tex + n))
    })
    .expect("size is nonzero");

    let landmarks = Landmarks([le, re, nose, lm, rm].map(place));
    SyntheticFace { image, landmarks }
}

/// Photo-like test image: a face with a random identity.
pub fn synth_photo(size: u32, seed: u64) -> ImagePlane {
    synth_face(size, seed.wrapping_add(0xabcdef), seed).image
}

/// Uniformly random RGB image, for property tests of metrics.
pub fn random_image(width: u32, height: u32, seed: u64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImagePlane::from_fn(width, height, |_, _| [rng.random(), rng.random(), rng.random()])
        .expect("nonzero dimensions")
}
