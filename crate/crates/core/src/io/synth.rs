//! Synthetic faces: a landmark template rendered as blobs on a shaded face
//! disc over a gradient background, warped by a random similarity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregation::Detection;
use crate::error::{Error, Result};
use crate::geometry::{shape_bbox, Point, Shape};
use crate::image::GrayImage;
use crate::markup::{Layout, LandmarkPermutation};
use crate::pipeline::perturb_bbox;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFaceSpec {
    /// Landmarks in a unit face frame centred on (0.5, 0.5).
    pub template: Shape,
    pub texture_seed: u64,
    pub width: usize,
    pub height: usize,
    /// Face frame side as a fraction of the smaller image side.
    pub face_size: f64,
    /// Degrees; positive values increase the measured roll.
    pub rotation_range: (f64, f64),
    pub scale_range: (f64, f64),
    /// Maximum shift of the face centre along each axis, in pixels.
    pub translation: f64,
    /// Half-width of the uniform pixel noise.
    pub noise: f64,
    /// Probability that a face is mirrored (landmark order kept).
    pub flip_probability: f64,
    /// Corner jitter of emitted detections, as a fraction of box size.
    pub detection_jitter: f64,
    pub detection_sources: Vec<String>,
    pub score_range: (f64, f64),
}

impl SyntheticFaceSpec {
    pub fn for_layout(layout: Layout) -> Self {
        SyntheticFaceSpec {
            template: template(layout),
            texture_seed: 1,
            width: 128,
            height: 128,
            face_size: 0.5,
            rotation_range: (-15.0, 15.0),
            scale_range: (0.9, 1.1),
            translation: 8.0,
            noise: 0.02,
            flip_probability: 0.0,
            detection_jitter: 0.05,
            detection_sources: vec!["dlib".into(), "mtcnn".into()],
            score_range: (0.8, 1.0),
        }
    }

    pub fn layout(&self) -> Result<Layout> {
        Layout::from_landmarks(self.template.len())
    }

    pub fn validate(&self) -> Result<()> {
        let finite_range = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidConfig("synthetic images must be at least 8x8".into()));
        }
        if !(self.face_size > 0.0 && self.face_size.is_finite()) {
            return Err(Error::InvalidConfig("face_size must be positive".into()));
        }
        if !finite_range(self.rotation_range) || !finite_range(self.scale_range) || self.scale_range.0 <= 0.0 {
            return Err(Error::InvalidConfig("rotation and scale ranges must be finite, ordered, scale > 0".into()));
        }
        if !finite_range(self.score_range) || self.score_range.0 < 0.0 || self.score_range.1 > 1.0 {
            return Err(Error::InvalidConfig("score range must be ordered within [0, 1]".into()));
        }
        for (name, v, hi) in [
            ("translation", self.translation, f64::INFINITY),
            ("noise", self.noise, 1.0),
            ("flip_probability", self.flip_probability, 1.0),
            ("detection_jitter", self.detection_jitter, 0.5),
        ] {
            if !(v.is_finite() && v >= 0.0 && v <= hi) {
                return Err(Error::InvalidConfig(format!("{name} out of range: {v}")));
            }
        }
        if self.detection_jitter >= 0.5 {
            return Err(Error::InvalidConfig("detection_jitter must be below 0.5".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub image: GrayImage,
    pub shape: Shape,
    pub detections: Vec<Detection>,
    /// Roll applied to the template, in degrees.
    pub rotation: f64,
    pub flipped: bool,
}

pub fn template(layout: Layout) -> Shape {
    match layout {
        Layout::SemiFrontal => template_68(),
        Layout::Profile => template_39(),
    }
}

/// Symmetric 68-point face consistent with the built-in mirror table.
fn template_68() -> Shape {
    let mut p = [(f64::NAN, f64::NAN); 68];
    for (i, slot) in p.iter_mut().enumerate().take(8) {
        let phi = std::f64::consts::PI * i as f64 / 16.0;
        *slot = (0.5 - 0.5 * phi.cos(), 0.2 + 0.8 * phi.sin());
    }
    p[8] = (0.5, 1.0);
    let brows = [(0.12, 0.17), (0.19, 0.13), (0.27, 0.12), (0.35, 0.13), (0.43, 0.16)];
    p[17..22].copy_from_slice(&brows);
    p[27..31].copy_from_slice(&[(0.5, 0.25), (0.5, 0.33), (0.5, 0.41), (0.5, 0.49)]);
    p[31..34].copy_from_slice(&[(0.40, 0.56), (0.45, 0.58), (0.5, 0.6)]);
    let eye = [(0.18, 0.30), (0.24, 0.265), (0.32, 0.265), (0.38, 0.30), (0.32, 0.33), (0.24, 0.33)];
    p[36..42].copy_from_slice(&eye);
    p[48..52].copy_from_slice(&[(0.33, 0.75), (0.39, 0.71), (0.45, 0.69), (0.5, 0.70)]);
    p[57..60].copy_from_slice(&[(0.5, 0.83), (0.43, 0.82), (0.38, 0.80)]);
    p[60..63].copy_from_slice(&[(0.36, 0.75), (0.44, 0.735), (0.5, 0.74)]);
    p[66..68].copy_from_slice(&[(0.5, 0.77), (0.44, 0.765)]);
    let mirror = LandmarkPermutation::mirror_68();
    for (i, &j) in mirror.as_slice().iter().enumerate() {
        if p[i].0.is_nan() {
            p[i] = (1.0 - p[j].0, p[j].1);
        }
    }
    Shape::from_xy(&p).expect("template is finite")
}

/// 39-point profile looking towards the left of the image.
#[rustfmt::skip]
fn template_39() -> Shape {
    Shape::from_xy(&[
        // jaw from the ear to the chin
        (0.88, 0.30), (0.86, 0.45), (0.82, 0.60), (0.76, 0.72), (0.68, 0.82),
        (0.58, 0.90), (0.47, 0.95), (0.36, 0.97), (0.27, 0.94), (0.22, 0.88),
        // brow, eye
        (0.22, 0.18), (0.30, 0.15), (0.38, 0.15), (0.46, 0.18),
        (0.26, 0.30), (0.31, 0.27), (0.37, 0.30), (0.31, 0.33),
        // nose
        (0.15, 0.36), (0.05, 0.52), (0.10, 0.58), (0.18, 0.60), (0.24, 0.56),
        // mouth
        (0.14, 0.68), (0.20, 0.67), (0.26, 0.70), (0.20, 0.73), (0.14, 0.72), (0.16, 0.78), (0.22, 0.77),
        // forehead
        (0.20, 0.05), (0.14, 0.12), (0.12, 0.22), (0.10, 0.30),
        // front of the chin
        (0.13, 0.84), (0.17, 0.90),
        // ear
        (0.70, 0.32), (0.74, 0.42), (0.70, 0.50),
    ])
    .expect("template is finite")
}

struct Blob {
    centre: Point,
    amplitude: f64,
    inv_two_sigma_sq: f64,
    reach_sq: f64,
}

fn blobs(spec: &SyntheticFaceSpec) -> Vec<Blob> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.texture_seed);
    spec.template
        .points()
        .iter()
        .map(|&centre| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let amplitude = sign * rng.random_range(0.2..0.4);
            let sigma: f64 = rng.random_range(0.015..0.03);
            Blob {
                centre,
                amplitude,
                inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
                reach_sq: (4.0 * sigma).powi(2),
            }
        })
        .collect()
}

/// Intensity at template-frame point `q` over background level `bg`.
fn texture(q: Point, bg: f64, blobs: &[Blob]) -> f64 {
    let d = ((q.x - 0.5) / 0.58).powi(2) + ((q.y - 0.55) / 0.62).powi(2);
    let mask = ((1.15 - d) / 0.3).clamp(0.0, 1.0);
    let skin = 0.3 + 0.4 * q.y.clamp(0.0, 1.0);
    let mut v = bg * (1.0 - mask) + skin * mask;
    for b in blobs {
        let r2 = (q.x - b.centre.x).powi(2) + (q.y - b.centre.y).powi(2);
        if r2 < b.reach_sq {
            v += b.amplitude * (-r2 * b.inv_two_sigma_sq).exp();
        }
    }
    v
}

/// Renders `count` faces. Sample `i` depends only on `(spec, seed, i)`.
pub fn generate_synthetic(spec: &SyntheticFaceSpec, count: usize, seed: u64) -> Result<Vec<SyntheticSample>> {
    spec.validate()?;
    let blobs = blobs(spec);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            render_one(spec, &blobs, &mut rng)
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn render_one(spec: &SyntheticFaceSpec, blobs: &[Blob], rng: &mut ChaCha8Rng) -> Result<SyntheticSample> {
    let (w, h) = (spec.width, spec.height);
    let theta = uniform(rng, spec.rotation_range);
    let scale = uniform(rng, spec.scale_range);
    let t = spec.translation;
    let (tx, ty) = (uniform(rng, (-t, t)), uniform(rng, (-t, t)));
    let flipped = spec.flip_probability > 0.0 && rng.random::<f64>() < spec.flip_probability;

    let size = spec.face_size * w.min(h) as f64 * scale;
    let centre = Point::new((w as f64 - 1.0) / 2.0 + tx, (h as f64 - 1.0) / 2.0 + ty);
    let (s, c) = theta.to_radians().sin_cos();
    let mirror = |x: f64| if flipped { 1.0 - x } else { x };
    // Template frame to image: mirror, centre, scale, rotate, translate.
    let forward = |q: Point| {
        let (dx, dy) = ((mirror(q.x) - 0.5) * size, (q.y - 0.5) * size);
        Point::new(centre.x + dx * c + dy * s, centre.y - dx * s + dy * c)
    };
    let backward = |p: Point| {
        let (dx, dy) = (p.x - centre.x, p.y - centre.y);
        let (u, v) = (dx * c - dy * s, dx * s + dy * c);
        Point::new(mirror(u / size + 0.5), v / size + 0.5)
    };

    let shape = spec.template.map_points(forward)?;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let bg = 0.15 + 0.2 * x as f64 / w as f64 + 0.1 * y as f64 / h as f64;
            let mut v = texture(backward(Point::new(x as f64, y as f64)), bg, blobs);
            if spec.noise > 0.0 {
                v += rng.random_range(-spec.noise..=spec.noise);
            }
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    let image = GrayImage::new(w, h, data)?;

    let gt_box = shape_bbox(&shape)?;
    let mut detections = Vec::with_capacity(spec.detection_sources.len());
    for source in &spec.detection_sources {
        let b = perturb_bbox(&gt_box, spec.detection_jitter, rng);
        let score = uniform(rng, spec.score_range);
        detections.push(Detection::new(source.clone(), score, b)?);
    }
    Ok(SyntheticSample {
        image,
        shape,
        detections,
        rotation: theta,
        flipped,
    })
}
