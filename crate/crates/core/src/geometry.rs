//! Shapes, bounding boxes and the planar transforms shared by every stage.
//!
//! Coordinates are in pixels with x to the right and y downward. Pixel
//! centres sit on integer coordinates.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// An ordered set of `L` landmarks.
///
/// When flattened, the layout is `[x1..xL, y1..yL]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    points: Vec<Point>,
}

impl Shape {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("a shape needs at least one landmark".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "landmark {} has a non-finite coordinate",
                i + 1
            )));
        }
        Ok(Shape { points })
    }

    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self> {
        Shape::new(coords.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    /// Builds a shape from the flattened `[x1..xL, y1..yL]` layout.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        if v.len() % 2 != 0 || v.is_empty() {
            return Err(Error::InvalidInput(format!(
                "flattened shape must have positive even length, got {}",
                v.len()
            )));
        }
        let l = v.len() / 2;
        Shape::new((0..l).map(|i| Point::new(v[i], v[l + i])).collect())
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.len());
        v.extend(self.points.iter().map(|p| p.x));
        v.extend(self.points.iter().map(|p| p.y));
        v
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Point {
        self.points[index]
    }

    /// Adds a flattened update `δs` to the shape.
    pub fn add_update(&self, update: &[f64]) -> Result<Shape> {
        let l = self.len();
        if update.len() != 2 * l {
            return Err(Error::DimensionMismatch {
                expected: 2 * l,
                got: update.len(),
            });
        }
        Shape::new(
            self.points
                .iter()
                .enumerate()
                .map(|(i, p)| Point::new(p.x + update[i], p.y + update[l + i]))
                .collect(),
        )
    }

    /// The residual `target - self` in the flattened layout.
    pub fn residual_to(&self, target: &Shape) -> Result<Vec<f64>> {
        if target.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: target.len(),
            });
        }
        let t = target.to_vector();
        Ok(self
            .to_vector()
            .iter()
            .zip(&t)
            .map(|(s, t)| t - s)
            .collect())
    }

    /// Reorders landmarks so that `out[i] = self[perm[i]]` (0-based).
    pub fn permuted(&self, perm: &[usize]) -> Result<Shape> {
        if perm.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: perm.len(),
            });
        }
        Ok(Shape {
            points: perm.iter().map(|&j| self.points[j]).collect(),
        })
    }

    pub fn map_points(&self, mut f: impl FnMut(Point) -> Point) -> Result<Shape> {
        Shape::new(self.points.iter().map(|&p| f(p)).collect())
    }

    /// Pointwise mean of equally sized shapes.
    pub fn pointwise_mean(shapes: &[Shape]) -> Result<Shape> {
        let first = shapes
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot average an empty shape list".into()))?;
        let l = first.len();
        let mut acc = vec![Point::default(); l];
        for s in shapes {
            if s.len() != l {
                return Err(Error::InvalidInput(format!(
                    "mixed landmark counts: {} and {}",
                    l,
                    s.len()
                )));
            }
            for (a, p) in acc.iter_mut().zip(&s.points) {
                a.x += p.x;
                a.y += p.y;
            }
        }
        let n = shapes.len() as f64;
        Shape::new(acc.into_iter().map(|p| Point::new(p.x / n, p.y / n)).collect())
    }
}

/// Axis-aligned box given by its left-upper corner, width and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub(crate) const fn new_unchecked(x: f64, y: f64, w: f64, h: f64) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidInput(format!("invalid bounding box {self:?}")));
        }
        Ok(())
    }

    /// Box covering a whole `width x height` image.
    pub fn whole_image(width: usize, height: usize) -> Self {
        BoundingBox::new_unchecked(0.0, 0.0, width as f64, height as f64)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn centre(&self) -> Point {
        Point::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x, self.y),
            Point::new(self.right(), self.y),
            Point::new(self.x, self.bottom()),
            Point::new(self.right(), self.bottom()),
        ]
    }

    /// Boundary-inclusive point containment.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.right() && p.y >= self.y && p.y <= self.bottom()
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let iy = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Box from two corners, widening a degenerate extent to 1 pixel.
    pub(crate) fn from_extent(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        let w = max_x - min_x;
        let h = max_y - min_y;
        BoundingBox::new_unchecked(
            min_x,
            min_y,
            if w > 0.0 { w } else { 1.0 },
            if h > 0.0 { h } else { 1.0 },
        )
    }
}

/// Tight axis-aligned box around the landmarks.
///
/// A zero width or height is widened to one pixel.
pub fn shape_bbox(shape: &Shape) -> Result<BoundingBox> {
    let (min_x, min_y, max_x, max_y) = extent(shape.points())?;
    Ok(BoundingBox::from_extent(min_x, min_y, max_x, max_y))
}

fn extent(points: &[Point]) -> Result<(f64, f64, f64, f64)> {
    if points.is_empty() {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    let mut e = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        if !p.is_finite() {
            return Err(Error::InvalidInput("non-finite landmark coordinate".into()));
        }
        e.0 = e.0.min(p.x);
        e.1 = e.1.min(p.y);
        e.2 = e.2.max(p.x);
        e.3 = e.3.max(p.y);
    }
    Ok(e)
}

/// Scales and translates `mean` so its tight box coincides with `bbox`.
///
/// The fit is anisotropic: x and y are scaled independently.
pub fn align_mean_shape(mean: &Shape, bbox: &BoundingBox) -> Result<Shape> {
    bbox.validate()?;
    let (min_x, min_y, max_x, max_y) = extent(mean.points())?;
    let (mw, mh) = (max_x - min_x, max_y - min_y);
    if mw <= 0.0 || mh <= 0.0 {
        return Err(Error::InvalidModel(
            "mean shape has zero extent on an axis".into(),
        ));
    }
    let (sx, sy) = (bbox.w / mw, bbox.h / mh);
    mean.map_points(|p| Point::new(bbox.x + (p.x - min_x) * sx, bbox.y + (p.y - min_y) * sy))
}

/// Box-normalised pointwise average: every shape is mapped so its tight box
/// becomes the unit square, then coordinates are averaged.
pub fn mean_shape(shapes: &[Shape]) -> Result<Shape> {
    let l = shapes
        .first()
        .ok_or_else(|| Error::InvalidInput("mean of an empty shape list".into()))?
        .len();
    let mut normalised = Vec::with_capacity(shapes.len());
    for s in shapes {
        if s.len() != l {
            return Err(Error::InvalidInput(format!(
                "mixed landmark counts: {} and {}",
                l,
                s.len()
            )));
        }
        let b = shape_bbox(s)?;
        normalised.push(s.map_points(|p| Point::new((p.x - b.x) / b.w, (p.y - b.y) / b.h))?);
    }
    Shape::pointwise_mean(&normalised)
}

/// One primitive step of a [`PlanarTransform`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformStep {
    /// Rotation by `degrees` about `centre`, followed by a translation of
    /// `offset` (the canvas expansion).
    ///
    /// A positive angle increases the roll measured by
    /// [`crate::pose::roll_from_landmarks`].
    Rotation {
        degrees: f64,
        centre: Point,
        offset: Point,
        in_size: (usize, usize),
        out_size: (usize, usize),
    },
    /// `x -> width - 1 - x`.
    HorizontalFlip { width: usize, height: usize },
}

impl TransformStep {
    pub fn apply(&self, p: Point) -> Point {
        match *self {
            TransformStep::Rotation {
                degrees,
                centre,
                offset,
                ..
            } => {
                let (s, c) = degrees.to_radians().sin_cos();
                let (dx, dy) = (p.x - centre.x, p.y - centre.y);
                Point::new(
                    centre.x + offset.x + dx * c + dy * s,
                    centre.y + offset.y - dx * s + dy * c,
                )
            }
            TransformStep::HorizontalFlip { width, .. } => {
                Point::new(width as f64 - 1.0 - p.x, p.y)
            }
        }
    }

    pub fn inverse(&self) -> TransformStep {
        match *self {
            TransformStep::Rotation {
                degrees,
                centre,
                offset,
                in_size,
                out_size,
            } => TransformStep::Rotation {
                degrees: -degrees,
                centre: Point::new(centre.x + offset.x, centre.y + offset.y),
                offset: Point::new(-offset.x, -offset.y),
                in_size: out_size,
                out_size: in_size,
            },
            flip @ TransformStep::HorizontalFlip { .. } => flip,
        }
    }

    pub fn output_size(&self) -> (usize, usize) {
        match *self {
            TransformStep::Rotation { out_size, .. } => out_size,
            TransformStep::HorizontalFlip { width, height } => (width, height),
        }
    }
}

/// An ordered sequence of rotations and flips; empty means identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanarTransform {
    steps: Vec<TransformStep>,
}

impl PlanarTransform {
    pub fn identity() -> Self {
        PlanarTransform::default()
    }

    /// Rotation about the centre of a `width x height` image, with the
    /// canvas grown so the rotated image fits entirely.
    pub fn rotation_about_centre(degrees: f64, width: usize, height: usize) -> Self {
        let centre = Point::new((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let probe = TransformStep::Rotation {
            degrees,
            centre,
            offset: Point::default(),
            in_size: (width, height),
            out_size: (width, height),
        };
        let corners = [
            Point::new(0.0, 0.0),
            Point::new(width as f64 - 1.0, 0.0),
            Point::new(0.0, height as f64 - 1.0),
            Point::new(width as f64 - 1.0, height as f64 - 1.0),
        ]
        .map(|p| probe.apply(p));
        let span = |f: fn(&Point) -> f64| {
            let lo = corners.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = corners.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        // Snap tiny floating noise so 90-degree turns keep exact sizes.
        let out_w = ((span(|p| p.x) - 1e-6).ceil().max(0.0) as usize) + 1;
        let out_h = ((span(|p| p.y) - 1e-6).ceil().max(0.0) as usize) + 1;
        let new_centre = Point::new((out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0);
        PlanarTransform {
            steps: vec![TransformStep::Rotation {
                degrees,
                centre,
                offset: Point::new(new_centre.x - centre.x, new_centre.y - centre.y),
                in_size: (width, height),
                out_size: (out_w, out_h),
            }],
        }
    }

    pub fn horizontal_flip(width: usize, height: usize) -> Self {
        PlanarTransform {
            steps: vec![TransformStep::HorizontalFlip { width, height }],
        }
    }

    /// `self` followed by `next`.
    pub fn then(mut self, next: &PlanarTransform) -> Self {
        self.steps.extend_from_slice(&next.steps);
        self
    }

    pub fn inverse(&self) -> Self {
        PlanarTransform {
            steps: self.steps.iter().rev().map(TransformStep::inverse).collect(),
        }
    }

    pub fn steps(&self) -> &[TransformStep] {
        &self.steps
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    /// Whether the transform mirrors the plane (odd number of flips).
    pub fn is_mirroring(&self) -> bool {
        self.steps
            .iter()
            .filter(|s| matches!(s, TransformStep::HorizontalFlip { .. }))
            .count()
            % 2
            == 1
    }

    pub fn apply_point(&self, p: Point) -> Point {
        self.steps.iter().fold(p, |p, s| s.apply(p))
    }

    /// Canvas size after the transform, given the input canvas size.
    pub fn output_size(&self, input: (usize, usize)) -> (usize, usize) {
        self.steps.last().map_or(input, |s| s.output_size())
    }

    /// Tight box around the transformed corners of `b`.
    pub fn apply_box(&self, b: &BoundingBox) -> BoundingBox {
        let pts = b.corners().map(|p| self.apply_point(p));
        let min_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let min_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let max_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        BoundingBox::from_extent(min_x, min_y, max_x, max_y)
    }
}

/// Maps every landmark through `t`. Landmark order is unchanged.
pub fn apply_transform(shape: &Shape, t: &PlanarTransform) -> Result<Shape> {
    shape.map_points(|p| t.apply_point(p))
}
