use crate::error::{Error, Result};
use crate::geometry::{PlanarTransform, Point, TransformStep};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image must be non-empty".into()));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("intensities must lie in [0, 1]".into()));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Builds an image from a closure; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0) as f32);
            }
        }
        GrayImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Pixel value; anything outside the image reads as 0.
    #[inline]
    pub fn get(&self, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0.0
        } else {
            self.data[y as usize * self.width + x as usize] as f64
        }
    }

    /// Bilinear sample at a sub-pixel position, zero outside.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (xi, yi) = (x0 as i64, y0 as i64);
        if fx == 0.0 && fy == 0.0 {
            return self.get(xi, yi);
        }
        let top = self.get(xi, yi) * (1.0 - fx) + self.get(xi + 1, yi) * fx;
        let bottom = self.get(xi, yi + 1) * (1.0 - fx) + self.get(xi + 1, yi + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Warps an image through `t`.
///
/// Rotations resample bilinearly onto the expanded canvas recorded in the
/// transform; uncovered pixels are 0. Flips are exact.
pub fn apply_transform_image(image: &GrayImage, t: &PlanarTransform) -> Result<GrayImage> {
    let mut current = image.clone();
    for step in t.steps() {
        current = match *step {
            TransformStep::HorizontalFlip { width, height } => {
                if (width, height) != current.size() {
                    return Err(Error::InvalidInput(format!(
                        "flip expects a {width}x{height} image, got {}x{}",
                        current.width, current.height
                    )));
                }
                let mut data = current.data.clone();
                for row in data.chunks_mut(width) {
                    row.reverse();
                }
                GrayImage {
                    width,
                    height,
                    data,
                }
            }
            TransformStep::Rotation {
                in_size, out_size, ..
            } => {
                if in_size != current.size() {
                    return Err(Error::InvalidInput(format!(
                        "rotation expects a {}x{} image, got {}x{}",
                        in_size.0, in_size.1, current.width, current.height
                    )));
                }
                let inv = step.inverse();
                let src = &current;
                GrayImage::from_fn(out_size.0, out_size.1, |x, y| {
                    let p = inv.apply(Point::new(x as f64, y as f64));
                    src.sample(p.x, p.y)
                })
            }
        };
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values() {
        assert!(GrayImage::new(2, 1, vec![0.0, 1.5]).is_err());
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn bilinear_sampling() {
        let img = GrayImage::new(2, 2, vec![0.0, 1.0, 0.5, 0.5]).unwrap();
        assert_eq!(img.sample(0.0, 0.0), 0.0);
        assert!((img.sample(0.5, 0.0) - 0.5).abs() < 1e-12);
        assert!((img.sample(0.5, 0.5) - 0.5).abs() < 1e-7);
        assert_eq!(img.sample(-3.0, 0.0), 0.0);
        // Half a pixel past the edge blends with the zero border.
        assert!((img.sample(1.5, 0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flip_reverses_rows() {
        let img = GrayImage::new(3, 1, vec![0.1, 0.2, 0.3]).unwrap();
        let t = PlanarTransform::horizontal_flip(3, 1);
        let out = apply_transform_image(&img, &t).unwrap();
        assert_eq!(out.data(), &[0.3, 0.2, 0.1]);
    }

    #[test]
    fn quarter_turn_is_a_pixel_permutation() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x + 5 * y) as f64 / 15.0);
        let t = PlanarTransform::rotation_about_centre(90.0, 5, 3);
        let out = apply_transform_image(&img, &t).unwrap();
        assert_eq!(out.size(), (3, 5));
        for y in 0..3 {
            for x in 0..5 {
                let q = t.apply_point(Point::new(x as f64, y as f64));
                let v = out.get(q.x.round() as i64, q.y.round() as i64);
                assert!((v - img.get(x, y)).abs() < 1e-5, "({x},{y})");
            }
        }
    }
}
