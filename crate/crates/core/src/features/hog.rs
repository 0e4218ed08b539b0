//! Histogram of oriented gradients over a square patch.

use super::patch::Patch;
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq)]
pub struct HogConfig {
    /// Cells along each side of the patch.
    pub cells: usize,
    pub bins: usize,
    /// Signed orientations cover 360 degrees, unsigned 180.
    pub signed: bool,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            cells: 2,
            bins: 9,
            signed: false,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(Error::InvalidConfig("hog cells must be positive".into()));
        }
        if self.bins < 2 {
            return Err(Error::InvalidConfig("hog needs at least 2 orientation bins".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cells * self.cells * self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// HOG descriptor of the `side x side` patch centred on `centre`.
///
/// Pixels outside the image read as 0.
pub fn hog_patch(image: &GrayImage, centre: (f64, f64), side: usize, cfg: &HogConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if side < 4 {
        return Err(Error::InvalidConfig(format!("patch side {side} is below 4")));
    }
    if !(centre.0.is_finite() && centre.1.is_finite()) {
        return Err(Error::InvalidInput("patch centre must be finite".into()));
    }
    let patch = Patch::around(image, centre, side, 1);
    let mut out = Vec::with_capacity(cfg.len());
    hog_into(&patch, cfg.cells, cfg, &mut out);
    Ok(out)
}

/// Appends the HOG of the patch interior, split into `cells x cells` cells.
///
/// Gradients are central differences; each pixel votes its magnitude into
/// the two nearest orientation bins (bin `k` is centred on `k * range / bins`).
/// Every cell histogram is then L2-normalised.
pub(crate) fn hog_into(patch: &Patch, cells: usize, cfg: &HogConfig, out: &mut Vec<f64>) {
    debug_assert!(patch.border >= 1);
    let bins = cfg.bins;
    let range = if cfg.signed { 360.0 } else { 180.0 };
    let width = range / bins as f64;
    let start = out.len();
    out.resize(start + cells * cells * bins, 0.0);
    let hist = &mut out[start..];

    for j in 0..patch.ny {
        let cy = j * cells / patch.ny;
        for i in 0..patch.nx {
            let (ii, jj) = (i as isize, j as isize);
            let gx = 0.5 * (patch.at(ii + 1, jj) - patch.at(ii - 1, jj));
            let gy = 0.5 * (patch.at(ii, jj + 1) - patch.at(ii, jj - 1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 360.0;
            }
            if !cfg.signed && angle >= 180.0 {
                angle -= 180.0;
            }
            let pos = angle / width;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as usize) % bins;
            let b1 = (b0 + 1) % bins;
            let cx = i * cells / patch.nx;
            let base = (cy * cells + cx) * bins;
            hist[base + b0] += mag * (1.0 - frac);
            hist[base + b1] += mag * frac;
        }
    }

    for cell in hist.chunks_mut(bins) {
        let norm = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            cell.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_image_gives_zero_descriptor() {
        let img = GrayImage::from_fn(40, 40, |_, _| 0.6);
        let d = hog_patch(&img, (20.0, 20.0), 16, &HogConfig::default()).unwrap();
        assert_eq!(d.len(), 36);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_votes_only_horizontal_gradient_bin() {
        let img = GrayImage::from_fn(32, 32, |x, _| if x < 16 { 0.2 } else { 0.9 });
        let cfg = HogConfig {
            cells: 1,
            bins: 4,
            signed: false,
        };
        let d = hog_patch(&img, (16.0, 16.0), 8, &cfg).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert_eq!(&d[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_tiny_patches() {
        let img = GrayImage::zeros(8, 8);
        assert!(hog_patch(&img, (4.0, 4.0), 3, &HogConfig::default()).is_err());
    }

    /// Straightforward per-pixel histogram straight from the image.
    fn naive_hog(img: &GrayImage, cx: i64, cy: i64, side: i64, cells: i64, bins: usize) -> Vec<f64> {
        let x0 = cx - side / 2;
        let y0 = cy - side / 2;
        let mut hist = vec![vec![0.0; bins]; (cells * cells) as usize];
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                let gx = (img.get(x + 1, y) - img.get(x - 1, y)) / 2.0;
                let gy = (img.get(x, y + 1) - img.get(x, y - 1)) / 2.0;
                let m = (gx * gx + gy * gy).sqrt();
                if m == 0.0 {
                    continue;
                }
                let mut a = gy.atan2(gx).to_degrees();
                while a < 0.0 {
                    a += 180.0;
                }
                while a >= 180.0 {
                    a -= 180.0;
                }
                let w = 180.0 / bins as f64;
                let k = (a / w).floor();
                let t = a / w - k;
                let cell = (((y - y0) * cells / side) * cells + (x - x0) * cells / side) as usize;
                hist[cell][k as usize % bins] += m * (1.0 - t);
                hist[cell][(k as usize + 1) % bins] += m * t;
            }
        }
        let mut out = Vec::new();
        for h in hist {
            let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            out.extend(h.iter().map(|v| if n > 1e-12 { v / n } else { 0.0 }));
        }
        out
    }

    #[test]
    fn matches_naive_oracle_on_random_patch() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let img = GrayImage::from_fn(30, 30, |_, _| rng.random::<f64>());
        let cfg = HogConfig {
            cells: 2,
            bins: 9,
            signed: false,
        };
        let got = hog_patch(&img, (14.0, 15.0), 16, &cfg).unwrap();
        let want = naive_hog(&img, 14, 15, 16, 2, 9);
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // A patch reaching past the image border still agrees.
        let got = hog_patch(&img, (2.0, 27.0), 16, &cfg).unwrap();
        let want = naive_hog(&img, 2, 27, 16, 2, 9);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cell_norms_bounded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let img = GrayImage::from_fn(50, 50, |_, _| rng.random::<f64>());
        let cfg = HogConfig {
            cells: 3,
            bins: 12,
            signed: true,
        };
        let d = hog_patch(&img, (21.3, 30.7), 24, &cfg).unwrap();
        for cell in d.chunks(12) {
            let n: f64 = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n <= 1.0 + 1e-9);
        }
    }
}
