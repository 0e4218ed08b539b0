//! Shape-indexed features: local HOG and LBP around each landmark plus a
//! dense contextual HOG over the patch enclosing all landmarks.

mod hog;
mod lbp;
pub(crate) mod patch;

pub use hog::{hog_patch, HogConfig};
pub use lbp::{lbp_patch, transitions, LbpConfig, RAW_BINS, UNIFORM_BINS};

pub(crate) use hog::hog_into;
pub(crate) use lbp::lbp_into;

use crate::error::{Error, Result};
use crate::geometry::{shape_bbox, BoundingBox, Shape};
use crate::image::GrayImage;
use patch::Patch;

/// Dense descriptor over the box enclosing the current shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextConfig {
    /// The box is resampled to a `size x size` grid.
    pub size: usize,
    /// HOG cells along each side of the grid.
    pub cells: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig { size: 64, cells: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// Patch side at scale 1.0, in pixels.
    pub patch_size: usize,
    /// Patch-size multipliers.
    pub scales: Vec<f64>,
    /// When set, patch sides are further scaled by `max(w, h) / reference`
    /// of the current shape box.
    pub relative_to: Option<f64>,
    pub hog: HogConfig,
    pub lbp: LbpConfig,
    pub context: Option<ContextConfig>,
    /// Append a constant 1.
    pub bias: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            patch_size: 32,
            scales: vec![0.5, 1.0],
            relative_to: None,
            hog: HogConfig::default(),
            lbp: LbpConfig::default(),
            context: Some(ContextConfig::default()),
            bias: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 4 {
            return Err(Error::InvalidConfig(format!(
                "patch_size must be at least 4, got {}",
                self.patch_size
            )));
        }
        if self.scales.is_empty() {
            return Err(Error::InvalidConfig("scales must not be empty".into()));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig("scales must be positive".into()));
        }
        if let Some(r) = self.relative_to {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidConfig("relative patch reference must be positive".into()));
            }
        }
        if let Some(c) = &self.context {
            if c.cells == 0 || c.size < c.cells {
                return Err(Error::InvalidConfig("context grid must be at least one cell per pixel".into()));
            }
        }
        self.hog.validate()?;
        self.lbp.validate()
    }

    /// Length of the descriptor for `landmarks` points.
    pub fn dimension(&self, landmarks: usize) -> usize {
        let local = self.scales.len() * (self.hog.len() + self.lbp.bins);
        let context = self
            .context
            .as_ref()
            .map_or(0, |c| c.cells * c.cells * self.hog.bins);
        landmarks * local + context + usize::from(self.bias)
    }

    fn side(&self, scale: f64, frame: &BoundingBox) -> usize {
        let rel = self.relative_to.map_or(1.0, |r| frame.w.max(frame.h) / r);
        ((self.patch_size as f64 * scale * rel).round() as usize).max(4)
    }
}

/// Feature vector `f(I, s)`.
///
/// Layout: for each landmark in order, for each scale, HOG then LBP; then
/// the contextual HOG; then the optional constant 1.
pub fn shape_features(image: &GrayImage, shape: &Shape, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let frame = shape_bbox(shape)?;
    let border = cfg.lbp.radius.max(1);
    let mut out = Vec::with_capacity(cfg.dimension(shape.len()));
    for p in shape.points() {
        for &scale in &cfg.scales {
            let side = cfg.side(scale, &frame);
            let patch = Patch::around(image, (p.x, p.y), side, border);
            hog_into(&patch, cfg.hog.cells, &cfg.hog, &mut out);
            lbp_into(&patch, &cfg.lbp, &mut out);
        }
    }
    if let Some(ctx) = &cfg.context {
        let patch = resample_box(image, &frame, ctx.size, 1);
        hog_into(&patch, ctx.cells, &cfg.hog, &mut out);
    }
    if cfg.bias {
        out.push(1.0);
    }
    debug_assert_eq!(out.len(), cfg.dimension(shape.len()));
    Ok(out)
}

/// Resamples the inside of `b` onto an `n x n` grid of cell-centred samples.
pub(crate) fn resample_box(image: &GrayImage, b: &BoundingBox, n: usize, border: usize) -> Patch {
    let step = (b.w / n as f64, b.h / n as f64);
    let origin = (b.x + 0.5 * step.0 - 0.5, b.y + 0.5 * step.1 - 0.5);
    Patch::sample(image, origin, step, n, n, border)
}
