//! Cascaded bounding-box regression.
//!
//! Each stage predicts the normalised offsets
//! `(dx / w, dy / h, ln(w* / w), ln(h* / h))` from the current box to the
//! target box, using multi-scale HOG and LBP of the box contents resampled
//! to a canonical grid. The same machinery serves as a whole-image face
//! detector and as a per-detector box refiner.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{hog_into, lbp_into, resample_box, HogConfig, LbpConfig};
use crate::geometry::BoundingBox;
use crate::image::GrayImage;
use crate::regression::{default_lambda, predict_update, train_weak, WeakRegressor};

pub const BOX_OFFSETS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxFeatureConfig {
    /// Side of the canonical grid at scale 1.0.
    pub canonical: usize,
    pub scales: Vec<f64>,
    pub hog: HogConfig,
    pub lbp: LbpConfig,
}

impl Default for BoxFeatureConfig {
    fn default() -> Self {
        BoxFeatureConfig {
            canonical: 96,
            scales: vec![0.5, 1.0],
            hog: HogConfig {
                cells: 4,
                bins: 9,
                signed: false,
            },
            lbp: LbpConfig::default(),
        }
    }
}

impl BoxFeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.canonical < 4 {
            return Err(Error::InvalidConfig("canonical box size must be at least 4".into()));
        }
        if self.scales.is_empty() || self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig("box scales must be non-empty and positive".into()));
        }
        self.hog.validate()?;
        self.lbp.validate()
    }

    pub fn dimension(&self) -> usize {
        self.scales.len() * (self.hog.len() + self.lbp.bins)
    }

    fn grid(&self, scale: f64) -> usize {
        ((self.canonical as f64 * scale).round() as usize).max(4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitPolicy {
    WholeImage,
    ExternalBox,
}

/// Where a box cascade starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxInit {
    WholeImage,
    External(BoundingBox),
}

impl BoxInit {
    fn resolve(&self, policy: InitPolicy, image: &GrayImage) -> Result<BoundingBox> {
        match (policy, self) {
            (InitPolicy::WholeImage, BoxInit::WholeImage) => {
                Ok(BoundingBox::whole_image(image.width(), image.height()))
            }
            (InitPolicy::ExternalBox, BoxInit::External(b)) => {
                b.validate()?;
                Ok(*b)
            }
            _ => Err(Error::InvalidInput(format!(
                "initialisation {self:?} does not match the model policy {policy:?}"
            ))),
        }
    }
}

/// Normalised offsets from `current` to `target`.
pub fn encode_box(target: &BoundingBox, current: &BoundingBox) -> [f64; 4] {
    [
        (target.x - current.x) / current.w,
        (target.y - current.y) / current.h,
        (target.w / current.w).ln(),
        (target.h / current.h).ln(),
    ]
}

/// Inverse of [`encode_box`]. Width and height are not clamped here.
pub fn decode_box(offsets: &[f64], current: &BoundingBox) -> BoundingBox {
    BoundingBox::new_unchecked(
        current.x + offsets[0] * current.w,
        current.y + offsets[1] * current.h,
        current.w * offsets[2].exp(),
        current.h * offsets[3].exp(),
    )
}

/// Applies one predicted update, keeping the box at least 1 pixel wide and
/// tall.
fn step_box(offsets: &[f64], current: &BoundingBox) -> Result<BoundingBox> {
    let mut b = decode_box(offsets, current);
    b.w = b.w.max(1.0);
    b.h = b.h.max(1.0);
    b.validate()?;
    Ok(b)
}

/// Multi-scale HOG + LBP of the box contents.
///
/// The part of the box inside the image is resampled to the canonical grid
/// at every scale.
pub fn box_features(image: &GrayImage, bbox: &BoundingBox, cfg: &BoxFeatureConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    bbox.validate()?;
    let region = clip_to_image(bbox, image);
    let border = cfg.lbp.radius.max(1);
    let mut out = Vec::with_capacity(cfg.dimension());
    for &scale in &cfg.scales {
        let patch = resample_box(image, &region, cfg.grid(scale), border);
        hog_into(&patch, cfg.hog.cells, &cfg.hog, &mut out);
        lbp_into(&patch, &cfg.lbp, &mut out);
    }
    Ok(out)
}

fn clip_to_image(b: &BoundingBox, image: &GrayImage) -> BoundingBox {
    let x0 = b.x.max(0.0);
    let y0 = b.y.max(0.0);
    let x1 = b.right().min(image.width() as f64);
    let y1 = b.bottom().min(image.height() as f64);
    if x1 - x0 >= 1.0 && y1 - y0 >= 1.0 {
        BoundingBox::new_unchecked(x0, y0, x1 - x0, y1 - y0)
    } else {
        *b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxCascadeModel {
    stages: Vec<WeakRegressor>,
    feature_config: BoxFeatureConfig,
    init_policy: InitPolicy,
    lambda: f64,
    /// Mean training IoU: the initial value, then one entry per stage.
    mean_iou: Vec<f64>,
}

impl BoxCascadeModel {
    pub fn new(
        stages: Vec<WeakRegressor>,
        feature_config: BoxFeatureConfig,
        init_policy: InitPolicy,
        lambda: f64,
        mean_iou: Vec<f64>,
    ) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidModel("a box cascade needs at least one stage".into()));
        }
        feature_config.validate()?;
        let dim = feature_config.dimension();
        for (m, s) in stages.iter().enumerate() {
            if s.output_dim() != BOX_OFFSETS || s.feature_dim() != dim {
                return Err(Error::InvalidModel(format!(
                    "box stage {} is {}x{}, expected {}x{}",
                    m + 1,
                    s.output_dim(),
                    s.feature_dim(),
                    BOX_OFFSETS,
                    dim
                )));
            }
        }
        Ok(BoxCascadeModel {
            stages,
            feature_config,
            init_policy,
            lambda,
            mean_iou,
        })
    }

    /// A model whose stages are all zero: it returns its initial box.
    pub fn identity(feature_config: BoxFeatureConfig, init_policy: InitPolicy, stages: usize) -> Result<Self> {
        let dim = feature_config.dimension();
        BoxCascadeModel::new(
            (0..stages).map(|_| WeakRegressor::zeros(BOX_OFFSETS, dim)).collect(),
            feature_config,
            init_policy,
            0.0,
            Vec::new(),
        )
    }

    pub fn stages(&self) -> &[WeakRegressor] {
        &self.stages
    }

    pub fn feature_config(&self) -> &BoxFeatureConfig {
        &self.feature_config
    }

    pub fn init_policy(&self) -> InitPolicy {
        self.init_policy
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mean_iou(&self) -> &[f64] {
        &self.mean_iou
    }
}

#[derive(Debug, Clone)]
pub struct BoxSample {
    pub image: GrayImage,
    /// Landmark-tight ground-truth box.
    pub gt_box: BoundingBox,
    /// Required for [`InitPolicy::ExternalBox`], ignored otherwise.
    pub init_box: Option<BoundingBox>,
}

fn mean_iou(boxes: &[BoundingBox], samples: &[BoxSample]) -> f64 {
    boxes.iter().zip(samples).map(|(b, s)| b.iou(&s.gt_box)).sum::<f64>() / boxes.len().max(1) as f64
}

/// Trains a box cascade and returns it with the training trajectory
/// (`trace[m][n]` is sample `n`'s box after `m` stages).
pub fn train_box_cascade_traced(
    samples: &[BoxSample],
    stages: usize,
    policy: InitPolicy,
    lambda: Option<f64>,
    cfg: &BoxFeatureConfig,
) -> Result<(BoxCascadeModel, Vec<Vec<BoundingBox>>)> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no box training samples".into()));
    }
    if stages == 0 {
        return Err(Error::InvalidConfig("a box cascade needs at least one stage".into()));
    }
    cfg.validate()?;
    let lambda = lambda.unwrap_or_else(|| default_lambda(cfg.dimension()));
    let mut boxes: Vec<BoundingBox> = samples
        .iter()
        .map(|s| {
            s.gt_box.validate()?;
            let init = match (policy, s.init_box) {
                (InitPolicy::WholeImage, _) => BoxInit::WholeImage,
                (InitPolicy::ExternalBox, Some(b)) => BoxInit::External(b),
                (InitPolicy::ExternalBox, None) => {
                    return Err(Error::InvalidInput(
                        "external-box training needs an initial box per sample".into(),
                    ))
                }
            };
            init.resolve(policy, &s.image)
        })
        .collect::<Result<_>>()?;
    let mut ious = vec![mean_iou(&boxes, samples)];
    let mut trace = vec![boxes.clone()];
    let mut regressors = Vec::with_capacity(stages);

    for m in 0..stages {
        let features: Vec<Vec<f64>> = samples
            .par_iter()
            .zip(&boxes)
            .map(|(s, b)| box_features(&s.image, b, cfg))
            .collect::<Result<_>>()?;
        let targets: Vec<Vec<f64>> = samples
            .iter()
            .zip(&boxes)
            .map(|(s, b)| encode_box(&s.gt_box, b).to_vec())
            .collect();
        let w = train_weak(&features, &targets, lambda)?;
        boxes = boxes
            .iter()
            .zip(&features)
            .map(|(b, f)| step_box(&predict_update(&w, f)?, b))
            .collect::<Result<_>>()?;
        ious.push(mean_iou(&boxes, samples));
        trace.push(boxes.clone());
        log::info!("box stage {}/{}: mean IoU {:.4} -> {:.4}", m + 1, stages, ious[m], ious[m + 1]);
        regressors.push(w);
    }
    let model = BoxCascadeModel::new(regressors, cfg.clone(), policy, lambda, ious)?;
    Ok((model, trace))
}

pub fn train_box_cascade(
    samples: &[BoxSample],
    stages: usize,
    policy: InitPolicy,
    lambda: Option<f64>,
    cfg: &BoxFeatureConfig,
) -> Result<BoxCascadeModel> {
    train_box_cascade_traced(samples, stages, policy, lambda, cfg).map(|(m, _)| m)
}

/// Every box visited by the cascade, starting with the initial one.
pub fn box_cascade_trajectory(model: &BoxCascadeModel, image: &GrayImage, init: BoxInit) -> Result<Vec<BoundingBox>> {
    let mut current = init.resolve(model.init_policy, image)?;
    let mut out = vec![current];
    for stage in &model.stages {
        let f = box_features(image, &current, &model.feature_config)?;
        current = step_box(&predict_update(stage, &f)?, &current)?;
        out.push(current);
    }
    Ok(out)
}

pub fn apply_box_cascade(model: &BoxCascadeModel, image: &GrayImage, init: BoxInit) -> Result<BoundingBox> {
    Ok(*box_cascade_trajectory(model, image, init)?
        .last()
        .expect("trajectory holds the initial box"))
}
