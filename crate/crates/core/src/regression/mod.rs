//! Cascaded shape regression: a sequence of ridge weak regressors, each
//! mapping shape-indexed features to a shape update.

mod ridge;

pub use ridge::{predict_update, train_weak, WeakRegressor};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{shape_features, FeatureConfig};
use crate::geometry::{align_mean_shape, mean_shape, BoundingBox, Shape};
use crate::image::GrayImage;

/// Default ridge weight: `1e-3 * N_f`.
pub fn default_lambda(feature_dim: usize) -> f64 {
    1e-3 * feature_dim as f64
}

/// One annotated training face with the box its estimate starts from.
#[derive(Debug, Clone)]
pub struct ShapeSample {
    pub image: GrayImage,
    pub shape: Shape,
    pub init_box: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    stages: Vec<WeakRegressor>,
    mean_shape: Shape,
    feature_config: FeatureConfig,
    lambda: f64,
    /// Root-mean-square residual norm over the training set: the initial
    /// value followed by one entry per stage.
    residuals: Vec<f64>,
}

impl CascadeModel {
    pub fn new(
        stages: Vec<WeakRegressor>,
        mean_shape: Shape,
        feature_config: FeatureConfig,
        lambda: f64,
        residuals: Vec<f64>,
    ) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidModel("a cascade needs at least one stage".into()));
        }
        feature_config.validate()?;
        let out = 2 * mean_shape.len();
        let dim = feature_config.dimension(mean_shape.len());
        for (m, s) in stages.iter().enumerate() {
            if s.output_dim() != out || s.feature_dim() != dim {
                return Err(Error::InvalidModel(format!(
                    "stage {} is {}x{}, expected {}x{}",
                    m + 1,
                    s.output_dim(),
                    s.feature_dim(),
                    out,
                    dim
                )));
            }
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidModel(format!("invalid lambda {lambda}")));
        }
        Ok(CascadeModel {
            stages,
            mean_shape,
            feature_config,
            lambda,
            residuals,
        })
    }

    /// A cascade whose stages are all zero: it returns the aligned mean shape.
    pub fn zero_stages(mean_shape: Shape, feature_config: FeatureConfig, stages: usize) -> Result<Self> {
        let dim = feature_config.dimension(mean_shape.len());
        let out = 2 * mean_shape.len();
        CascadeModel::new(
            (0..stages).map(|_| WeakRegressor::zeros(out, dim)).collect(),
            mean_shape,
            feature_config,
            0.0,
            Vec::new(),
        )
    }

    pub fn stages(&self) -> &[WeakRegressor] {
        &self.stages
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn landmarks(&self) -> usize {
        self.mean_shape.len()
    }

    pub fn mean_shape(&self) -> &Shape {
        &self.mean_shape
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.feature_config
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_config.dimension(self.landmarks())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }
}

/// Root-mean-square of per-sample residual norms.
pub fn rms_residual(estimates: &[Shape], truths: &[Shape]) -> Result<f64> {
    let mut sum = 0.0;
    for (s, t) in estimates.iter().zip(truths) {
        sum += s.residual_to(t)?.iter().map(|v| v * v).sum::<f64>();
    }
    Ok((sum / estimates.len().max(1) as f64).sqrt())
}

/// Trains an `stages`-stage cascade.
///
/// Each stage is fitted to the residuals left by the stages before it and
/// the training estimates are then advanced with its predictions. When
/// `lambda` is `None`, [`default_lambda`] is used.
pub fn train_cascade(
    samples: &[ShapeSample],
    stages: usize,
    lambda: Option<f64>,
    cfg: &FeatureConfig,
) -> Result<CascadeModel> {
    train_cascade_traced(samples, stages, lambda, cfg).map(|(model, _)| model)
}

/// Like [`train_cascade`], also returning the training estimates:
/// `trace[m][n]` is sample `n`'s estimate after `m` stages.
pub fn train_cascade_traced(
    samples: &[ShapeSample],
    stages: usize,
    lambda: Option<f64>,
    cfg: &FeatureConfig,
) -> Result<(CascadeModel, Vec<Vec<Shape>>)> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    if stages == 0 {
        return Err(Error::InvalidConfig("a cascade needs at least one stage".into()));
    }
    cfg.validate()?;
    let truths: Vec<Shape> = samples.iter().map(|s| s.shape.clone()).collect();
    let mean = mean_shape(&truths)?;
    let lambda = lambda.unwrap_or_else(|| default_lambda(cfg.dimension(mean.len())));

    let mut estimates: Vec<Shape> = samples
        .iter()
        .map(|s| align_mean_shape(&mean, &s.init_box))
        .collect::<Result<_>>()?;
    let mut residuals = vec![rms_residual(&estimates, &truths)?];
    let mut trace = vec![estimates.clone()];
    let mut regressors = Vec::with_capacity(stages);

    for m in 0..stages {
        let features: Vec<Vec<f64>> = samples
            .par_iter()
            .zip(&estimates)
            .map(|(s, est)| shape_features(&s.image, est, cfg))
            .collect::<Result<_>>()?;
        let targets: Vec<Vec<f64>> = estimates
            .iter()
            .zip(&truths)
            .map(|(est, gt)| est.residual_to(gt))
            .collect::<Result<_>>()?;
        let w = train_weak(&features, &targets, lambda)?;
        estimates = estimates
            .iter()
            .zip(&features)
            .map(|(est, f)| est.add_update(&predict_update(&w, f)?))
            .collect::<Result<_>>()?;
        residuals.push(rms_residual(&estimates, &truths)?);
        trace.push(estimates.clone());
        log::info!(
            "stage {}/{}: rms residual {:.4} -> {:.4}",
            m + 1,
            stages,
            residuals[m],
            residuals[m + 1]
        );
        regressors.push(w);
    }

    let model = CascadeModel::new(regressors, mean, cfg.clone(), lambda, residuals)?;
    Ok((model, trace))
}

/// Runs the cascade from the mean shape fitted to `bbox`.
pub fn apply_cascade(model: &CascadeModel, image: &GrayImage, bbox: &BoundingBox) -> Result<Shape> {
    let mut traj = cascade_trajectory(model, image, bbox)?;
    Ok(traj.pop().expect("trajectory holds the initial estimate"))
}

/// Every estimate produced while running the cascade, starting with the
/// aligned mean shape and ending with the final output.
pub fn cascade_trajectory(model: &CascadeModel, image: &GrayImage, bbox: &BoundingBox) -> Result<Vec<Shape>> {
    if model.stages.is_empty() {
        return Err(Error::InvalidModel("a cascade needs at least one stage".into()));
    }
    let mut current = align_mean_shape(&model.mean_shape, bbox)?;
    let mut out = Vec::with_capacity(model.stages.len() + 1);
    out.push(current.clone());
    for stage in &model.stages {
        let f = shape_features(image, &current, &model.feature_config)?;
        current = current.add_update(&predict_update(stage, &f)?)?;
        out.push(current.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shape_bbox;

    fn small_cfg() -> FeatureConfig {
        FeatureConfig {
            patch_size: 8,
            scales: vec![1.0],
            hog: crate::features::HogConfig {
                cells: 1,
                bins: 4,
                signed: false,
            },
            lbp: crate::features::LbpConfig { radius: 1, bins: 59 },
            context: None,
            ..FeatureConfig::default()
        }
    }

    fn square() -> Shape {
        Shape::from_xy(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]).unwrap()
    }

    #[test]
    fn zero_stage_count_is_rejected() {
        assert!(matches!(
            CascadeModel::zero_stages(square(), small_cfg(), 0),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn zero_stages_return_aligned_mean() {
        let model = CascadeModel::zero_stages(square(), small_cfg(), 3).unwrap();
        let img = GrayImage::from_fn(40, 40, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        let b = BoundingBox::new(5.0, 6.0, 20.0, 25.0).unwrap();
        let got = apply_cascade(&model, &img, &b).unwrap();
        assert_eq!(got, align_mean_shape(&square(), &b).unwrap());
    }

    #[test]
    fn zero_residual_training() {
        let img = GrayImage::from_fn(40, 40, |x, y| ((x * 5 + y * 9) % 13) as f64 / 12.0);
        let shape = Shape::from_xy(&[(10.0, 10.0), (30.0, 12.0), (12.0, 28.0), (29.0, 30.0)]).unwrap();
        let samples: Vec<ShapeSample> = (0..3)
            .map(|_| ShapeSample {
                image: img.clone(),
                shape: shape.clone(),
                init_box: shape_bbox(&shape).unwrap(),
            })
            .collect();
        let model = train_cascade(&samples, 1, Some(1.0), &small_cfg()).unwrap();
        // Every sample starts exactly on its ground truth.
        assert!(model.residuals()[0] < 1e-12);
        assert!(model.stages()[0].a.norm() < 1e-9);
        let out = apply_cascade(&model, &img, &shape_bbox(&shape).unwrap()).unwrap();
        for (p, q) in out.points().iter().zip(shape.points()) {
            assert!(p.distance(q) < 1e-9);
        }
    }

    #[test]
    fn inference_replays_training_estimates() {
        let img = GrayImage::from_fn(48, 48, |x, y| {
            let d = ((x as f64 - 24.0).powi(2) + (y as f64 - 20.0).powi(2)).sqrt();
            (1.0 - d / 40.0).max(0.0)
        });
        let gt = Shape::from_xy(&[(14.0, 14.0), (34.0, 15.0), (24.0, 24.0), (16.0, 32.0), (32.0, 33.0)]).unwrap();
        let samples: Vec<ShapeSample> = [(-2.0, 1.0), (1.5, -1.0), (0.0, 2.0), (2.0, 2.0)]
            .iter()
            .map(|&(dx, dy)| {
                let b = shape_bbox(&gt).unwrap();
                ShapeSample {
                    image: img.clone(),
                    shape: gt.clone(),
                    init_box: BoundingBox::new(b.x + dx, b.y + dy, b.w, b.h).unwrap(),
                }
            })
            .collect();
        let (model, trace) = train_cascade_traced(&samples, 3, Some(0.5), &small_cfg()).unwrap();
        for (n, sample) in samples.iter().enumerate() {
            let replay = cascade_trajectory(&model, &img, &sample.init_box).unwrap();
            assert_eq!(replay.len(), 4);
            for (m, est) in replay.iter().enumerate() {
                assert_eq!(est, &trace[m][n], "sample {n}, stage {m}");
            }
        }
        for w in model.residuals().windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }
}
