//! The four-stage landmarking pipeline: box aggregation, rough landmarks,
//! pose normalisation and a perturbation ensemble of the final cascade.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregation::{aggregate, AggregationBranch, AggregationConfig, DetectionsBySource};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::geometry::{apply_transform, shape_bbox, BoundingBox, PlanarTransform, Shape};
use crate::image::{apply_transform_image, GrayImage};
use crate::markup::{Layout, LandmarkPermutation};
use crate::pose::{
    back_transform_landmarks, normalize_pose, rough_landmarks, yaw_side, PoseConfig, PoseEstimate, YawSide,
    ROUGH_STAGES,
};
use crate::regression::{apply_cascade, train_cascade, CascadeModel, ShapeSample};

/// Stage count of the final cascade unless configured otherwise.
pub const FINAL_STAGES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    /// Corner shift bound as a fraction of box width and height.
    pub magnitude: f64,
    /// Number of perturbed runs averaged.
    pub count: usize,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            magnitude: 0.05,
            count: 10,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.magnitude) {
            return Err(Error::InvalidConfig(format!(
                "perturbation magnitude must lie in [0, 0.5), got {}",
                self.magnitude
            )));
        }
        if self.count == 0 {
            return Err(Error::InvalidConfig("perturbation count must be positive".into()));
        }
        Ok(())
    }
}

/// Shifts both corners of `b` by independent uniform offsets within
/// `magnitude` times the box width and height.
///
/// Draws giving a side shorter than one pixel are retried up to ten times,
/// after which the sides are clamped to one pixel.
pub fn perturb_bbox<R: Rng + ?Sized>(b: &BoundingBox, magnitude: f64, rng: &mut R) -> BoundingBox {
    let mut out = jitter_with(b, magnitude, draw4(rng));
    for _ in 0..10 {
        if out.w >= 1.0 && out.h >= 1.0 {
            break;
        }
        out = jitter_with(b, magnitude, draw4(rng));
    }
    BoundingBox {
        w: out.w.max(1.0),
        h: out.h.max(1.0),
        ..out
    }
}

fn draw4<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    std::array::from_fn(|_| 2.0 * rng.random::<f64>() - 1.0)
}

/// Moves the corners of `b` by `m * (w, h)` times the offsets in `u`
/// (left, top, right, bottom), each in [-1, 1]. Sides are not clamped.
fn jitter_with(b: &BoundingBox, m: f64, u: [f64; 4]) -> BoundingBox {
    let (mx, my) = (m * b.w, m * b.h);
    // Width and height are updated directly so m = 0 returns `b` bit for bit.
    BoundingBox {
        x: b.x + mx * u[0],
        y: b.y + my * u[1],
        w: b.w + mx * (u[2] - u[0]),
        h: b.h + my * (u[3] - u[1]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentStage {
    PoseModel,
    FinalModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    pub stage: AugmentStage,
    pub layout: Layout,
    /// Add a mirrored copy of every image.
    pub flip: bool,
    /// Degrees; each copy gets a uniform angle from this interval.
    pub rotation_range: (f64, f64),
    pub samples_per_image: usize,
    /// Corner jitter of the initial box around the landmark box, as a
    /// fraction of its size. Keep it above the inference perturbation.
    pub init_jitter: f64,
}

impl AugmentationSpec {
    /// Training-set recipe for each model and layout.
    pub fn default_for(stage: AugmentStage, layout: Layout) -> Self {
        let (flip, rotation_range) = match (stage, layout) {
            (AugmentStage::PoseModel, Layout::SemiFrontal) => (false, (0.0, 360.0)),
            (AugmentStage::PoseModel, Layout::Profile) => (true, (-30.0, 30.0)),
            (AugmentStage::FinalModel, Layout::SemiFrontal) => (true, (-30.0, 30.0)),
            // Right-looking profiles are mirrored before rotation instead.
            (AugmentStage::FinalModel, Layout::Profile) => (false, (-30.0, 30.0)),
        };
        AugmentationSpec {
            stage,
            layout,
            flip,
            rotation_range,
            samples_per_image: 3,
            init_jitter: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.rotation_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(format!("bad rotation range ({lo}, {hi})")));
        }
        if self.samples_per_image == 0 {
            return Err(Error::InvalidConfig("samples_per_image must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.init_jitter) {
            return Err(Error::InvalidConfig(format!("init_jitter {} outside [0, 0.5)", self.init_jitter)));
        }
        Ok(())
    }
}

/// An annotated image before augmentation.
#[derive(Debug, Clone)]
pub struct AnnotatedImage {
    pub image: GrayImage,
    pub shape: Shape,
}

/// Expands `data` into training samples for one cascade.
///
/// Every image (plus its mirror when `spec.flip` is set) yields
/// `samples_per_image` copies, each rotated by a uniform angle from
/// `spec.rotation_range` about the image centre. Mirrored shapes are
/// relabelled with `perm`. For the final profile model, right-looking faces
/// are mirrored first so every sample looks left. Initial boxes are the
/// landmark box with `init_jitter` corner noise.
pub fn build_training_set(
    data: &[AnnotatedImage],
    spec: &AugmentationSpec,
    perm: &LandmarkPermutation,
    pose_cfg: &PoseConfig,
    seed: u64,
) -> Result<Vec<ShapeSample>> {
    spec.validate()?;
    let l = spec.layout.landmarks();
    if perm.len() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: perm.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::new();
    for (n, item) in data.iter().enumerate() {
        if item.shape.len() != l {
            return Err(Error::InvalidInput(format!(
                "annotation {} has {} points, layout {} needs {l}",
                n,
                item.shape.len(),
                spec.layout
            )));
        }
        let (w, h) = item.image.size();
        let flip = PlanarTransform::horizontal_flip(w, h);
        let mut bases = Vec::with_capacity(2);
        let canonicalise = spec.stage == AugmentStage::FinalModel
            && spec.layout == Layout::Profile
            && yaw_side(&item.shape, pose_cfg)? == YawSide::Right;
        if canonicalise {
            bases.push(flip.clone());
        } else {
            bases.push(PlanarTransform::identity());
        }
        if spec.flip {
            bases.push(if canonicalise { PlanarTransform::identity() } else { flip });
        }
        for base in bases {
            for _ in 0..spec.samples_per_image {
                let (lo, hi) = spec.rotation_range;
                let angle = if lo == hi { lo } else { rng.random_range(lo..hi) };
                let t = if angle == 0.0 {
                    base.clone()
                } else {
                    base.clone().then(&PlanarTransform::rotation_about_centre(angle, w, h))
                };
                // The init box is drawn in order so results do not depend on
                // the parallel warp below.
                jobs.push((n, t, draw4(&mut rng)));
            }
        }
    }

    jobs.into_par_iter()
        .map(|(n, t, draws)| {
            let item = &data[n];
            let (image, shape) = if t.is_identity() {
                (item.image.clone(), item.shape.clone())
            } else {
                let mut s = apply_transform(&item.shape, &t)?;
                if t.is_mirroring() {
                    s = s.permuted(perm.as_slice())?;
                }
                (apply_transform_image(&item.image, &t)?, s)
            };
            let gt = shape_bbox(&shape)?;
            let b = jitter_with(&gt, spec.init_jitter, draws);
            let init_box = BoundingBox {
                w: b.w.max(1.0),
                h: b.h.max(1.0),
                ..b
            };
            Ok(ShapeSample {
                image,
                shape,
                init_box,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineModel {
    pub layout: Layout,
    /// Rough landmarking cascade, two stages.
    pub pose_csr: CascadeModel,
    pub final_csr: CascadeModel,
    pub aggregation: AggregationConfig,
    pub perturbation: PerturbationConfig,
    pub pose: PoseConfig,
    /// When false the final cascade runs on the unnormalised image.
    pub pose_enabled: bool,
    /// Relabelling applied to landmarks found on a mirrored image.
    pub permutation: LandmarkPermutation,
}

impl PipelineModel {
    pub fn validate(&self) -> Result<()> {
        let l = self.layout.landmarks();
        for (name, m) in [("pose", &self.pose_csr), ("final", &self.final_csr)] {
            if m.landmarks() != l {
                return Err(Error::InvalidModel(format!(
                    "{name} cascade has {} landmarks, layout {} needs {l}",
                    m.landmarks(),
                    self.layout
                )));
            }
        }
        if self.pose_csr.num_stages() != ROUGH_STAGES {
            return Err(Error::InvalidConfig(format!(
                "pose cascade must have {ROUGH_STAGES} stages, has {}",
                self.pose_csr.num_stages()
            )));
        }
        if self.final_csr.num_stages() != FINAL_STAGES {
            log::info!(
                "final cascade has {} stages instead of {FINAL_STAGES}",
                self.final_csr.num_stages()
            );
        }
        if self.permutation.len() != l || !self.permutation.is_involution() {
            return Err(Error::InvalidConfig(format!(
                "landmark permutation must be an involution on {l} points"
            )));
        }
        self.perturbation.validate()?;
        self.aggregation.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub branch: AggregationBranch,
    pub aggregated_box: BoundingBox,
    pub rough: Shape,
    pub pose: PoseEstimate,
    /// Box the ensemble was centred on, in the normalised frame.
    pub final_box: BoundingBox,
    /// Perturbed boxes, one per ensemble run.
    pub boxes: Vec<BoundingBox>,
}

/// Landmarks for the face in `image`, in original image coordinates.
pub fn localize(
    model: &PipelineModel,
    image: &GrayImage,
    detections: &DetectionsBySource,
) -> Result<(Shape, Diagnostics)> {
    model.validate()?;
    let (aggregated_box, branch) = aggregate(detections, image, &model.aggregation)?;
    let rough = rough_landmarks(&model.pose_csr, image, &aggregated_box)?;

    let (work, pose) = if model.pose_enabled {
        let (img, _, pose) = normalize_pose(image, &aggregated_box, &rough, model.layout, &model.pose)?;
        (img, pose)
    } else {
        let pose = PoseEstimate {
            layout: model.layout,
            roll: 0.0,
            roll_degenerate: false,
            side: match model.layout {
                Layout::SemiFrontal => YawSide::NotApplicable,
                Layout::Profile => yaw_side(&rough, &model.pose)?,
            },
            transform: PlanarTransform::identity(),
        };
        (image.clone(), pose)
    };
    let final_box = shape_bbox(&apply_transform(&rough, &pose.transform)?)?;

    let p = &model.perturbation;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let boxes: Vec<BoundingBox> = (0..p.count).map(|_| perturb_bbox(&final_box, p.magnitude, &mut rng)).collect();
    let runs: Vec<Shape> = boxes
        .par_iter()
        .map(|b| apply_cascade(&model.final_csr, &work, b))
        .collect::<Result<_>>()?;
    let mean = Shape::pointwise_mean(&runs)?;
    let out = back_transform_landmarks(&mean, &pose, &model.permutation)?;

    Ok((
        out,
        Diagnostics {
            branch,
            aggregated_box,
            rough,
            pose,
            final_box,
            boxes,
        },
    ))
}

/// Trains the rough landmarking cascade on an augmented set.
pub fn train_pose_model(
    data: &[AnnotatedImage],
    spec: &AugmentationSpec,
    perm: &LandmarkPermutation,
    features: &FeatureConfig,
    lambda: Option<f64>,
    seed: u64,
) -> Result<CascadeModel> {
    let samples = build_training_set(data, spec, perm, &PoseConfig::default(), seed)?;
    log::info!("pose model: {} augmented samples", samples.len());
    train_cascade(&samples, ROUGH_STAGES, lambda, features)
}

/// Trains the final cascade on an augmented set.
#[allow(clippy::too_many_arguments)]
pub fn train_final_model(
    data: &[AnnotatedImage],
    spec: &AugmentationSpec,
    perm: &LandmarkPermutation,
    pose_cfg: &PoseConfig,
    features: &FeatureConfig,
    stages: usize,
    lambda: Option<f64>,
    seed: u64,
) -> Result<CascadeModel> {
    let samples = build_training_set(data, spec, perm, pose_cfg, seed)?;
    log::info!("final model: {} augmented samples", samples.len());
    train_cascade(&samples, stages, lambda, features)
}
