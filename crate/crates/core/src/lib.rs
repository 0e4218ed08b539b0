//! Coarse-to-fine facial landmark localisation.
//!
//! Boxes from several face detectors are fused into one, and a short cascade
//! finds the roll and yaw side so the face can be turned upright. A longer
//! cascade of ridge regressors over HOG and LBP features then places the
//! final landmarks.

pub mod aggregation;
pub mod bbox_regression;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod image;
pub mod io;
pub mod markup;
pub mod pipeline;
pub mod pose;
pub mod regression;

pub use aggregation::{aggregate, AggregationBranch, AggregationConfig, Detection, DetectionsBySource};
pub use bbox_regression::{
    apply_box_cascade, train_box_cascade, BoxCascadeModel, BoxFeatureConfig, BoxInit, BoxSample, InitPolicy,
};
pub use error::{Error, FormatError, FormatErrorKind, Result};
pub use evaluation::{auc, ced, normalized_rmse, ErrorRecord, Normalizer, Subset};
pub use features::{shape_features, ContextConfig, FeatureConfig, HogConfig, LbpConfig};
pub use geometry::{apply_transform, shape_bbox, BoundingBox, PlanarTransform, Point, Shape};
pub use image::GrayImage;
pub use io::config::Config;
pub use io::dataset::AnnotationRecord;
pub use io::synth::{generate_synthetic, SyntheticFaceSpec, SyntheticSample};
pub use markup::{LandmarkPermutation, Layout};
pub use pipeline::{
    localize, AnnotatedImage, AugmentStage, AugmentationSpec, Diagnostics, PerturbationConfig, PipelineModel,
};
pub use pose::{PoseConfig, PoseEstimate, YawSide};
pub use regression::{apply_cascade, train_cascade, CascadeModel, ShapeSample, WeakRegressor};
