//! Fusion of candidate face boxes from several detectors into one box.
//!
//! Detections from the deep detectors are filtered (confidence, height and
//! image-centre rules), refined by a per-detector box cascade and averaged.
//! Two fallbacks cover the case where nothing survives the filter.

use indexmap::IndexMap;

use crate::bbox_regression::{apply_box_cascade, BoxCascadeModel, BoxInit};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point};
use crate::image::GrayImage;

/// Source tag of the whole-image regression detector. It has no confidence
/// score and is never filtered.
pub const REGRESSION_SOURCE: &str = "regression";

/// Sources whose raw detections are eligible for the first fallback.
pub const FALLBACK_SOURCES: [&str; 2] = ["dlib", "mtcnn"];

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    /// Confidence in `[0, 1]`; 1.0 for scoreless detections.
    pub score: f64,
    pub source: String,
    pub scoreless: bool,
}

impl Detection {
    pub fn new(source: impl Into<String>, score: f64, bbox: BoundingBox) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidInput(format!("detection score {score} outside [0, 1]")));
        }
        bbox.validate()?;
        Ok(Detection {
            bbox,
            score,
            source: source.into(),
            scoreless: false,
        })
    }

    pub fn scoreless(source: impl Into<String>, bbox: BoundingBox) -> Result<Self> {
        bbox.validate()?;
        Ok(Detection {
            bbox,
            score: 1.0,
            source: source.into(),
            scoreless: true,
        })
    }

    pub fn is_regression(&self) -> bool {
        self.source == REGRESSION_SOURCE
    }
}

/// Detections of one image grouped by source, in first-seen order.
pub type DetectionsBySource = IndexMap<String, Vec<Detection>>;

#[derive(Debug, Clone)]
pub struct AggregationConfig {
    pub score_threshold: f64,
    pub min_height_fraction: f64,
    pub centre_rule: bool,
    pub refiners: IndexMap<String, BoxCascadeModel>,
    /// Whole-image regression detector used as the last resort.
    pub fallback_detector: Option<BoxCascadeModel>,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            score_threshold: 0.85,
            min_height_fraction: 0.2,
            centre_rule: true,
            refiners: IndexMap::new(),
            fallback_detector: None,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("score_threshold", self.score_threshold),
            ("min_height_fraction", self.min_height_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Which branch of the aggregation decision produced the final box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationBranch {
    Aggregated,
    FallbackRefined,
    FallbackRegression,
}

impl AggregationBranch {
    pub fn as_str(&self) -> &'static str {
        match self {
            AggregationBranch::Aggregated => "aggregated",
            AggregationBranch::FallbackRefined => "fallback-refined",
            AggregationBranch::FallbackRegression => "fallback-regression",
        }
    }
}

impl std::fmt::Display for AggregationBranch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Drops detections that are not confident enough, too short, or miss the
/// image centre. Regression-detector outputs pass through untouched.
pub fn filter_detections(
    dets: &[Detection],
    image_w: usize,
    image_h: usize,
    cfg: &AggregationConfig,
) -> Vec<Detection> {
    let centre = Point::new(image_w as f64 / 2.0, image_h as f64 / 2.0);
    let min_height = cfg.min_height_fraction * image_h as f64;
    dets.iter()
        .filter(|d| {
            d.is_regression()
                || (d.score >= cfg.score_threshold
                    && d.bbox.h >= min_height
                    && (!cfg.centre_rule || d.bbox.contains(centre)))
        })
        .cloned()
        .collect()
}

fn refine(det: &Detection, image: &GrayImage, cfg: &AggregationConfig) -> Result<BoundingBox> {
    let refiner = cfg.refiners.get(&det.source).ok_or_else(|| {
        Error::InvalidConfig(format!("no box refiner configured for source {:?}", det.source))
    })?;
    apply_box_cascade(refiner, image, BoxInit::External(det.bbox))
}

/// Arithmetic mean of box corners.
pub fn corner_mean(boxes: &[BoundingBox]) -> Result<BoundingBox> {
    if boxes.is_empty() {
        return Err(Error::InvalidInput("cannot average zero boxes".into()));
    }
    let n = boxes.len() as f64;
    let (mut x0, mut y0, mut x1, mut y1) = (0.0, 0.0, 0.0, 0.0);
    for b in boxes {
        x0 += b.x;
        y0 += b.y;
        x1 += b.right();
        y1 += b.bottom();
    }
    let (x0, y0, x1, y1) = (x0 / n, y0 / n, x1 / n, y1 / n);
    BoundingBox::new(x0, y0, x1 - x0, y1 - y0)
}

/// Fuses all detections of one image into a single face box.
pub fn aggregate(
    dets_by_source: &DetectionsBySource,
    image: &GrayImage,
    cfg: &AggregationConfig,
) -> Result<(BoundingBox, AggregationBranch)> {
    cfg.validate()?;
    let (w, h) = image.size();

    let mut refined = Vec::new();
    for (source, dets) in dets_by_source {
        if source == REGRESSION_SOURCE {
            continue;
        }
        for det in filter_detections(dets, w, h, cfg) {
            refined.push(refine(&det, image, cfg)?);
        }
    }
    if !refined.is_empty() {
        return Ok((corner_mean(&refined)?, AggregationBranch::Aggregated));
    }

    // Highest-scoring raw detection from dlib or MTCNN; the first one wins ties.
    let mut best: Option<&Detection> = None;
    for source in FALLBACK_SOURCES {
        for det in dets_by_source.get(source).into_iter().flatten() {
            if best.is_none_or(|b| det.score > b.score) {
                best = Some(det);
            }
        }
    }
    if let Some(det) = best {
        return Ok((refine(det, image, cfg)?, AggregationBranch::FallbackRefined));
    }

    if let Some(det) = dets_by_source.get(REGRESSION_SOURCE).and_then(|d| d.first()) {
        return Ok((det.bbox, AggregationBranch::FallbackRegression));
    }
    match &cfg.fallback_detector {
        Some(model) => Ok((
            apply_box_cascade(model, image, BoxInit::WholeImage)?,
            AggregationBranch::FallbackRegression,
        )),
        None => Err(Error::NoFace),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox_regression::{BoxFeatureConfig, InitPolicy};

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(source: &str, score: f64, b: BoundingBox) -> Detection {
        Detection::new(source, score, b).unwrap()
    }

    fn cfg_with_identity_refiners() -> AggregationConfig {
        let fc = BoxFeatureConfig {
            canonical: 8,
            scales: vec![1.0],
            ..BoxFeatureConfig::default()
        };
        let mut cfg = AggregationConfig::default();
        for s in ["dlib", "mtcnn", "frcnn"] {
            cfg.refiners.insert(
                s.to_string(),
                BoxCascadeModel::identity(fc.clone(), InitPolicy::ExternalBox, 2).unwrap(),
            );
        }
        cfg
    }

    #[test]
    fn filter_rules() {
        let cfg = AggregationConfig::default();
        let cases = [
            (det("dlib", 0.80, bx(10.0, 10.0, 80.0, 80.0)), false),
            (det("dlib", 0.85, bx(10.0, 10.0, 80.0, 80.0)), true),
            (det("mtcnn", 0.99, bx(40.0, 40.0, 20.0, 10.0)), false),
            (det("mtcnn", 0.99, bx(40.0, 40.0, 20.0, 20.0)), true),
            (det("frcnn", 0.99, bx(0.0, 0.0, 30.0, 30.0)), false),
            (det("frcnn", 0.99, bx(0.0, 0.0, 50.0, 50.0)), true),
            (det("dlib", 0.9, bx(10.0, 10.0, 80.0, 80.0)), true),
            (Detection::scoreless("regression", bx(0.0, 0.0, 5.0, 5.0)).unwrap(), true),
        ];
        for (d, keep) in cases {
            let out = filter_detections(std::slice::from_ref(&d), 100, 100, &cfg);
            assert_eq!(out.len() == 1, keep, "{d:?}");
        }
    }

    #[test]
    fn filter_is_idempotent_and_order_preserving() {
        let cfg = AggregationConfig::default();
        let dets = vec![
            det("dlib", 0.9, bx(10.0, 10.0, 80.0, 80.0)),
            det("dlib", 0.1, bx(10.0, 10.0, 80.0, 80.0)),
            det("dlib", 0.95, bx(20.0, 20.0, 60.0, 60.0)),
        ];
        let once = filter_detections(&dets, 100, 100, &cfg);
        assert_eq!(once, vec![dets[0].clone(), dets[2].clone()]);
        assert_eq!(filter_detections(&once, 100, 100, &cfg), once);
    }

    #[test]
    fn averaging_branch() {
        let cfg = cfg_with_identity_refiners();
        let img = GrayImage::zeros(100, 100);
        let mut m = DetectionsBySource::new();
        m.insert("dlib".into(), vec![det("dlib", 0.9, bx(10.0, 10.0, 80.0, 80.0))]);
        m.insert("mtcnn".into(), vec![det("mtcnn", 0.95, bx(20.0, 20.0, 60.0, 60.0))]);
        let (b, tag) = aggregate(&m, &img, &cfg).unwrap();
        assert_eq!(tag, AggregationBranch::Aggregated);
        assert_eq!(b, bx(15.0, 15.0, 70.0, 70.0));
    }

    #[test]
    fn single_survivor_returned_exactly() {
        let cfg = cfg_with_identity_refiners();
        let img = GrayImage::zeros(100, 100);
        let mut m = DetectionsBySource::new();
        m.insert("frcnn".into(), vec![det("frcnn", 0.9, bx(12.5, 17.25, 71.0, 66.0))]);
        assert_eq!(aggregate(&m, &img, &cfg).unwrap().0, bx(12.5, 17.25, 71.0, 66.0));
    }

    #[test]
    fn fallback_to_highest_dlib_or_mtcnn() {
        let cfg = cfg_with_identity_refiners();
        let img = GrayImage::zeros(100, 100);
        let mut m = DetectionsBySource::new();
        m.insert("dlib".into(), vec![det("dlib", 0.60, bx(30.0, 30.0, 40.0, 40.0))]);
        m.insert("mtcnn".into(), vec![det("mtcnn", 0.40, bx(35.0, 35.0, 30.0, 30.0))]);
        m.insert("frcnn".into(), vec![det("frcnn", 0.99, bx(0.0, 0.0, 10.0, 10.0))]);
        let (b, tag) = aggregate(&m, &img, &cfg).unwrap();
        assert_eq!(tag, AggregationBranch::FallbackRefined);
        assert_eq!(b, bx(30.0, 30.0, 40.0, 40.0));
    }

    #[test]
    fn fallback_to_regression_detector() {
        let img = GrayImage::zeros(100, 80);
        let mut cfg = cfg_with_identity_refiners();
        let mut m = DetectionsBySource::new();
        m.insert("frcnn".into(), vec![det("frcnn", 0.3, bx(0.0, 0.0, 10.0, 10.0))]);
        assert!(matches!(aggregate(&m, &img, &cfg), Err(Error::NoFace)));

        cfg.fallback_detector = Some(
            BoxCascadeModel::identity(
                BoxFeatureConfig {
                    canonical: 8,
                    scales: vec![1.0],
                    ..BoxFeatureConfig::default()
                },
                InitPolicy::WholeImage,
                2,
            )
            .unwrap(),
        );
        let (b, tag) = aggregate(&m, &img, &cfg).unwrap();
        assert_eq!(tag, AggregationBranch::FallbackRegression);
        assert_eq!(b, BoundingBox::whole_image(100, 80));

        m.insert(
            "regression".into(),
            vec![Detection::scoreless("regression", bx(20.0, 10.0, 50.0, 50.0)).unwrap()],
        );
        let (b, tag) = aggregate(&m, &img, &cfg).unwrap();
        assert_eq!(tag, AggregationBranch::FallbackRegression);
        assert_eq!(b, bx(20.0, 10.0, 50.0, 50.0));
    }

    #[test]
    fn missing_refiner_is_a_config_error() {
        let cfg = AggregationConfig::default();
        let img = GrayImage::zeros(100, 100);
        let mut m = DetectionsBySource::new();
        m.insert("dlib".into(), vec![det("dlib", 0.9, bx(10.0, 10.0, 80.0, 80.0))]);
        assert!(matches!(aggregate(&m, &img, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn corner_mean_commutes_with_translation() {
        let boxes = [bx(1.0, 2.0, 30.0, 40.0), bx(5.0, -3.0, 20.0, 44.0), bx(0.5, 0.5, 10.0, 10.0)];
        let moved: Vec<_> = boxes.iter().map(|b| bx(b.x + 13.0, b.y - 7.0, b.w, b.h)).collect();
        let a = corner_mean(&boxes).unwrap();
        let b = corner_mean(&moved).unwrap();
        assert!((a.x + 13.0 - b.x).abs() < 1e-12 && (a.y - 7.0 - b.y).abs() < 1e-12);
        assert!((a.w - b.w).abs() < 1e-12 && (a.h - b.h).abs() < 1e-12);
    }
}
