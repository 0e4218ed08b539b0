//! Flat `key = value` configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Every field of [`Config`] has a key, and [`emit_config`] writes
//! all of them, so `parse_config(emit_config(c)) == c`. The `layout` key is
//! applied first because it selects the defaults for the other keys.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use crate::aggregation::AggregationConfig;
use crate::bbox_regression::{BoxCascadeModel, BoxFeatureConfig};
use crate::error::{FormatError, FormatErrorKind, Result};
use crate::evaluation::Normalizer;
use crate::features::{ContextConfig, FeatureConfig, HogConfig, LbpConfig};
use crate::io::synth::{template, SyntheticFaceSpec};
use crate::markup::Layout;
use crate::pipeline::{AugmentStage, AugmentationSpec, PerturbationConfig, FINAL_STAGES};
use crate::pose::PoseConfig;

/// Scalar settings of box aggregation; refiners are loaded separately.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationSettings {
    pub score_threshold: f64,
    pub min_height_fraction: f64,
    pub centre_rule: bool,
}

impl Default for AggregationSettings {
    fn default() -> Self {
        let d = AggregationConfig::default();
        AggregationSettings {
            score_threshold: d.score_threshold,
            min_height_fraction: d.min_height_fraction,
            centre_rule: d.centre_rule,
        }
    }
}

impl AggregationSettings {
    pub fn with_models(
        &self,
        refiners: indexmap::IndexMap<String, BoxCascadeModel>,
        fallback_detector: Option<BoxCascadeModel>,
    ) -> AggregationConfig {
        AggregationConfig {
            score_threshold: self.score_threshold,
            min_height_fraction: self.min_height_fraction,
            centre_rule: self.centre_rule,
            refiners,
            fallback_detector,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub layout: Layout,
    pub pose_features: FeatureConfig,
    pub pose_lambda: Option<f64>,
    pub pose_augmentation: AugmentationSpec,
    pub final_features: FeatureConfig,
    pub final_stages: usize,
    pub final_lambda: Option<f64>,
    pub final_augmentation: AugmentationSpec,
    pub box_features: BoxFeatureConfig,
    pub box_stages: usize,
    pub box_lambda: Option<f64>,
    pub aggregation: AggregationSettings,
    pub pose: PoseConfig,
    pub pose_enabled: bool,
    pub perturbation: PerturbationConfig,
    /// Relabelling table for mirrored faces; the built-in one when unset.
    pub permutation_file: Option<PathBuf>,
    /// Error normaliser; the layout default when unset.
    pub normalizer: Option<Normalizer>,
    pub auc_threshold: f64,
    pub ced_points: usize,
    pub synth: SyntheticFaceSpec,
}

impl Config {
    pub fn default_for(layout: Layout) -> Self {
        Config {
            layout,
            pose_features: FeatureConfig::default(),
            pose_lambda: None,
            pose_augmentation: AugmentationSpec::default_for(AugmentStage::PoseModel, layout),
            final_features: FeatureConfig::default(),
            final_stages: FINAL_STAGES,
            final_lambda: None,
            final_augmentation: AugmentationSpec::default_for(AugmentStage::FinalModel, layout),
            box_features: BoxFeatureConfig::default(),
            box_stages: 2,
            box_lambda: None,
            aggregation: AggregationSettings::default(),
            pose: PoseConfig::default(),
            pose_enabled: true,
            perturbation: PerturbationConfig::default(),
            permutation_file: None,
            normalizer: None,
            auc_threshold: 0.08,
            ced_points: 81,
            synth: SyntheticFaceSpec::for_layout(layout),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pose_features.validate()?;
        self.final_features.validate()?;
        self.box_features.validate()?;
        self.pose_augmentation.validate()?;
        self.final_augmentation.validate()?;
        self.perturbation.validate()?;
        self.synth.validate()?;
        self.aggregation.with_models(Default::default(), None).validate()?;
        let bad = |m: &str| Err(crate::error::Error::InvalidConfig(m.into()));
        if self.final_stages == 0 || self.box_stages == 0 {
            return bad("stage counts must be positive");
        }
        for l in [self.pose_lambda, self.final_lambda, self.box_lambda].into_iter().flatten() {
            if !(l.is_finite() && l >= 0.0) {
                return bad("lambda must be finite and non-negative");
            }
        }
        if !(self.auc_threshold > 0.0 && self.auc_threshold.is_finite()) || self.ced_points < 2 {
            return bad("auc_threshold must be positive and ced_points at least 2");
        }
        if self.synth.layout()? != self.layout {
            return bad("synthetic template does not match the layout");
        }
        Ok(())
    }

    /// Normaliser to use for this layout.
    pub fn normalizer(&self) -> Normalizer {
        self.normalizer.unwrap_or(Normalizer::default_for(self.layout.landmarks()))
    }
}

impl Default for Config {
    fn default() -> Self {
        Config::default_for(Layout::SemiFrontal)
    }
}

type Entries = Vec<(String, String)>;

fn put(out: &mut Entries, key: impl Into<String>, v: impl Display) {
    out.push((key.into(), v.to_string()));
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn opt<T: Display>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), |x| x.to_string())
}

fn emit_hog(out: &mut Entries, p: &str, h: &HogConfig) {
    put(out, format!("{p}.hog.cells"), h.cells);
    put(out, format!("{p}.hog.bins"), h.bins);
    put(out, format!("{p}.hog.signed"), h.signed);
}

fn emit_lbp(out: &mut Entries, p: &str, l: &LbpConfig) {
    put(out, format!("{p}.lbp.radius"), l.radius);
    put(out, format!("{p}.lbp.bins"), l.bins);
}

/// `key = value` entries for a feature configuration under `prefix`.
pub fn feature_entries(prefix: &str, c: &FeatureConfig) -> Vec<(String, String)> {
    let mut out = Entries::new();
    put(&mut out, format!("{prefix}.patch_size"), c.patch_size);
    put(&mut out, format!("{prefix}.scales"), list(&c.scales));
    put(&mut out, format!("{prefix}.relative_to"), opt(&c.relative_to, "none"));
    emit_hog(&mut out, prefix, &c.hog);
    emit_lbp(&mut out, prefix, &c.lbp);
    let ctx = c
        .context
        .as_ref()
        .map_or_else(|| "none".to_string(), |x| format!("{},{}", x.size, x.cells));
    put(&mut out, format!("{prefix}.context"), ctx);
    put(&mut out, format!("{prefix}.bias"), c.bias);
    out
}

pub fn box_feature_entries(prefix: &str, c: &BoxFeatureConfig) -> Vec<(String, String)> {
    let mut out = Entries::new();
    put(&mut out, format!("{prefix}.canonical"), c.canonical);
    put(&mut out, format!("{prefix}.scales"), list(&c.scales));
    emit_hog(&mut out, prefix, &c.hog);
    emit_lbp(&mut out, prefix, &c.lbp);
    out
}

fn emit_augmentation(out: &mut Entries, p: &str, a: &AugmentationSpec) {
    put(out, format!("{p}.flip"), a.flip);
    put(out, format!("{p}.rotation"), format!("{},{}", a.rotation_range.0, a.rotation_range.1));
    put(out, format!("{p}.samples_per_image"), a.samples_per_image);
    put(out, format!("{p}.init_jitter"), a.init_jitter);
}

pub fn emit_config(c: &Config) -> String {
    let mut e = Entries::new();
    put(&mut e, "layout", c.layout);
    e.extend(feature_entries("pose.features", &c.pose_features));
    put(&mut e, "pose.lambda", opt(&c.pose_lambda, "auto"));
    emit_augmentation(&mut e, "pose.augment", &c.pose_augmentation);
    put(&mut e, "pose.enabled", c.pose_enabled);
    put(&mut e, "pose.roll_threshold", c.pose.roll_threshold);
    put(&mut e, "pose.right_if_x3_less", c.pose.right_if_x3_less);
    e.extend(feature_entries("final.features", &c.final_features));
    put(&mut e, "final.stages", c.final_stages);
    put(&mut e, "final.lambda", opt(&c.final_lambda, "auto"));
    emit_augmentation(&mut e, "final.augment", &c.final_augmentation);
    e.extend(box_feature_entries("box.features", &c.box_features));
    put(&mut e, "box.stages", c.box_stages);
    put(&mut e, "box.lambda", opt(&c.box_lambda, "auto"));
    put(&mut e, "aggregation.score_threshold", c.aggregation.score_threshold);
    put(&mut e, "aggregation.min_height_fraction", c.aggregation.min_height_fraction);
    put(&mut e, "aggregation.centre_rule", c.aggregation.centre_rule);
    put(&mut e, "perturbation.magnitude", c.perturbation.magnitude);
    put(&mut e, "perturbation.count", c.perturbation.count);
    put(&mut e, "perturbation.seed", c.perturbation.seed);
    let perm = c.permutation_file.as_ref().map(|p| p.display().to_string());
    put(&mut e, "permutation_file", opt(&perm, "builtin"));
    put(&mut e, "evaluation.normalizer", opt(&c.normalizer, "auto"));
    put(&mut e, "evaluation.auc_threshold", c.auc_threshold);
    put(&mut e, "evaluation.ced_points", c.ced_points);
    let s = &c.synth;
    put(&mut e, "synth.texture_seed", s.texture_seed);
    put(&mut e, "synth.width", s.width);
    put(&mut e, "synth.height", s.height);
    put(&mut e, "synth.face_size", s.face_size);
    put(&mut e, "synth.rotation", format!("{},{}", s.rotation_range.0, s.rotation_range.1));
    put(&mut e, "synth.scale", format!("{},{}", s.scale_range.0, s.scale_range.1));
    put(&mut e, "synth.translation", s.translation);
    put(&mut e, "synth.noise", s.noise);
    put(&mut e, "synth.flip_probability", s.flip_probability);
    put(&mut e, "synth.detection_jitter", s.detection_jitter);
    put(&mut e, "synth.sources", list(&s.detection_sources));
    put(&mut e, "synth.scores", format!("{},{}", s.score_range.0, s.score_range.1));
    render(&e)
}

pub(crate) fn render(entries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Splits text into `(line, key, value)` triples.
pub(crate) fn entries(text: &str, origin: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(FormatError::new(
                origin,
                i + 1,
                FormatErrorKind::InvalidValue(format!("expected `key = value`, found {line:?}")),
            )
            .into());
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

type SetResult = std::result::Result<(), String>;

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn float(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = num(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{v:?} is not finite"))
    }
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, found {v:?}")),
    }
}

fn floats(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|s| float(s.trim())).collect()
}

fn pair(v: &str) -> std::result::Result<(f64, f64), String> {
    match floats(v)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("expected two comma-separated numbers, found {v:?}")),
    }
}

fn lambda(v: &str) -> std::result::Result<Option<f64>, String> {
    if v == "auto" {
        Ok(None)
    } else {
        float(v).map(Some)
    }
}

fn set_hog(h: &mut HogConfig, key: &str, v: &str) -> Option<SetResult> {
    Some(match key {
        "hog.cells" => num(v).map(|x| h.cells = x),
        "hog.bins" => num(v).map(|x| h.bins = x),
        "hog.signed" => boolean(v).map(|x| h.signed = x),
        _ => return None,
    })
}

fn set_lbp(l: &mut LbpConfig, key: &str, v: &str) -> Option<SetResult> {
    Some(match key {
        "lbp.radius" => num(v).map(|x| l.radius = x),
        "lbp.bins" => num(v).map(|x| l.bins = x),
        _ => return None,
    })
}

/// Applies one feature key (without its prefix). `None` if unknown.
pub(crate) fn set_feature(c: &mut FeatureConfig, key: &str, v: &str) -> Option<SetResult> {
    Some(match key {
        "patch_size" => num(v).map(|x| c.patch_size = x),
        "scales" => floats(v).map(|x| c.scales = x),
        "relative_to" if v == "none" => {
            c.relative_to = None;
            Ok(())
        }
        "relative_to" => float(v).map(|x| c.relative_to = Some(x)),
        "context" if v == "none" => {
            c.context = None;
            Ok(())
        }
        "context" => match v.split_once(',') {
            Some((s, n)) => num(s.trim()).and_then(|size| {
                num(n.trim()).map(|cells| c.context = Some(ContextConfig { size, cells }))
            }),
            None => Err(format!("expected `size,cells` or `none`, found {v:?}")),
        },
        "bias" => boolean(v).map(|x| c.bias = x),
        _ => return set_hog(&mut c.hog, key, v).or_else(|| set_lbp(&mut c.lbp, key, v)),
    })
}

pub(crate) fn set_box_feature(c: &mut BoxFeatureConfig, key: &str, v: &str) -> Option<SetResult> {
    Some(match key {
        "canonical" => num(v).map(|x| c.canonical = x),
        "scales" => floats(v).map(|x| c.scales = x),
        _ => return set_hog(&mut c.hog, key, v).or_else(|| set_lbp(&mut c.lbp, key, v)),
    })
}

fn set_augmentation(a: &mut AugmentationSpec, key: &str, v: &str) -> Option<SetResult> {
    Some(match key {
        "flip" => boolean(v).map(|x| a.flip = x),
        "rotation" => pair(v).map(|x| a.rotation_range = x),
        "samples_per_image" => num(v).map(|x| a.samples_per_image = x),
        "init_jitter" => float(v).map(|x| a.init_jitter = x),
        _ => return None,
    })
}

fn set_key(c: &mut Config, key: &str, v: &str) -> Option<SetResult> {
    if let Some(k) = key.strip_prefix("pose.features.") {
        return set_feature(&mut c.pose_features, k, v);
    }
    if let Some(k) = key.strip_prefix("final.features.") {
        return set_feature(&mut c.final_features, k, v);
    }
    if let Some(k) = key.strip_prefix("box.features.") {
        return set_box_feature(&mut c.box_features, k, v);
    }
    if let Some(k) = key.strip_prefix("pose.augment.") {
        return set_augmentation(&mut c.pose_augmentation, k, v);
    }
    if let Some(k) = key.strip_prefix("final.augment.") {
        return set_augmentation(&mut c.final_augmentation, k, v);
    }
    let s = &mut c.synth;
    Some(match key {
        "pose.lambda" => lambda(v).map(|x| c.pose_lambda = x),
        "pose.enabled" => boolean(v).map(|x| c.pose_enabled = x),
        "pose.roll_threshold" => float(v).map(|x| c.pose.roll_threshold = x),
        "pose.right_if_x3_less" => boolean(v).map(|x| c.pose.right_if_x3_less = x),
        "final.stages" => num(v).map(|x| c.final_stages = x),
        "final.lambda" => lambda(v).map(|x| c.final_lambda = x),
        "box.stages" => num(v).map(|x| c.box_stages = x),
        "box.lambda" => lambda(v).map(|x| c.box_lambda = x),
        "aggregation.score_threshold" => float(v).map(|x| c.aggregation.score_threshold = x),
        "aggregation.min_height_fraction" => float(v).map(|x| c.aggregation.min_height_fraction = x),
        "aggregation.centre_rule" => boolean(v).map(|x| c.aggregation.centre_rule = x),
        "perturbation.magnitude" => float(v).map(|x| c.perturbation.magnitude = x),
        "perturbation.count" => num(v).map(|x| c.perturbation.count = x),
        "perturbation.seed" => num(v).map(|x| c.perturbation.seed = x),
        "permutation_file" => {
            c.permutation_file = (v != "builtin").then(|| PathBuf::from(v));
            Ok(())
        }
        "evaluation.normalizer" if v == "auto" => {
            c.normalizer = None;
            Ok(())
        }
        "evaluation.normalizer" => v
            .parse::<Normalizer>()
            .map(|n| c.normalizer = Some(n))
            .map_err(|e| e.to_string()),
        "evaluation.auc_threshold" => float(v).map(|x| c.auc_threshold = x),
        "evaluation.ced_points" => num(v).map(|x| c.ced_points = x),
        "synth.texture_seed" => num(v).map(|x| s.texture_seed = x),
        "synth.width" => num(v).map(|x| s.width = x),
        "synth.height" => num(v).map(|x| s.height = x),
        "synth.face_size" => float(v).map(|x| s.face_size = x),
        "synth.rotation" => pair(v).map(|x| s.rotation_range = x),
        "synth.scale" => pair(v).map(|x| s.scale_range = x),
        "synth.translation" => float(v).map(|x| s.translation = x),
        "synth.noise" => float(v).map(|x| s.noise = x),
        "synth.flip_probability" => float(v).map(|x| s.flip_probability = x),
        "synth.detection_jitter" => float(v).map(|x| s.detection_jitter = x),
        "synth.sources" => {
            let names: Vec<String> = v.split(',').map(|x| x.trim().to_string()).collect();
            if names.iter().any(|n| n.is_empty() || n.contains(char::is_whitespace)) {
                Err(format!("bad source list {v:?}"))
            } else {
                s.detection_sources = names;
                Ok(())
            }
        }
        "synth.scores" => pair(v).map(|x| s.score_range = x),
        _ => return None,
    })
}

/// Parses configuration text. Keys not mentioned keep their defaults.
pub fn parse_config(text: &str, origin: &str) -> Result<Config> {
    let items = entries(text, origin)?;
    let mut layout = Layout::SemiFrontal;
    for (ln, k, v) in &items {
        if k == "layout" {
            layout = v
                .parse()
                .map_err(|_| FormatError::new(origin, *ln, FormatErrorKind::InvalidValue(format!("unknown layout {v:?}"))))?;
        }
    }
    let mut c = Config::default_for(layout);
    for (ln, k, v) in &items {
        if k == "layout" {
            continue;
        }
        match set_key(&mut c, k, v) {
            None => return Err(FormatError::new(origin, *ln, FormatErrorKind::UnknownKey(k.clone())).into()),
            Some(Err(msg)) => {
                return Err(FormatError::new(origin, *ln, FormatErrorKind::InvalidValue(format!("{k}: {msg}"))).into())
            }
            Some(Ok(())) => {}
        }
    }
    c.synth.template = template(layout);
    Ok(c)
}

pub fn read_config(path: &Path) -> Result<Config> {
    parse_config(&super::read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn defaults_round_trip() {
        for layout in [Layout::SemiFrontal, Layout::Profile] {
            let c = Config::default_for(layout);
            c.validate().unwrap();
            assert_eq!(parse_config(&emit_config(&c), "c").unwrap(), c);
        }
    }

    #[test]
    fn layout_selects_defaults_regardless_of_position() {
        let c = parse_config("final.augment.flip = true\nlayout = profile\n", "c").unwrap();
        assert_eq!(c.layout, Layout::Profile);
        assert!(c.final_augmentation.flip);
        assert_eq!(c.final_augmentation.layout, Layout::Profile);
        assert_eq!(c.synth.template.len(), 39);
    }

    #[test]
    fn errors_name_the_line() {
        match parse_config("# c\nfinal.stages = 3\nbogus = 1\n", "c") {
            Err(Error::Format(e)) => assert_eq!((e.line, e.kind), (3, FormatErrorKind::UnknownKey("bogus".into()))),
            other => panic!("{other:?}"),
        }
        match parse_config("\nfinal.stages = -3\n", "c") {
            Err(Error::Format(e)) => {
                assert_eq!(e.line, 2);
                assert!(matches!(e.kind, FormatErrorKind::InvalidValue(_)));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_config("no equals sign\n", "c").is_err());
        assert!(parse_config("synth.noise = NaN\n", "c").is_err());
    }

    #[test]
    fn optional_values() {
        let c = parse_config(
            "final.features.context = none\nfinal.features.relative_to = 80\nfinal.lambda = 0.5\nevaluation.normalizer = pair:1:2\npermutation_file = perm.txt\n",
            "c",
        )
        .unwrap();
        assert_eq!(c.final_features.context, None);
        assert_eq!(c.final_features.relative_to, Some(80.0));
        assert_eq!(c.final_lambda, Some(0.5));
        assert_eq!(c.normalizer, Some(Normalizer::Pair(0, 1)));
        assert_eq!(c.permutation_file, Some(PathBuf::from("perm.txt")));
        assert_eq!(parse_config(&emit_config(&c), "c").unwrap(), c);
    }
}
