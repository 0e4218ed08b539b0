//! Landmark error metrics, cumulative error curves and their exports.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{shape_bbox, Shape};
use crate::markup::{CONTOUR_68, OUTER_EYE_CORNERS_68};

/// Distance the RMS error is divided by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalizer {
    /// Outer eye corners of the ground truth (68-point markup only).
    Interocular,
    /// Diagonal of the ground-truth landmark box.
    BboxDiagonal,
    /// Distance between two ground-truth landmarks, 0-based.
    Pair(usize, usize),
    /// A distance supplied by the caller.
    Fixed(f64),
}

impl Normalizer {
    fn distance(&self, gt: &Shape) -> Result<f64> {
        let pair = |a: usize, b: usize| -> Result<f64> {
            if a >= gt.len() || b >= gt.len() {
                return Err(Error::InvalidInput(format!(
                    "normaliser pair ({a}, {b}) outside a {}-point shape",
                    gt.len()
                )));
            }
            Ok(gt.point(a).distance(&gt.point(b)))
        };
        match *self {
            Normalizer::Interocular => {
                if gt.len() != 68 {
                    return Err(Error::InvalidInput(format!(
                        "interocular normaliser needs 68 points, got {}",
                        gt.len()
                    )));
                }
                pair(OUTER_EYE_CORNERS_68.0, OUTER_EYE_CORNERS_68.1)
            }
            Normalizer::BboxDiagonal => {
                let b = shape_bbox(gt)?;
                Ok(b.w.hypot(b.h))
            }
            Normalizer::Pair(a, b) => pair(a, b),
            Normalizer::Fixed(d) => Ok(d),
        }
    }

    /// Interocular for 68 points, box diagonal otherwise.
    pub fn default_for(landmarks: usize) -> Self {
        if landmarks == 68 {
            Normalizer::Interocular
        } else {
            Normalizer::BboxDiagonal
        }
    }
}

impl fmt::Display for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalizer::Interocular => f.write_str("interocular"),
            Normalizer::BboxDiagonal => f.write_str("bbox-diagonal"),
            Normalizer::Pair(a, b) => write!(f, "pair:{}:{}", a + 1, b + 1),
            Normalizer::Fixed(d) => write!(f, "fixed:{d}"),
        }
    }
}

impl FromStr for Normalizer {
    type Err = Error;

    /// Parses `interocular`, `bbox-diagonal`, `pair:i:j` (1-based) or
    /// `fixed:d`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown normaliser {s:?}"));
        match s {
            "interocular" => Ok(Normalizer::Interocular),
            "bbox-diagonal" => Ok(Normalizer::BboxDiagonal),
            _ if s.starts_with("fixed:") => s[6..].parse().map(Normalizer::Fixed).map_err(|_| bad()),
            _ => {
                let rest = s.strip_prefix("pair:").ok_or_else(bad)?;
                let (a, b) = rest.split_once(':').ok_or_else(bad)?;
                let a: usize = a.parse().map_err(|_| bad())?;
                let b: usize = b.parse().map_err(|_| bad())?;
                if a == 0 || b == 0 {
                    return Err(bad());
                }
                Ok(Normalizer::Pair(a - 1, b - 1))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subset {
    All68,
    Inner51,
    All39,
}

impl Subset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subset::All68 => "all-68",
            Subset::Inner51 => "inner-51",
            Subset::All39 => "all-39",
        }
    }

    pub fn landmarks(&self) -> usize {
        match self {
            Subset::All68 | Subset::Inner51 => 68,
            Subset::All39 => 39,
        }
    }

    /// 0-based landmark indices the subset keeps.
    pub fn indices(&self) -> Vec<usize> {
        match self {
            Subset::All68 => (0..68).collect(),
            Subset::Inner51 => (CONTOUR_68.end..68).collect(),
            Subset::All39 => (0..39).collect(),
        }
    }

    /// Subsets reported for a shape of `landmarks` points.
    pub fn for_landmarks(landmarks: usize) -> Result<Vec<Subset>> {
        match landmarks {
            68 => Ok(vec![Subset::All68, Subset::Inner51]),
            39 => Ok(vec![Subset::All39]),
            l => Err(Error::InvalidInput(format!("no evaluation subset for {l} landmarks"))),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-68" => Ok(Subset::All68),
            "inner-51" => Ok(Subset::Inner51),
            "all-39" => Ok(Subset::All39),
            _ => Err(Error::InvalidInput(format!("unknown subset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub image_id: String,
    pub subset: Subset,
    pub error: f64,
}

/// RMS point-to-point distance over all landmarks, divided by the
/// normaliser distance measured on `gt`.
pub fn normalized_rmse(pred: &Shape, gt: &Shape, normalizer: Normalizer) -> Result<f64> {
    let idx: Vec<usize> = (0..gt.len()).collect();
    rmse_over(pred, gt, &idx, normalizer)
}

/// [`normalized_rmse`] restricted to a landmark subset. The normaliser is
/// always measured on the full ground truth.
pub fn normalized_rmse_subset(pred: &Shape, gt: &Shape, subset: Subset, normalizer: Normalizer) -> Result<f64> {
    if gt.len() != subset.landmarks() {
        return Err(Error::InvalidInput(format!(
            "subset {subset} needs {} points, got {}",
            subset.landmarks(),
            gt.len()
        )));
    }
    rmse_over(pred, gt, &subset.indices(), normalizer)
}

fn rmse_over(pred: &Shape, gt: &Shape, idx: &[usize], normalizer: Normalizer) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let norm = normalizer.distance(gt)?;
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidInput(format!("normaliser distance is {norm}")));
    }
    let sq: f64 = idx
        .iter()
        .map(|&i| {
            let (p, q) = (pred.point(i), gt.point(i));
            (p.x - q.x).powi(2) + (p.y - q.y).powi(2)
        })
        .sum();
    Ok((sq / idx.len() as f64).sqrt() / norm)
}

/// Fraction of errors at or below each threshold.
pub fn ced(errors: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("no errors to accumulate".into()));
    }
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidInput("thresholds must be ascending".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e <= t) as f64 / n)
        .collect())
}

/// Area under the CED curve on `[0, max_threshold]`, divided by
/// `max_threshold`.
///
/// The curve is a step function, so the area is computed exactly: each
/// error `e` contributes `max(0, 1 - e / T) / n`.
pub fn auc(errors: &[f64], max_threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("no errors to accumulate".into()));
    }
    if !(max_threshold > 0.0 && max_threshold.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid AUC threshold {max_threshold}")));
    }
    let area: f64 = errors.iter().map(|&e| (1.0 - e.max(0.0) / max_threshold).max(0.0)).sum();
    Ok(area / errors.len() as f64)
}

/// `count` evenly spaced thresholds from 0 to `max` inclusive.
pub fn threshold_grid(max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![max],
        _ => (0..count).map(|i| max * i as f64 / (count - 1) as f64).collect(),
    }
}

pub fn results_csv(records: &[ErrorRecord]) -> String {
    let mut out = String::from("image_id,subset,error\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.image_id, r.subset, r.error);
    }
    out
}

pub fn ced_csv(thresholds: &[f64], fractions: &[f64]) -> String {
    let mut out = String::from("threshold,fraction\n");
    for (t, f) in thresholds.iter().zip(fractions) {
        let _ = writeln!(out, "{t},{f}");
    }
    out
}

/// Named CED curves as a standalone SVG document.
pub fn ced_svg(curves: &[(&str, &[f64], &[f64])], max_threshold: f64) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 48.0;
    const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let px = |t: f64| M + (W - 2.0 * M) * t / max_threshold;
    let py = |f: f64| H - M - (H - 2.0 * M) * f;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y0} H{x1} M{x0} {y0} V{y1}" stroke="black" fill="none"/>"#,
        x0 = px(0.0),
        y0 = py(0.0),
        x1 = px(max_threshold),
        y1 = py(1.0)
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let t = max_threshold * f;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{f:.2}</text>"#,
            px(0.0) - 4.0,
            py(f) + 3.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{t:.3}</text>"#,
            px(t),
            py(0.0) + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">normalised RMS error</text>"#,
        W / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">fraction of images</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (k, (name, ts, fs)) in curves.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let pts: Vec<String> = ts
            .iter()
            .zip(fs.iter())
            .map(|(&t, &f)| format!("{:.2},{:.2}", px(t), py(f)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{colour}" fill="none" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{}</text>"#,
            px(max_threshold) - 120.0,
            py(0.25) - 14.0 * k as f64,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
