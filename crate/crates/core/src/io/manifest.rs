//! Tab-separated detection manifest.
//!
//! One detection per line:
//! `image_id<TAB>source<TAB>score<TAB>x<TAB>y<TAB>w<TAB>h`. A score of `-`
//! marks a scoreless detection. Blank lines are skipped.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;

use crate::aggregation::{Detection, DetectionsBySource};
use crate::error::{FormatError, FormatErrorKind, Result};
use crate::geometry::BoundingBox;

/// Detections per image id, then per source, both in first-seen order.
pub type Manifest = IndexMap<String, DetectionsBySource>;

const FIELDS: usize = 7;

pub fn parse_manifest(text: &str, origin: &str) -> Result<Manifest> {
    let mut out = Manifest::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let err = |kind| FormatError::new(origin, ln, kind);
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != FIELDS {
            return Err(err(FormatErrorKind::FieldCount {
                expected: FIELDS,
                found: fields.len(),
            })
            .into());
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(err(FormatErrorKind::InvalidValue("empty image id or source".into())).into());
        }
        let num = |s: &str| -> std::result::Result<f64, FormatError> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(err(FormatErrorKind::NonNumeric(s.to_string()))),
            }
        };
        let (x, y, w, h) = (num(fields[3])?, num(fields[4])?, num(fields[5])?, num(fields[6])?);
        let bbox = BoundingBox::new(x, y, w, h)
            .map_err(|_| err(FormatErrorKind::InvalidValue(format!("box {x} {y} {w} {h} has no area"))))?;
        let det = if fields[2] == "-" {
            Detection::scoreless(fields[1], bbox)
        } else {
            let score = num(fields[2])?;
            Detection::new(fields[1], score, bbox)
        }
        .map_err(|e| err(FormatErrorKind::InvalidValue(e.to_string())))?;
        out.entry(fields[0].to_string())
            .or_default()
            .entry(fields[1].to_string())
            .or_default()
            .push(det);
    }
    Ok(out)
}

/// Manifest text that parses back to `manifest`.
pub fn format_manifest(manifest: &Manifest) -> String {
    let mut out = String::new();
    for (image, by_source) in manifest {
        for (source, dets) in by_source {
            for d in dets {
                let score = if d.scoreless {
                    "-".to_string()
                } else {
                    d.score.to_string()
                };
                let b = d.bbox;
                let _ = writeln!(out, "{image}\t{source}\t{score}\t{}\t{}\t{}\t{}", b.x, b.y, b.w, b.h);
            }
        }
    }
    out
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    parse_manifest(&super::read_text(path)?, &path.display().to_string())
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    super::write_atomic(path, format_manifest(manifest).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn single_record() {
        let m = parse_manifest("img1\tdlib\t0.97\t10\t10\t80\t80", "m").unwrap();
        assert_eq!(m.len(), 1);
        let d = &m["img1"]["dlib"];
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].score, 0.97);
        assert_eq!(d[0].bbox, BoundingBox::new(10.0, 10.0, 80.0, 80.0).unwrap());
        assert!(!d[0].scoreless);
    }

    #[test]
    fn empty_file_is_an_empty_map() {
        assert!(parse_manifest("", "m").unwrap().is_empty());
        assert!(parse_manifest("\n\r\n", "m").unwrap().is_empty());
    }

    #[test]
    fn dash_score_is_scoreless() {
        let m = parse_manifest("a\tregression\t-\t1\t2\t3\t4\r\n", "m").unwrap();
        let d = &m["a"]["regression"][0];
        assert!(d.scoreless);
        assert_eq!(d.score, 1.0);
    }

    #[test]
    fn nan_score_fails_on_its_line() {
        match parse_manifest("img1\tmtcnn\tNaN\t1\t2\t3\t4", "m") {
            Err(Error::Format(e)) => {
                assert_eq!(e.line, 1);
                assert_eq!(e.kind, FormatErrorKind::NonNumeric("NaN".into()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn line_numbered_errors() {
        let text = "a\tdlib\t0.9\t1\t2\t3\t4\n\nb\tdlib\t0.9\t1\t2\t3\n";
        match parse_manifest(text, "m") {
            Err(Error::Format(e)) => assert_eq!((e.line, e.kind), (3, FormatErrorKind::FieldCount { expected: 7, found: 6 })),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_manifest("a\tdlib\t1.5\t1\t2\t3\t4", "m"),
            Err(Error::Format(FormatError { line: 1, .. }))
        ));
        assert!(matches!(
            parse_manifest("a\tdlib\t0.5\t1\t2\t0\t4", "m"),
            Err(Error::Format(FormatError { line: 1, .. }))
        ));
    }

    #[test]
    fn grouping_keeps_order_and_duplicates() {
        let text = "b\tmtcnn\t0.9\t1\t1\t5\t5\na\tdlib\t0.8\t0\t0\t9\t9\nb\tdlib\t0.7\t1\t1\t5\t5\nb\tmtcnn\t0.9\t1\t1\t5\t5\n";
        let m = parse_manifest(text, "m").unwrap();
        assert_eq!(m.keys().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(m["b"].keys().collect::<Vec<_>>(), ["mtcnn", "dlib"]);
        assert_eq!(m["b"]["mtcnn"].len(), 2);
        assert_eq!(parse_manifest(&format_manifest(&m), "m").unwrap(), m);
    }
}
