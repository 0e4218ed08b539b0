//! The `.pts` landmark annotation format, version 1.
//!
//! ```text
//! version: 1
//! n_points: 2
//! {
//! 1.0 2.0
//! 3.0 4.0
//! }
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FormatError, FormatErrorKind, Result};
use crate::geometry::{Point, Shape};

/// Parses `.pts` text. `origin` names the source in error messages.
pub fn parse_pts(text: &str, origin: &str) -> Result<Shape> {
    let err = |line: usize, kind| FormatError::new(origin, line, kind);
    let mut lines = text.lines().map(str::trim).enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(0, FormatErrorKind::MalformedHeader(format!("missing {what}"))))
    };

    let (ln, l) = next("version line")?;
    let version = header_value(l, "version").ok_or_else(|| {
        err(ln, FormatErrorKind::MalformedHeader(format!("expected `version: 1`, found {l:?}")))
    })?;
    if version != "1" {
        let kind = match version.parse::<u32>() {
            Ok(v) => FormatErrorKind::UnsupportedVersion(v),
            Err(_) => FormatErrorKind::MalformedHeader(format!("bad version {version:?}")),
        };
        return Err(err(ln, kind).into());
    }

    let (ln, l) = next("n_points line")?;
    let n: usize = header_value(l, "n_points")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| err(ln, FormatErrorKind::MalformedHeader(format!("expected `n_points: N`, found {l:?}"))))?;

    let (ln, l) = next("opening brace")?;
    if l != "{" {
        return Err(err(ln, FormatErrorKind::MalformedHeader(format!("expected `{{`, found {l:?}"))).into());
    }

    let mut points = Vec::with_capacity(n);
    let mut last = ln;
    loop {
        let Some((ln, l)) = lines.next() else {
            return Err(err(last, FormatErrorKind::UnexpectedEof).into());
        };
        if l == "}" {
            if points.len() != n {
                // Reported at the line where the point list ended.
                return Err(err(
                    last,
                    FormatErrorKind::CountMismatch {
                        expected: n,
                        found: points.len(),
                    },
                )
                .into());
            }
            break;
        }
        if points.len() == n {
            return Err(err(
                ln,
                FormatErrorKind::CountMismatch {
                    expected: n,
                    found: n + 1,
                },
            )
            .into());
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(err(
                ln,
                FormatErrorKind::FieldCount {
                    expected: 2,
                    found: fields.len(),
                },
            )
            .into());
        }
        let coord = |s: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(err(ln, FormatErrorKind::NonNumeric(s.to_string())).into()),
            }
        };
        points.push(Point::new(coord(fields[0])?, coord(fields[1])?));
        last = ln;
    }
    if let Some((ln, l)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(err(ln, FormatErrorKind::InvalidValue(format!("trailing content {l:?}"))).into());
    }
    if n == 0 {
        return Err(err(2, FormatErrorKind::MalformedHeader("n_points must be positive".into())).into());
    }
    Shape::new(points)
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let (k, v) = line.split_once(':')?;
    (k.trim() == key).then(|| v.trim())
}

/// Canonical text with six decimals per coordinate.
pub fn format_pts(shape: &Shape) -> String {
    let mut out = format!("version: 1\nn_points: {}\n{{\n", shape.len());
    for p in shape.points() {
        let _ = writeln!(out, "{:.6} {:.6}", p.x, p.y);
    }
    out.push_str("}\n");
    out
}

pub fn read_pts(path: &Path) -> Result<Shape> {
    parse_pts(&super::read_text(path)?, &path.display().to_string())
}

pub fn write_pts(shape: &Shape, path: &Path) -> Result<()> {
    super::write_atomic(path, format_pts(shape).as_bytes())
}
