//! Landmark permutation tables: one `i j` pair per line, 1-based.
//! Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FormatError, FormatErrorKind, Result};
use crate::markup::LandmarkPermutation;

pub fn parse_permutation(text: &str, landmarks: usize, origin: &str) -> Result<LandmarkPermutation> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |kind| FormatError::new(origin, ln, kind);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(err(FormatErrorKind::FieldCount {
                expected: 2,
                found: fields.len(),
            })
            .into());
        }
        let idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| err(FormatErrorKind::NonNumeric(s.to_string())))
        };
        let pair = (idx(fields[0])?, idx(fields[1])?);
        // Validate incrementally so the error points at the offending line.
        pairs.push(pair);
        LandmarkPermutation::from_pairs(landmarks, &pairs)
            .map_err(|e| err(FormatErrorKind::InvalidValue(e.to_string())))?;
    }
    LandmarkPermutation::from_pairs(landmarks, &pairs)
}

pub fn format_permutation(perm: &LandmarkPermutation) -> String {
    let mut out = String::new();
    for (i, j) in perm.pairs() {
        let _ = writeln!(out, "{i} {j}");
    }
    out
}

pub fn read_permutation(path: &Path, landmarks: usize) -> Result<LandmarkPermutation> {
    parse_permutation(&super::read_text(path)?, landmarks, &path.display().to_string())
}
