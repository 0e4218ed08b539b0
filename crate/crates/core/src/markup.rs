//! Landmark layouts and index permutations.
//!
//! Semi-frontal faces use the 68-point Multi-PIE markup, profile faces a
//! 39-point markup. Indices in public docs are 1-based; code is 0-based.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    SemiFrontal,
    Profile,
}

impl Layout {
    pub fn landmarks(&self) -> usize {
        match self {
            Layout::SemiFrontal => 68,
            Layout::Profile => 39,
        }
    }

    pub fn from_landmarks(l: usize) -> Result<Self> {
        match l {
            68 => Ok(Layout::SemiFrontal),
            39 => Ok(Layout::Profile),
            _ => Err(Error::InvalidInput(format!("no layout has {l} landmarks"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Layout::SemiFrontal => "semi-frontal",
            Layout::Profile => "profile",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi-frontal" => Ok(Layout::SemiFrontal),
            "profile" => Ok(Layout::Profile),
            _ => Err(Error::InvalidConfig(format!("unknown layout {s:?}"))),
        }
    }
}

/// Left/right landmark pairs of the 68-point markup, 1-based.
#[rustfmt::skip]
const MIRROR_68_PAIRS: [(usize, usize); 29] = [
    // jaw
    (1, 17), (2, 16), (3, 15), (4, 14), (5, 13), (6, 12), (7, 11), (8, 10),
    // brows
    (18, 27), (19, 26), (20, 25), (21, 24), (22, 23),
    // nose base
    (32, 36), (33, 35),
    // eyes
    (37, 46), (38, 45), (39, 44), (40, 43), (41, 48), (42, 47),
    // outer lip
    (49, 55), (50, 54), (51, 53), (56, 60), (57, 59),
    // inner lip
    (61, 65), (62, 64), (66, 68),
];

/// The 17 jaw-line points dropped by the inner-51 evaluation subset (0-based).
pub const CONTOUR_68: std::ops::Range<usize> = 0..17;

/// Outer eye corners in the 68-point markup (0-based; points 37 and 46).
pub const OUTER_EYE_CORNERS_68: (usize, usize) = (36, 45);

/// An involutive relabelling of landmarks applied after a horizontal flip.
///
/// After mirroring, landmark `i` of the relabelled shape is landmark
/// `perm[i]` of the mirrored one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkPermutation {
    perm: Vec<usize>,
}

impl LandmarkPermutation {
    pub fn identity(n: usize) -> Self {
        LandmarkPermutation {
            perm: (0..n).collect(),
        }
    }

    /// Builds a permutation from 1-based swap pairs; unlisted indices map to
    /// themselves.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut seen = vec![false; n];
        for &(i, j) in pairs {
            if i == 0 || j == 0 || i > n || j > n {
                return Err(Error::InvalidConfig(format!(
                    "permutation pair ({i}, {j}) outside 1..={n}"
                )));
            }
            let (a, b) = (i - 1, j - 1);
            if seen[a] || seen[b] {
                return Err(Error::InvalidConfig(format!(
                    "landmark in pair ({i}, {j}) already paired"
                )));
            }
            seen[a] = true;
            seen[b] = true;
            perm[a] = b;
            perm[b] = a;
        }
        Ok(LandmarkPermutation { perm })
    }

    /// Standard mirror relabelling of the 68-point markup.
    pub fn mirror_68() -> Self {
        LandmarkPermutation::from_pairs(68, &MIRROR_68_PAIRS).expect("static table is valid")
    }

    /// Default relabelling for a layout: the 68-point mirror table, or the
    /// identity for profile faces whose markup follows the visible side.
    pub fn default_for(layout: Layout) -> Self {
        match layout {
            Layout::SemiFrontal => LandmarkPermutation::mirror_68(),
            Layout::Profile => LandmarkPermutation::identity(39),
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn is_involution(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &j)| self.perm[j] == i)
    }

    /// 1-based pairs `(i, j)` with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.perm
            .iter()
            .enumerate()
            .filter(|(i, &j)| *i < j)
            .map(|(i, &j)| (i + 1, j + 1))
            .collect()
    }
}
