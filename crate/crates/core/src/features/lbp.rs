//! Local binary patterns.
//!
//! Each pixel compares itself with 8 neighbours at Chebyshev radius `r`,
//! visited clockwise from the top-left one; neighbour `k` sets bit `k` when
//! it is strictly brighter than the centre.

use super::patch::Patch;
use crate::error::{Error, Result};
use crate::image::GrayImage;

const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
];

/// Histogram sizes for the two supported code mappings.
pub const RAW_BINS: usize = 256;
pub const UNIFORM_BINS: usize = 59;

#[derive(Debug, Clone, PartialEq)]
pub struct LbpConfig {
    pub radius: usize,
    /// 256 for raw codes, 59 for uniform patterns.
    pub bins: usize,
}

impl Default for LbpConfig {
    fn default() -> Self {
        LbpConfig {
            radius: 1,
            bins: RAW_BINS,
        }
    }
}

impl LbpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::InvalidConfig("lbp radius must be positive".into()));
        }
        if self.bins != RAW_BINS && self.bins != UNIFORM_BINS {
            return Err(Error::InvalidConfig(format!(
                "lbp bins must be {RAW_BINS} or {UNIFORM_BINS}, got {}",
                self.bins
            )));
        }
        Ok(())
    }
}

/// Number of 0/1 transitions around the circular 8-bit code.
pub fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

/// Uniform-pattern bin: the 58 codes with at most two transitions get their
/// own bins in ascending code order, everything else shares bin 58.
fn uniform_table() -> [u8; 256] {
    let mut table = [58u8; 256];
    let mut next = 0u8;
    for code in 0..=255u8 {
        if transitions(code) <= 2 {
            table[code as usize] = next;
            next += 1;
        }
    }
    table
}

#[inline]
pub(crate) fn code_at(patch: &Patch, i: isize, j: isize, radius: isize) -> u8 {
    let c = patch.at(i, j);
    let mut code = 0u8;
    for (k, (dx, dy)) in NEIGHBOURS.iter().enumerate() {
        if patch.at(i + dx * radius, j + dy * radius) > c {
            code |= 1 << k;
        }
    }
    code
}

/// Appends the L1-normalised LBP histogram of the patch interior.
pub(crate) fn lbp_into(patch: &Patch, cfg: &LbpConfig, out: &mut Vec<f64>) {
    debug_assert!(patch.border >= cfg.radius);
    let start = out.len();
    out.resize(start + cfg.bins, 0.0);
    let hist = &mut out[start..];
    let table = (cfg.bins == UNIFORM_BINS).then(uniform_table);
    let r = cfg.radius as isize;
    for j in 0..patch.ny as isize {
        for i in 0..patch.nx as isize {
            let code = code_at(patch, i, j, r);
            let bin = match &table {
                Some(t) => t[code as usize] as usize,
                None => code as usize,
            };
            hist[bin] += 1.0;
        }
    }
    let total = (patch.nx * patch.ny) as f64;
    hist.iter_mut().for_each(|v| *v /= total);
}

/// LBP histogram of the `side x side` patch centred on `centre`.
pub fn lbp_patch(image: &GrayImage, centre: (f64, f64), side: usize, cfg: &LbpConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if side < 4 {
        return Err(Error::InvalidConfig(format!("patch side {side} is below 4")));
    }
    if !(centre.0.is_finite() && centre.1.is_finite()) {
        return Err(Error::InvalidInput("patch centre must be finite".into()));
    }
    let patch = Patch::around(image, centre, side, cfg.radius);
    let mut out = Vec::with_capacity(cfg.bins);
    lbp_into(&patch, cfg, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn uniform_table_has_58_patterns() {
        let t = uniform_table();
        assert_eq!((0..=255u8).filter(|&c| transitions(c) <= 2).count(), 58);
        assert_eq!(t[0], 0);
        assert_eq!(t[255], 57);
        assert_eq!(t[0b0101_0101], 58);
    }

    #[test]
    fn constant_image_puts_all_mass_in_bin_zero() {
        let img = GrayImage::from_fn(20, 20, |_, _| 0.4);
        for bins in [RAW_BINS, UNIFORM_BINS] {
            let cfg = LbpConfig { radius: 1, bins };
            let h = lbp_patch(&img, (10.0, 10.0), 8, &cfg).unwrap();
            assert_eq!(h[0], 1.0);
            assert!(h[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn bright_pixel_gives_single_bit_codes_to_its_neighbours() {
        let img = GrayImage::from_fn(9, 9, |x, y| if (x, y) == (4, 4) { 1.0 } else { 0.0 });
        let patch = Patch::around(&img, (4.0, 4.0), 5, 1);
        // Interior (2, 2) is image pixel (4, 4).
        for (dx, dy) in NEIGHBOURS {
            let code = code_at(&patch, 2 + dx, 2 + dy, 1);
            assert_eq!(code.count_ones(), 1, "neighbour ({dx},{dy})");
        }
        assert_eq!(code_at(&patch, 2, 2, 1), 0);
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let img = GrayImage::from_fn(12, 12, |_, _| rng.random::<f64>());
        for radius in [1usize, 2] {
            let cfg = LbpConfig {
                radius,
                bins: RAW_BINS,
            };
            let got = lbp_patch(&img, (6.0, 6.0), 12, &cfg).unwrap();
            let r = radius as i64;
            let mut want = vec![0.0; 256];
            for y in 0..12i64 {
                for x in 0..12i64 {
                    let c = img.get(x, y);
                    let nb = [
                        img.get(x - r, y - r),
                        img.get(x, y - r),
                        img.get(x + r, y - r),
                        img.get(x + r, y),
                        img.get(x + r, y + r),
                        img.get(x, y + r),
                        img.get(x - r, y + r),
                        img.get(x - r, y),
                    ];
                    let mut code = 0usize;
                    for (k, v) in nb.iter().enumerate() {
                        if *v > c {
                            code += 1 << k;
                        }
                    }
                    want[code] += 1.0 / 144.0;
                }
            }
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_unknown_bin_count() {
        let cfg = LbpConfig { radius: 1, bins: 10 };
        assert!(cfg.validate().is_err());
    }
}
