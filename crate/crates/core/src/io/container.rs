//! Binary model container.
//!
//! Little-endian throughout:
//!
//! ```text
//! "CSR1"  u32 version  [u8; 4] subtype ("SHAP" or "BOX1")
//! u32 L  u32 M  u32 N_f  f64 lambda
//! u32 n  n bytes of feature config text (`key = value` lines)
//! SHAP: 2L f64 mean shape (x then y), u32 k, k f64 residuals
//! BOX1: u8 init policy (0 whole image, 1 external box), u32 k, k f64 mean IoU
//! M times: u32 rows  u32 cols  rows*cols f64 A (row-major)  rows f64 e
//! ```
//!
//! Box models store L = 0.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::bbox_regression::{BoxCascadeModel, BoxFeatureConfig, InitPolicy};
use crate::error::{Error, FormatError, FormatErrorKind, Result};
use crate::features::FeatureConfig;
use crate::geometry::Shape;
use crate::io::config::{box_feature_entries, entries, feature_entries, render, set_box_feature, set_feature};
use crate::regression::{CascadeModel, WeakRegressor};

pub const MAGIC: &[u8; 4] = b"CSR1";
pub const VERSION: u32 = 1;
pub const SHAPE_TAG: &[u8; 4] = b"SHAP";
pub const BOX_TAG: &[u8; 4] = b"BOX1";

const PREFIX: &str = "features";

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }
    fn text(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn stages(&mut self, stages: &[WeakRegressor]) {
        for s in stages {
            self.u32(s.a.nrows());
            self.u32(s.a.ncols());
            for r in 0..s.a.nrows() {
                for c in 0..s.a.ncols() {
                    self.f64(s.a[(r, c)]);
                }
            }
            self.f64s(s.e.as_slice());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, kind: FormatErrorKind) -> Error {
        FormatError::new(self.origin, 0, kind).into()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(FormatErrorKind::UnexpectedEof));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        // Length check up front so a corrupt count cannot trigger a huge allocation.
        if (self.bytes.len() - self.pos) / 8 < n {
            return Err(self.err(FormatErrorKind::UnexpectedEof));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn text(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?)
            .map_err(|_| self.err(FormatErrorKind::InvalidValue("feature config is not UTF-8".into())))
    }

    fn stages(&mut self, m: usize) -> Result<Vec<WeakRegressor>> {
        let mut out = Vec::with_capacity(m.min(64));
        for _ in 0..m {
            let rows = self.u32()?;
            let cols = self.u32()?;
            let a = self.f64s(rows.checked_mul(cols).ok_or_else(|| self.err(FormatErrorKind::UnexpectedEof))?)?;
            let e = self.f64s(rows)?;
            out.push(WeakRegressor::new(DMatrix::from_row_slice(rows, cols, &a), DVector::from_vec(e))?);
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(FormatErrorKind::InvalidValue(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            ))));
        }
        Ok(())
    }
}

fn header(w: &mut Writer, tag: &[u8; 4], l: usize, m: usize, nf: usize, lambda: f64, cfg: &str) {
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    w.0.extend_from_slice(tag);
    w.u32(l);
    w.u32(m);
    w.u32(nf);
    w.f64(lambda);
    w.text(cfg);
}

struct Header<'a> {
    tag: [u8; 4],
    l: usize,
    m: usize,
    nf: usize,
    lambda: f64,
    config: &'a str,
}

fn read_header<'a>(r: &mut Reader<'a>) -> Result<Header<'a>> {
    if r.take(4).map_err(|_| r.err(FormatErrorKind::BadMagic))? != MAGIC {
        return Err(r.err(FormatErrorKind::BadMagic));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(r.err(FormatErrorKind::UnsupportedVersion(version as u32)));
    }
    let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
    Ok(Header {
        tag,
        l: r.u32()?,
        m: r.u32()?,
        nf: r.u32()?,
        lambda: r.f64()?,
        config: r.text()?,
    })
}

fn config_error(origin: &str, line: usize, key: &str, msg: Option<String>) -> Error {
    let kind = match msg {
        None => FormatErrorKind::UnknownKey(key.to_string()),
        Some(m) => FormatErrorKind::InvalidValue(format!("{key}: {m}")),
    };
    FormatError::new(format!("{origin} (feature config)"), line, kind).into()
}

/// Parses a feature configuration written by [`feature_entries`] with prefix `features`.
fn parse_feature_config(text: &str, origin: &str) -> Result<FeatureConfig> {
    let mut c = FeatureConfig::default();
    for (ln, k, v) in entries(text, origin)? {
        let key = k.strip_prefix("features.").unwrap_or("");
        match set_feature(&mut c, key, &v) {
            None => return Err(config_error(origin, ln, &k, None)),
            Some(Err(m)) => return Err(config_error(origin, ln, &k, Some(m))),
            Some(Ok(())) => {}
        }
    }
    Ok(c)
}

fn parse_box_feature_config(text: &str, origin: &str) -> Result<BoxFeatureConfig> {
    let mut c = BoxFeatureConfig::default();
    for (ln, k, v) in entries(text, origin)? {
        let key = k.strip_prefix("features.").unwrap_or("");
        match set_box_feature(&mut c, key, &v) {
            None => return Err(config_error(origin, ln, &k, None)),
            Some(Err(m)) => return Err(config_error(origin, ln, &k, Some(m))),
            Some(Ok(())) => {}
        }
    }
    Ok(c)
}

pub fn encode_cascade(model: &CascadeModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let cfg = render(&feature_entries(PREFIX, model.feature_config()));
    header(&mut w, SHAPE_TAG, model.landmarks(), model.num_stages(), model.feature_dim(), model.lambda(), &cfg);
    w.f64s(&model.mean_shape().to_vector());
    w.u32(model.residuals().len());
    w.f64s(model.residuals());
    w.stages(model.stages());
    w.0
}

pub fn decode_cascade(bytes: &[u8], origin: &str) -> Result<CascadeModel> {
    let mut r = Reader { bytes, pos: 0, origin };
    let h = read_header(&mut r)?;
    if &h.tag != SHAPE_TAG {
        return Err(r.err(FormatErrorKind::InvalidValue(format!(
            "expected a shape cascade, found subtype {:?}",
            String::from_utf8_lossy(&h.tag)
        ))));
    }
    let features = parse_feature_config(h.config, origin)?;
    let mean = Shape::from_vector(&r.f64s(2 * h.l)?)?;
    let k = r.u32()?;
    let residuals = r.f64s(k)?;
    let stages = r.stages(h.m)?;
    r.finish()?;
    let model = CascadeModel::new(stages, mean, features, h.lambda, residuals)?;
    if model.feature_dim() != h.nf {
        return Err(r.err(FormatErrorKind::InvalidValue(format!(
            "header declares {} features, config gives {}",
            h.nf,
            model.feature_dim()
        ))));
    }
    Ok(model)
}

pub fn encode_box_cascade(model: &BoxCascadeModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let cfg = render(&box_feature_entries(PREFIX, model.feature_config()));
    let nf = model.feature_config().dimension();
    header(&mut w, BOX_TAG, 0, model.stages().len(), nf, model.lambda(), &cfg);
    w.u8(match model.init_policy() {
        InitPolicy::WholeImage => 0,
        InitPolicy::ExternalBox => 1,
    });
    w.u32(model.mean_iou().len());
    w.f64s(model.mean_iou());
    w.stages(model.stages());
    w.0
}

pub fn decode_box_cascade(bytes: &[u8], origin: &str) -> Result<BoxCascadeModel> {
    let mut r = Reader { bytes, pos: 0, origin };
    let h = read_header(&mut r)?;
    if &h.tag != BOX_TAG {
        return Err(r.err(FormatErrorKind::InvalidValue(format!(
            "expected a box cascade, found subtype {:?}",
            String::from_utf8_lossy(&h.tag)
        ))));
    }
    let features = parse_box_feature_config(h.config, origin)?;
    if h.l != 0 || features.dimension() != h.nf {
        return Err(r.err(FormatErrorKind::InvalidValue("box cascade header does not match its config".into())));
    }
    let policy = match r.u8()? {
        0 => InitPolicy::WholeImage,
        1 => InitPolicy::ExternalBox,
        p => return Err(r.err(FormatErrorKind::InvalidValue(format!("unknown init policy {p}")))),
    };
    let k = r.u32()?;
    let iou = r.f64s(k)?;
    let stages = r.stages(h.m)?;
    r.finish()?;
    BoxCascadeModel::new(stages, features, policy, h.lambda, iou)
}

pub fn read_cascade(path: &Path) -> Result<CascadeModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cascade(&bytes, &path.display().to_string())
}

pub fn write_cascade(path: &Path, model: &CascadeModel) -> Result<()> {
    super::write_atomic(path, &encode_cascade(model))
}

pub fn read_box_cascade(path: &Path) -> Result<BoxCascadeModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_box_cascade(&bytes, &path.display().to_string())
}

pub fn write_box_cascade(path: &Path, model: &BoxCascadeModel) -> Result<()> {
    super::write_atomic(path, &encode_box_cascade(model))
}

fn dump_stages(out: &mut String, stages: &[WeakRegressor]) {
    use std::fmt::Write;
    for (m, s) in stages.iter().enumerate() {
        let _ = writeln!(out, "stage {} {}x{}", m + 1, s.a.nrows(), s.a.ncols());
        for r in 0..s.a.nrows() {
            let row: Vec<String> = (0..s.a.ncols()).map(|c| s.a[(r, c)].to_string()).collect();
            let _ = writeln!(out, "{} | {}", row.join(" "), s.e[r]);
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Human-readable dump. Floats use the shortest representation that
/// parses back to the same value, so nothing is lost.
pub fn export_cascade_text(model: &CascadeModel) -> String {
    let mut out = format!(
        "CSR1 shape cascade\nlandmarks {}\nstages {}\nfeatures {}\nlambda {}\n",
        model.landmarks(),
        model.num_stages(),
        model.feature_dim(),
        model.lambda()
    );
    out += &render(&feature_entries(PREFIX, model.feature_config()));
    out += &format!("mean {}\nresiduals {}\n", join(&model.mean_shape().to_vector()), join(model.residuals()));
    dump_stages(&mut out, model.stages());
    out
}

pub fn export_box_cascade_text(model: &BoxCascadeModel) -> String {
    let mut out = format!(
        "CSR1 box cascade\nstages {}\nfeatures {}\nlambda {}\ninit {:?}\n",
        model.stages().len(),
        model.feature_config().dimension(),
        model.lambda(),
        model.init_policy()
    );
    out += &render(&box_feature_entries(PREFIX, model.feature_config()));
    out += &format!("mean_iou {}\n", join(model.mean_iou()));
    dump_stages(&mut out, model.stages());
    out
}
