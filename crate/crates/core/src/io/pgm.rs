//! Binary PGM (P5) images.

use std::path::Path;

use crate::error::{Error, FormatError, FormatErrorKind, Result};
use crate::image::GrayImage;

/// Decoder for formats other than PGM, selected by the caller.
pub type DecoderHook = dyn Fn(&Path) -> Result<GrayImage> + Send + Sync;

pub fn decode_pgm(bytes: &[u8], origin: &str) -> Result<GrayImage> {
    let err = |kind| Error::from(FormatError::new(origin, 0, kind));
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(err(FormatErrorKind::BadMagic));
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for (k, slot) in header.iter_mut().enumerate() {
        // Whitespace and comments separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(err(FormatErrorKind::UnexpectedEof)),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let field = std::str::from_utf8(&bytes[start..pos]).unwrap_or_default();
        *slot = field.parse().map_err(|_| {
            let name = ["width", "height", "maxval"][k];
            err(FormatErrorKind::MalformedHeader(format!("bad {name}")))
        })?;
    }
    // Exactly one whitespace byte ends the header.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err(FormatErrorKind::MalformedHeader("missing separator before raster".into())));
    }
    pos += 1;
    let [w, h, maxval] = header;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(err(FormatErrorKind::MalformedHeader(format!("{w}x{h} maxval {maxval}"))));
    }
    let depth = if maxval < 256 { 1 } else { 2 };
    let raster = &bytes[pos..];
    if raster.len() < w * h * depth {
        return Err(err(FormatErrorKind::UnexpectedEof));
    }
    let scale = maxval as f32;
    let data = (0..w * h)
        .map(|i| {
            let v = if depth == 1 {
                raster[i] as usize
            } else {
                ((raster[2 * i] as usize) << 8) | raster[2 * i + 1] as usize
            };
            (v.min(maxval) as f32) / scale
        })
        .collect();
    GrayImage::new(w, h, data)
}

/// 8-bit P5 encoding; intensities are rounded to the nearest level.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, &path.display().to_string())
}

pub fn write_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    super::write_atomic(path, &encode_pgm(image))
}

/// Reads `.pgm` files directly and hands anything else to `hook`.
pub fn load_image(path: &Path, hook: Option<&DecoderHook>) -> Result<GrayImage> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    match (is_pgm, hook) {
        (true, _) => read_pgm(path),
        (false, Some(decode)) => decode(path),
        (false, None) => Err(Error::InvalidInput(format!(
            "{}: no decoder for this image format",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_round_trip_is_exact() {
        let img = GrayImage::from_fn(7, 5, |x, y| ((x * 37 + y * 11) % 256) as f64 / 255.0);
        let back = decode_pgm(&encode_pgm(&img), "m").unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn header_comments_and_sixteen_bit() {
        let mut bytes = b"P5 # comment\n2 1\n# another\n1000\n".to_vec();
        bytes.extend([0x01, 0xF4, 0x03, 0xE8]);
        let img = decode_pgm(&bytes, "m").unwrap();
        assert_eq!(img.data(), &[0.5, 1.0]);
    }

    #[test]
    fn malformed_files() {
        assert!(decode_pgm(b"P2\n1 1\n255\n\x00", "m").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00", "m").is_err());
        assert!(decode_pgm(b"P5\nx 2\n255\n", "m").is_err());
        assert!(decode_pgm(b"P5\n0 2\n255\n", "m").is_err());
    }
}
