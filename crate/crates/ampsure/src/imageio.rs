//! 8-bit grayscale image files: binary PGM (read/write) and PNG (read).

use std::fs;
use std::io::Cursor;
use std::path::Path;

use ampsure_core::Image;

use crate::error::{Error, Result};

/// Resizing applied after decoding: subsample first, then center-crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestOptions {
    pub subsample: Option<usize>,
    pub crop: Option<(usize, usize)>,
}

impl IngestOptions {
    pub fn apply(&self, image: Image) -> Result<Image> {
        let mut out = image;
        if let Some(f) = self.subsample {
            out = out.subsample(f)?;
        }
        if let Some((w, h)) = self.crop {
            out = out.center_crop(w, h)?;
        }
        Ok(out)
    }
}

/// Reads a P5 PGM or an 8-bit grayscale PNG, chosen by content.
pub fn ingest_image(path: &Path, opts: &IngestOptions) -> Result<Image> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let image = decode_image(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    opts.apply(image)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else {
        Err(Error::Format("not a binary PGM (P5) or PNG file".into()))
    }
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn pgm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn pgm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = pgm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("invalid PGM {what}")))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    if pgm_token(bytes, &mut pos)? != b"P5" {
        return Err(Error::Format("only binary PGM (P5) is supported".into()));
    }
    let width = pgm_number(bytes, &mut pos, "width")?;
    let height = pgm_number(bytes, &mut pos, "height")?;
    let maxval = pgm_number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}; only 8-bit is supported")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("empty PGM image".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < need {
        return Err(Error::Format(format!(
            "truncated PGM raster: {} bytes missing",
            need - raster.len()
        )));
    }
    let pixels = raster[..need].iter().map(|&b| f64::from(b)).collect();
    Ok(Image::new(width, height, pixels)?)
}

/// P5 bytes of the image clamped to [0, 255] and rounded.
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.quantized().pixels().iter().map(|&v| v as u8));
    out
}

pub fn write_pgm(image: &Image, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(image)).map_err(Error::io(path))
}

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let fmt = |e: png::DecodingError| Error::Format(format!("PNG: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(fmt)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::Format(format!(
            "PNG color type {:?} unsupported; only grayscale",
            info.color_type
        )));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "PNG bit depth {:?} unsupported; only 8-bit",
            info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(fmt)?;
    let mut pixels = Vec::with_capacity(width * height);
    for row in buf[..frame.buffer_size()].chunks(frame.line_size).take(height) {
        pixels.extend(row[..width].iter().map(|&b| f64::from(b)));
    }
    Ok(Image::new(width, height, pixels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n2 1\n# depth\n255\n\x07\x09";
        assert_eq!(decode_pgm(bytes).unwrap().pixels(), &[7.0, 9.0]);
    }

    #[test]
    fn pgm_wide_maxval_rejected() {
        let bytes = b"P5 1 1 65535\n\x00\x01";
        assert!(matches!(decode_pgm(bytes), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_format_rejected() {
        assert!(matches!(decode_image(b"P2 1 1 255 0"), Err(Error::Format(_))));
    }
}
