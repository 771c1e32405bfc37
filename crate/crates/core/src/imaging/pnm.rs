//! Binary PGM (P5) / PPM (P6) reading and PGM writing, 8-bit only.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ImagingError, Plane, Result};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    payload_start: usize,
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    *pos = skip_space_and_comments(bytes, *pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImagingError::MalformedHeader(format!("missing {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImagingError::MalformedHeader(format!("bad {what}")))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'5' || bytes[1] == b'6') {
        return Err(ImagingError::MalformedHeader("expected P5 or P6 magic".into()));
    }
    let mut pos = 2;
    let width = read_number(bytes, &mut pos, "width")? as usize;
    let height = read_number(bytes, &mut pos, "height")? as usize;
    let maxval = read_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(ImagingError::MalformedHeader(format!("empty image {width}x{height}")));
    }
    if maxval != 255 {
        return Err(ImagingError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImagingError::MalformedHeader("missing raster separator".into())),
    }
    Ok(Header { magic: [bytes[0], bytes[1]], width, height, payload_start: pos })
}

/// Decodes an in-memory P5/P6 image. PPM input keeps only the green samples.
pub fn read_plane(bytes: &[u8], spacing_mm: f64) -> Result<Plane> {
    let h = parse_header(bytes)?;
    let channels = if h.magic[1] == b'6' { 3 } else { 1 };
    let expected = h.width * h.height * channels;
    let payload = &bytes[h.payload_start..];
    if payload.len() < expected {
        return Err(ImagingError::TruncatedPayload { expected, found: payload.len() });
    }
    let pixels = if channels == 1 {
        payload[..expected].iter().map(|&b| b as f64 / 255.0).collect()
    } else {
        payload[..expected].chunks_exact(3).map(|rgb| rgb[1] as f64 / 255.0).collect()
    };
    Plane::new(h.width, h.height, pixels, spacing_mm)
}

pub fn load_plane(path: impl AsRef<Path>, spacing_mm: f64) -> Result<Plane> {
    read_plane(&fs::read(path)?, spacing_mm)
}

/// Encodes a plane as binary PGM, rounding to the nearest 8-bit level.
pub fn write_plane(p: &Plane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", p.width(), p.height()).into_bytes();
    out.extend(p.pixels().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn save_plane(p: &Plane, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&write_plane(p))?;
    Ok(())
}
