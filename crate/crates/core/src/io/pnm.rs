use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Decoded 8-bit image: 1 channel (P5) or 3 interleaved channels (P6).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

/// Binary PGM: header "P5\n{W} {H}\n255\n" followed by exactly W*H bytes.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::shape(format!(
            "pgm payload {} bytes for {width}x{height}",
            pixels.len()
        )));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    fs::write(path, out)?;
    Ok(())
}

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n')
}

/// Read the next whitespace-delimited decimal token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < bytes.len() && is_ws(bytes[*pos]) {
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
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(Error::data("malformed PNM header"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::data("malformed PNM header"))
}

/// Parse a binary PGM (P5) or PPM (P6) file with maxval 255.
pub fn read_pnm(path: &Path) -> Result<PnmImage> {
    let bytes = fs::read(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() < 2 {
        return Err(Error::data("file too short for a PNM header"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::data("unsupported image: expected binary PGM (P5) or PPM (P6)")),
    };
    let mut pos = 2usize;
    let width = next_token(&bytes, &mut pos)?;
    let height = next_token(&bytes, &mut pos)?;
    let maxval = next_token(&bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::data(format!("unsupported PNM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !is_ws(bytes[pos]) {
        return Err(Error::data("malformed PNM header"));
    }
    pos += 1;
    let need = width * height * channels;
    let payload = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::data("truncated PNM payload"))?;
    Ok(PnmImage {
        width,
        height,
        channels,
        pixels: payload.to_vec(),
    })
}
