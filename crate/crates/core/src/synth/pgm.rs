//! Binary PGM (P5) encoding of bubble rasters.
//!
//! The on-disk unit is an 8-bit greyscale netpbm file, maxval 255, with
//! the exact bubble dimensions. The decoder works byte-by-byte, accepts
//! `#` comment lines anywhere in the header, and rejects anything it
//! cannot account for (wrong magic, wrong dimensions, short or trailing
//! raster bytes), so it is safe to point at untrusted files.

use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::image::{Raster, HEIGHT, PIXELS, WIDTH};
use crate::Result;

/// Encode a raster as a P5 PGM with maxval 255. Pixels are clamped to
/// [0, 1] and rounded to the nearest of 256 levels.
pub fn encode_pgm(image: &Raster) -> Vec<u8> {
    let mut out = Vec::with_capacity(PIXELS + 16);
    out.extend_from_slice(format!("P5\n{WIDTH} {HEIGHT}\n255\n").as_bytes());
    out.extend(
        image
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderParser { bytes, pos: 0 }
    }

    fn fail(&self, detail: impl Into<String>) -> Error {
        Error::malformed("pgm", detail)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Consume whitespace and `#`-to-end-of-line comments.
    fn skip_separators(&mut self) {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(b) = self.peek() {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn read_number(&mut self, what: &str) -> Result<u32> {
        self.skip_separators();
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.fail(format!("expected {what}, found no digits")));
        }
        if self.pos - start > 7 {
            return Err(self.fail(format!("{what} is implausibly large")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        Ok(text.parse::<u32>().expect("short digit run"))
    }
}

/// Decode a P5 PGM into a raster. The file must have exactly the bubble
/// dimensions and a single-byte maxval; comments are tolerated anywhere
/// in the header.
pub fn decode_pgm(bytes: &[u8]) -> Result<Raster> {
    let mut p = HeaderParser::new(bytes);
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(p.fail("missing P5 magic"));
    }
    p.pos = 2;
    let width = p.read_number("width")?;
    let height = p.read_number("height")?;
    let maxval = p.read_number("maxval")?;
    if width as usize != WIDTH || height as usize != HEIGHT {
        return Err(p.fail(format!(
            "expected {WIDTH}x{HEIGHT} bubble image, got {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 255 {
        return Err(p.fail(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match p.peek() {
        Some(b) if b.is_ascii_whitespace() => p.pos += 1,
        _ => return Err(p.fail("missing whitespace before raster")),
    }
    let raster = &bytes[p.pos..];
    if raster.len() < PIXELS {
        return Err(p.fail(format!(
            "raster truncated: {} of {PIXELS} bytes",
            raster.len()
        )));
    }
    if raster.len() > PIXELS {
        return Err(p.fail(format!(
            "{} trailing bytes after raster",
            raster.len() - PIXELS
        )));
    }
    let scale = f64::from(maxval);
    Raster::from_vec(raster.iter().map(|&b| f64::from(b) / scale).collect())
}

/// Write a raster to disk as PGM.
pub fn save_pgm(path: &Path, image: &Raster) -> Result<()> {
    fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a PGM raster from disk.
pub fn load_pgm(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Malformed { format, detail } => Error::Malformed {
            format,
            detail: format!("{}: {detail}", path.display()),
        },
        other => other,
    })
}
