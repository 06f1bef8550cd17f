//! Binary PGM (P5) image decoding and encoding.
//!
//! PGM is the simplest self-describing grayscale container: an ASCII
//! header — magic `P5`, width, height, maxval, separated by whitespace and
//! optional `#` comment lines — followed by one raw byte per pixel in
//! row-major order (for maxval < 256). The classifier accepts 28×28 images
//! (padded on load like the training data) and 32×32 images (used as-is);
//! anything else, and any non-P5 variant such as the ASCII `P2` form, is
//! rejected.

use std::fs;
use std::path::Path;

use digitnet_core::data::GrayImage;

use crate::{CliError, Result};

/// Pixel sides accepted by the classifier.
const ACCEPTED_SIDES: [usize; 2] = [28, 32];

/// Decodes a binary PGM into a grayscale image.
pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    let mut p = Parser { bytes, pos: 0 };
    let magic = [p.byte()?, p.byte()?];
    match &magic {
        b"P5" => {}
        b"P2" => {
            return Err(CliError::Pgm(String::from(
                "ASCII PGM (P2) is not supported, re-encode as binary (P5)",
            )))
        }
        other => {
            return Err(CliError::Pgm(format!(
                "bad magic {:?}, not a PGM file",
                String::from_utf8_lossy(other)
            )))
        }
    }
    let width = p.ascii_number("width")?;
    let height = p.ascii_number("height")?;
    let maxval = p.ascii_number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(CliError::Pgm(format!(
            "maxval {maxval} out of the single-byte range 1..=255"
        )));
    }
    // The header ends with exactly one whitespace byte before the raster.
    let sep = p.byte()?;
    if !sep.is_ascii_whitespace() {
        return Err(CliError::Pgm(format!(
            "expected whitespace after maxval, got byte 0x{sep:02x}"
        )));
    }
    if width != height || !ACCEPTED_SIDES.contains(&width) {
        return Err(CliError::Pgm(format!(
            "image is {width}x{height}, the classifier accepts 28x28 or 32x32"
        )));
    }
    let expected = width * height;
    let raster = &p.bytes[p.pos..];
    if raster.len() != expected {
        return Err(CliError::Pgm(format!(
            "raster has {} bytes, {width}x{height} needs {expected}",
            raster.len()
        )));
    }
    GrayImage::new(height, width, raster.to_vec()).map_err(CliError::Core)
}

/// Encodes a grayscale image as a binary PGM.
pub fn encode(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.cols(), image.rows()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

/// Reads and decodes a PGM file.
pub fn read(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes)
}

/// Encodes and writes a PGM file.
pub fn write(image: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode(image)).map_err(|e| CliError::io(path, e))
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| CliError::Pgm(String::from("file truncated inside the header")))?;
        self.pos += 1;
        Ok(b)
    }

    /// Skips whitespace and `#` comments (which run to end of line), then
    /// reads one unsigned decimal number.
    fn ascii_number(&mut self, what: &str) -> Result<usize> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while !matches!(self.bytes.get(self.pos), None | Some(b'\n')) {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = self.pos;
        while matches!(self.bytes.get(self.pos), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(CliError::Pgm(format!("missing or non-numeric {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("digits are ASCII")
            .parse()
            .map_err(|_| CliError::Pgm(format!("{what} out of range")))
    }
}
