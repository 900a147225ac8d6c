//! Binary PGM (P5), 8-bit samples only.

use std::path::Path;

use crate::error::{format_err, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Splits header tokens, skipping whitespace and `#` comments.
struct HeaderLexer<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderLexer<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(start, format!("expected {what} in PGM header")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(start, format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(format_err(0, "not a binary PGM (magic P5)"));
    }
    let mut lx = HeaderLexer { bytes, pos: 2 };
    let width = lx.number("width")?;
    let height = lx.number("height")?;
    let maxval = lx.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err(2, "PGM has zero extent"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format_err(lx.pos, format!("only 8-bit PGM supported, maxval {maxval}")));
    }
    match bytes.get(lx.pos) {
        Some(c) if c.is_ascii_whitespace() => lx.pos += 1,
        _ => return Err(format_err(lx.pos, "missing whitespace after maxval")),
    }
    let need = width * height;
    let avail = bytes.len() - lx.pos;
    if avail < need {
        return Err(format_err(
            bytes.len(),
            format!("truncated PGM raster: need {need} bytes, {avail} present"),
        ));
    }
    if avail > need {
        return Err(format_err(lx.pos + need, "trailing bytes after PGM raster"));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: bytes[lx.pos..].to_vec(),
    })
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    std::fs::write(path, encode_pgm(img))?;
    Ok(())
}
