//! Owned RGB8 raster and the binary PPM (P6) codec.

use thiserror::Error;

use crate::annotation::NetpbmTokens;

pub type Rgb = [u8; 3];

/// Row-major RGB8 image. `pixels.len() == width * height * 3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RasterImage {
    /// Panics when either dimension is zero.
    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be at least 1x1");
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Option<Self> {
        let ok = width >= 1 && height >= 1 && pixels.len() == width as usize * height as usize * 3;
        ok.then_some(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, c: Rgb) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&c);
    }

    pub fn fill_rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, c: Rgb) {
        for y in y0..y1.min(self.height) {
            for x in x0..x1.min(self.width) {
                self.put(x, y, c);
            }
        }
    }

    /// RGBA8 copy with opaque alpha, for canvas display.
    pub fn to_rgba(&self) -> Vec<u8> {
        self.pixels
            .chunks_exact(3)
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PpmError {
    #[error("not a PPM stream (bad magic)")]
    BadMagic,
    #[error("unsupported Netpbm variant {0}")]
    Unsupported(String),
    #[error("missing or invalid header field: {0}")]
    Header(&'static str),
    #[error("unsupported maximum value {0}; only 255 is supported")]
    MaxValue(u32),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

pub fn write_ppm(img: &RasterImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

/// Reads a binary PPM with maxval 255. Header comments are accepted; bytes
/// after the pixel data are ignored.
pub fn read_ppm(bytes: &[u8]) -> Result<RasterImage, PpmError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(PpmError::BadMagic);
    }
    if bytes[1] != b'6' {
        return Err(if bytes[1].is_ascii_digit() {
            PpmError::Unsupported(String::from_utf8_lossy(&bytes[..2]).into_owned())
        } else {
            PpmError::BadMagic
        });
    }
    let body = &bytes[2..];
    let mut tokens = NetpbmTokens::new(body);
    let width = tokens.next_u32().filter(|&w| w > 0).ok_or(PpmError::Header("width"))?;
    let height = tokens.next_u32().filter(|&h| h > 0).ok_or(PpmError::Header("height"))?;
    let maxval = tokens.next_u32().ok_or(PpmError::Header("maxval"))?;
    if maxval != 255 {
        return Err(PpmError::MaxValue(maxval));
    }
    let pos = tokens.position();
    if !body.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PpmError::Header("separator after maxval"));
    }
    let data = &body[pos + 1..];
    let expected = width as usize * height as usize * 3;
    if data.len() < expected {
        return Err(PpmError::Truncated {
            expected,
            found: data.len(),
        });
    }
    Ok(RasterImage {
        width,
        height,
        pixels: data[..expected].to_vec(),
    })
}
