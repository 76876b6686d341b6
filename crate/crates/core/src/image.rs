//! Grayscale frames and binary PGM (P5) I/O.

use std::io::{Read, Write};

use crate::{Error, Result};

/// Row-major grayscale image with real-valued pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel access with mirrored borders (`-1 → 1`, `w → w-2`).
    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize) -> f64 {
        self.get(reflect(x, self.width), reflect(y, self.height))
    }

    /// Bilinear interpolation with edge clamping.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn crop(&self, rect: Rect) -> Result<GrayImage> {
        if rect.x + rect.width > self.width || rect.y + rect.height > self.height || rect.width == 0 || rect.height == 0 {
            return Err(Error::InvalidParameter(format!(
                "crop {rect:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(GrayImage::from_fn(rect.width, rect.height, |x, y| {
            self.get(rect.x + x, rect.y + y)
        }))
    }

    /// Decode a binary PGM (P5) with maxval ≤ 255.
    pub fn read_pgm(mut r: impl Read) -> Result<GrayImage> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::parse(0, format!("read failed: {e}")))?;
        let mut pos = 0usize;
        let mut header = Vec::new();
        while header.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::parse(0, "truncated PGM header"));
            }
            header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if header[0] != "P5" {
            return Err(Error::parse(0, format!("expected P5 magic, got {}", header[0])));
        }
        let num = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::parse(0, format!("bad PGM header field {s}")))
        };
        let (w, h, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(Error::parse(0, format!("unsupported maxval {maxval}")));
        }
        pos += 1; // single whitespace after maxval
        let need = w * h;
        if bytes.len() < pos + need {
            return Err(Error::parse(0, "truncated PGM pixel data"));
        }
        let data = bytes[pos..pos + need].iter().map(|&b| b as f64).collect();
        GrayImage::new(w, h, data)
    }

    /// Encode as binary PGM, rounding and clamping to 0..=255.
    pub fn write_pgm(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
        w.write_all(&bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}
