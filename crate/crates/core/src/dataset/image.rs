//! 8-bit RGB raster and binary PPM (P6) codec.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::BBox;

pub const RED: [u8; 3] = [255, 0, 0];

#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(Error::shape(format!(
                "{}x{} image needs {} bytes, got {}",
                width,
                height,
                3 * width * height,
                pixels.len()
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Image {
            width,
            height,
            pixels: rgb.repeat(width * height),
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Image { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Outline of `thickness` pixels drawn inward from the box edges,
    /// clipped to the image.
    pub fn draw_box(&mut self, b: &BBox, rgb: [u8; 3], thickness: usize) {
        if self.width == 0 || self.height == 0 || !b.is_valid() {
            return;
        }
        let clampx = |v: f64| (v.round().max(0.0) as usize).min(self.width - 1);
        let clampy = |v: f64| (v.round().max(0.0) as usize).min(self.height - 1);
        let (x1, y1, x2, y2) = (clampx(b.x1), clampy(b.y1), clampx(b.x2), clampy(b.y2));
        let t = thickness.max(1);
        for y in y1..=y2 {
            for x in x1..=x2 {
                if x < x1 + t || x + t > x2 || y < y1 + t || y + t > y2 {
                    self.set(x, y, rgb);
                }
            }
        }
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                match bytes.get(pos) {
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(c) if c.is_ascii_whitespace() => pos += 1,
                    Some(_) => break,
                    None => return Err(Error::format("truncated PPM header")),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(|c| !c.is_ascii_whitespace() && *c != b'#') {
                pos += 1;
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token()?;
        if magic != "P6" {
            return Err(Error::format(format!("bad PPM magic `{magic}`, expected P6")));
        }
        let mut num = |what: &str| -> Result<usize> {
            let t = token()?;
            t.parse().map_err(|_| Error::format(format!("bad PPM {what} `{t}`")))
        };
        let width = num("width")?;
        let height = num("height")?;
        let maxval = num("maxval")?;
        if maxval != 255 {
            return Err(Error::format(format!("PPM maxval {maxval} unsupported, expected 255")));
        }
        // exactly one whitespace byte separates header from payload
        if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
            return Err(Error::format("truncated PPM header"));
        }
        pos += 1;
        let need = 3 * width * height;
        let payload = &bytes[pos..];
        if payload.len() < need {
            return Err(Error::format(format!("PPM payload has {} bytes, expected {need}", payload.len())));
        }
        Ok(Image {
            width,
            height,
            pixels: payload[..need].to_vec(),
        })
    }
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Image::decode_ppm(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_ppm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, image.encode_ppm()).map_err(|e| Error::io(path, e))
}
