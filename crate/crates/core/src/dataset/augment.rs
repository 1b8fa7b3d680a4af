//! Seeded augmentations: flip, crop, occlusion, Gaussian noise, brightness.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::image::Image;
use super::labels::{xyxy_to_cxcywh, Annotation};
use crate::error::{Error, Result};
use crate::losses::BBox;

pub const PAD_GRAY: u8 = 114;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AugmentKind {
    Hflip,
    Crop,
    Occlude,
    Noise,
    Brightness,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 5] = [
        AugmentKind::Hflip,
        AugmentKind::Crop,
        AugmentKind::Occlude,
        AugmentKind::Noise,
        AugmentKind::Brightness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentKind::Hflip => "hflip",
            AugmentKind::Crop => "crop",
            AugmentKind::Occlude => "occlude",
            AugmentKind::Noise => "noise",
            AugmentKind::Brightness => "brightness",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AugmentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown augmentation `{s}`")))
    }
}

/// Sampling ranges, all inclusive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    /// Crop side scale.
    pub crop_scale: (f64, f64),
    /// Boxes keeping less than this fraction of their area are dropped.
    pub crop_min_retained: f64,
    pub occlude_count: (usize, usize),
    /// Area of each occluding rectangle as a fraction of the image.
    pub occlude_area: (f64, f64),
    /// Noise standard deviation on the 0..255 scale.
    pub noise_sigma: (f64, f64),
    pub brightness: (f64, f64),
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            crop_scale: (0.6, 1.0),
            crop_min_retained: 0.25,
            occlude_count: (1, 3),
            occlude_area: (0.05, 0.15),
            noise_sigma: (5.0, 20.0),
            brightness: (0.6, 1.4),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentOp {
    pub kind: AugmentKind,
    pub params: AugmentParams,
    pub seed: u64,
}

impl AugmentOp {
    pub fn new(kind: AugmentKind, seed: u64) -> Self {
        AugmentOp {
            kind,
            params: AugmentParams::default(),
            seed,
        }
    }
}

/// Per-file seed from a global seed and a file name (FNV-1a 64 over the
/// seed bytes then the name), so results do not depend on visit order.
pub fn derive_seed(global: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in global.to_le_bytes().iter().chain(name.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

pub fn augment(image: &Image, annotations: &[Annotation], op: &AugmentOp) -> (Image, Vec<Annotation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(op.seed);
    let p = &op.params;
    match op.kind {
        AugmentKind::Hflip => hflip(image, annotations),
        AugmentKind::Crop => {
            let sx = uniform(&mut rng, p.crop_scale);
            let sy = uniform(&mut rng, p.crop_scale);
            let cw = ((image.width() as f64 * sx).round() as usize).clamp(1, image.width().max(1));
            let ch = ((image.height() as f64 * sy).round() as usize).clamp(1, image.height().max(1));
            let x0 = rng.random_range(0..=image.width().saturating_sub(cw));
            let y0 = rng.random_range(0..=image.height().saturating_sub(ch));
            crop(image, annotations, x0, y0, cw, ch, p.crop_min_retained)
        }
        AugmentKind::Occlude => {
            let mut out = image.clone();
            let (w, h) = (image.width(), image.height());
            if w == 0 || h == 0 {
                return (out, annotations.to_vec());
            }
            let n = rng.random_range(p.occlude_count.0..=p.occlude_count.1.max(p.occlude_count.0));
            for _ in 0..n {
                let area = uniform(&mut rng, p.occlude_area) * (w * h) as f64;
                let aspect = rng.random_range(0.5..=2.0f64);
                let rw = ((area * aspect).sqrt().round() as usize).clamp(1, w);
                let rh = ((area / rw as f64).round() as usize).clamp(1, h);
                let x0 = rng.random_range(0..=w - rw);
                let y0 = rng.random_range(0..=h - rh);
                let random_fill = rng.random_bool(0.5);
                for y in y0..y0 + rh {
                    for x in x0..x0 + rw {
                        let rgb = if random_fill {
                            [rng.random(), rng.random(), rng.random()]
                        } else {
                            [PAD_GRAY; 3]
                        };
                        out.set(x, y, rgb);
                    }
                }
            }
            (out, annotations.to_vec())
        }
        AugmentKind::Noise => {
            let sigma = uniform(&mut rng, p.noise_sigma);
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            let mut out = image.clone();
            for v in out.pixels_mut() {
                *v = (*v as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
            }
            (out, annotations.to_vec())
        }
        AugmentKind::Brightness => {
            let factor = uniform(&mut rng, p.brightness);
            let mut out = image.clone();
            for v in out.pixels_mut() {
                *v = (*v as f64 * factor).round().clamp(0.0, 255.0) as u8;
            }
            (out, annotations.to_vec())
        }
    }
}

pub fn hflip(image: &Image, annotations: &[Annotation]) -> (Image, Vec<Annotation>) {
    let w = image.width();
    let out = Image::from_fn(w, image.height(), |x, y| image.get(w - 1 - x, y));
    let anns = annotations.iter().map(|a| Annotation { cx: 1.0 - a.cx, ..*a }).collect();
    (out, anns)
}

/// Crops the `cw × ch` window at `(x0, y0)` and remaps boxes into it.
pub fn crop(
    image: &Image,
    annotations: &[Annotation],
    x0: usize,
    y0: usize,
    cw: usize,
    ch: usize,
    min_retained: f64,
) -> (Image, Vec<Annotation>) {
    let (iw, ih) = (image.width() as f64, image.height() as f64);
    let out = Image::from_fn(cw, ch, |x, y| image.get(x0 + x, y0 + y));
    let window = BBox::new(x0 as f64, y0 as f64, (x0 + cw) as f64, (y0 + ch) as f64);
    let anns = annotations
        .iter()
        .filter_map(|a| {
            let b = a.to_xyxy(iw, ih);
            let kept = BBox::new(
                b.x1.max(window.x1),
                b.y1.max(window.y1),
                b.x2.min(window.x2),
                b.y2.min(window.y2),
            );
            if kept.width() <= 0.0 || kept.height() <= 0.0 || kept.area() < min_retained * b.area() {
                return None;
            }
            let local = kept.translate(-window.x1, -window.y1);
            Some(xyxy_to_cxcywh(&local, a.class_id, cw as f64, ch as f64).clamped())
        })
        .collect();
    (out, anns)
}
