//! Aspect-preserving resize onto a padded square network input.

use super::augment::PAD_GRAY;
use super::image::Image;
use crate::losses::BBox;
use crate::tensor::Tensor;

/// Maps original-image pixels to letterboxed pixels: `x' = x·scale + pad_x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LetterboxTransform {
    pub scale: f64,
    pub pad_x: usize,
    pub pad_y: usize,
    pub src_w: usize,
    pub src_h: usize,
    pub target: usize,
}

impl LetterboxTransform {
    pub fn new(src_w: usize, src_h: usize, target: usize) -> Self {
        let scale = target as f64 / src_w.max(src_h).max(1) as f64;
        let (nw, nh) = Self::resized(src_w, src_h, scale, target);
        LetterboxTransform {
            scale,
            pad_x: (target - nw) / 2,
            pad_y: (target - nh) / 2,
            src_w,
            src_h,
            target,
        }
    }

    fn resized(w: usize, h: usize, scale: f64, target: usize) -> (usize, usize) {
        let r = |v: usize| ((v as f64 * scale).round() as usize).clamp(1, target);
        (r(w), r(h))
    }

    pub fn content_size(&self) -> (usize, usize) {
        Self::resized(self.src_w, self.src_h, self.scale, self.target)
    }

    pub fn forward_box(&self, b: &BBox) -> BBox {
        b.scale(self.scale).translate(self.pad_x as f64, self.pad_y as f64)
    }

    /// Letterboxed box back to original coordinates, clipped to the image.
    pub fn inverse_box(&self, b: &BBox) -> BBox {
        b.translate(-(self.pad_x as f64), -(self.pad_y as f64))
            .scale(1.0 / self.scale)
            .clip(self.src_w as f64, self.src_h as f64)
    }
}

/// Nearest-neighbour letterbox into a `(1, 3, target, target)` tensor with
/// values in `[0, 1]`.
pub fn letterbox(image: &Image, target: usize) -> (Tensor, LetterboxTransform) {
    let t = LetterboxTransform::new(image.width(), image.height(), target);
    let (nw, nh) = t.content_size();
    let pad = PAD_GRAY as f32 / 255.0;
    let mut out = Tensor::full([1, 3, target, target], pad);
    if image.width() == 0 || image.height() == 0 {
        return (out, t);
    }
    let data = out.data_mut();
    let plane = target * target;
    for y in 0..nh {
        let sy = (((y as f64 + 0.5) / t.scale) as usize).min(image.height() - 1);
        for x in 0..nw {
            let sx = (((x as f64 + 0.5) / t.scale) as usize).min(image.width() - 1);
            let px = image.get(sx, sy);
            let o = (y + t.pad_y) * target + x + t.pad_x;
            for (c, v) in px.iter().enumerate() {
                data[c * plane + o] = *v as f32 / 255.0;
            }
        }
    }
    (out, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_input_is_identity() {
        let img = Image::from_fn(64, 64, |x, y| [x as u8, y as u8, 7]);
        let (t, tf) = letterbox(&img, 64);
        assert_eq!((tf.scale, tf.pad_x, tf.pad_y), (1.0, 0, 0));
        assert_eq!(t.shape(), [1, 3, 64, 64]);
        assert_eq!(t.at(0, 0, 5, 9), 9.0 / 255.0);
        assert_eq!(t.at(0, 1, 5, 9), 5.0 / 255.0);
    }

    #[test]
    fn tall_input_pads_columns() {
        let img = Image::filled(320, 640, [255, 0, 0]);
        let (t, tf) = letterbox(&img, 640);
        assert_eq!((tf.scale, tf.pad_x, tf.pad_y), (1.0, 160, 0));
        assert_eq!(t.at(0, 0, 10, 159), PAD_GRAY as f32 / 255.0);
        assert_eq!(t.at(0, 0, 10, 160), 1.0);
        assert_eq!(t.at(0, 0, 10, 479), 1.0);
        assert_eq!(t.at(0, 0, 10, 480), PAD_GRAY as f32 / 255.0);

        let tf = LetterboxTransform::new(1280, 720, 640);
        assert_eq!((tf.scale, tf.content_size(), tf.pad_y), (0.5, (640, 360), 140));
    }

    #[test]
    fn box_round_trip_within_a_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (w, h) = (rng.random_range(50..2000), rng.random_range(50..2000));
            let tf = LetterboxTransform::new(w, h, 640);
            let x1 = rng.random_range(0.0..w as f64 - 10.0);
            let y1 = rng.random_range(0.0..h as f64 - 10.0);
            let b = BBox::new(x1, y1, rng.random_range(x1..w as f64), rng.random_range(y1..h as f64));
            // detections land on whole letterbox pixels
            let f = tf.forward_box(&b);
            let snapped = BBox::new(f.x1.round(), f.y1.round(), f.x2.round(), f.y2.round());
            let back = tf.inverse_box(&snapped);
            let tol = (0.5 / tf.scale).max(1.0);
            for (a, e) in [(back.x1, b.x1), (back.y1, b.y1), (back.x2, b.x2), (back.y2, b.y2)] {
                assert!((a - e).abs() <= tol, "{a} vs {e}");
            }
            let exact = tf.inverse_box(&f);
            assert!((exact.x1 - b.x1).abs() < 1e-9 && (exact.y2 - b.y2).abs() < 1e-9);
        }
    }
}
