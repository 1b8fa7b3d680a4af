//! Classification and box-regression losses, forward only.
//!
//! All box functions take absolute `xyxy` boxes and compute in `f64`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Axis-aligned box in absolute `xyxy` coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn is_valid(&self) -> bool {
        self.x2 >= self.x1 && self.y2 >= self.y1
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Smallest box covering both.
    pub fn enclose(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x1.min(other.x1),
            self.y1.min(other.y1),
            self.x2.max(other.x2),
            self.y2.max(other.y2),
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn scale(&self, s: f64) -> BBox {
        BBox::new(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)
    }

    pub fn clip(&self, w: f64, h: f64) -> BBox {
        BBox::new(
            self.x1.clamp(0.0, w),
            self.y1.clamp(0.0, h),
            self.x2.clamp(0.0, w),
            self.y2.clamp(0.0, h),
        )
    }
}

pub const CE_EPS: f64 = 1e-7;

/// Binary cross entropy, `ŷ` clamped to `[ε, 1 − ε]`.
pub fn ce_loss(y: f64, y_hat: f64) -> f64 {
    let p = y_hat.clamp(CE_EPS, 1.0 - CE_EPS);
    -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IouKind {
    Iou,
    Giou,
    Diou,
    Ciou,
    Eiou,
}

impl IouKind {
    pub const ALL: [IouKind; 5] = [IouKind::Iou, IouKind::Giou, IouKind::Diou, IouKind::Ciou, IouKind::Eiou];

    pub fn as_str(self) -> &'static str {
        match self {
            IouKind::Iou => "iou",
            IouKind::Giou => "giou",
            IouKind::Diou => "diou",
            IouKind::Ciou => "ciou",
            IouKind::Eiou => "eiou",
        }
    }
}

impl fmt::Display for IouKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IouKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IouKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown IoU kind `{s}`")))
    }
}

/// The aspect-ratio consistency term `v` and its weight `α`.
pub fn ciou_aspect_terms(pred: &BBox, gt: &BBox, iou: f64) -> (f64, f64) {
    let atan_ratio = |b: &BBox| {
        if b.height() > 0.0 {
            (b.width() / b.height()).atan()
        } else if b.width() > 0.0 {
            PI / 2.0
        } else {
            0.0
        }
    };
    let d = atan_ratio(gt) - atan_ratio(pred);
    let v = 4.0 / (PI * PI) * d * d;
    let alpha = if v == 0.0 { 0.0 } else { v / ((1.0 - iou) + v) };
    (v, alpha)
}

/// IoU-family similarity. `giou`/`diou`/`ciou` lie in `(−1, 1]`; `eiou`
/// is `1 − eiou_loss`. Coincident zero-size boxes give 0.
pub fn iou_variant(kind: IouKind, pred: &BBox, gt: &BBox) -> f64 {
    let base = iou(pred, gt);
    if kind == IouKind::Iou {
        return base;
    }
    let c = pred.enclose(gt);
    let (cw, ch) = (c.width(), c.height());
    let diag2 = cw * cw + ch * ch;
    if diag2 <= 0.0 {
        return 0.0;
    }
    let (px, py) = pred.center();
    let (gx, gy) = gt.center();
    let rho2 = (px - gx).powi(2) + (py - gy).powi(2);
    match kind {
        IouKind::Iou => unreachable!(),
        IouKind::Giou => {
            let enclosing = c.area();
            if enclosing <= 0.0 {
                // collinear degenerate boxes: no area penalty is defined
                return base;
            }
            let union = pred.area() + gt.area() - pred.intersection(gt);
            base - (enclosing - union) / enclosing
        }
        IouKind::Diou => base - rho2 / diag2,
        IouKind::Ciou => {
            let (v, alpha) = ciou_aspect_terms(pred, gt, base);
            base - (rho2 / diag2 + alpha * v)
        }
        IouKind::Eiou => {
            let dw2 = (pred.width() - gt.width()).powi(2);
            let dh2 = (pred.height() - gt.height()).powi(2);
            let pw = if cw > 0.0 { dw2 / (cw * cw) } else { 0.0 };
            let ph = if ch > 0.0 { dh2 / (ch * ch) } else { 0.0 };
            base - rho2 / diag2 - pw - ph
        }
    }
}

/// `1 − iou_variant`; for EIoU this is the additive-penalty loss.
pub fn iou_loss(kind: IouKind, pred: &BBox, gt: &BBox) -> f64 {
    1.0 - iou_variant(kind, pred, gt)
}

/// Distribution focal loss of a discretized distance `target` under the
/// bin probabilities `dist`.
pub fn dfl_loss(dist: &[f64], target: f64) -> Result<f64> {
    if dist.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 bins, got {}", dist.len())));
    }
    let top = (dist.len() - 1) as f64;
    if !(0.0..=top).contains(&target) || target.is_nan() {
        return Err(Error::Domain(format!("target {target} outside [0, {top}]")));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!("distribution sums to {sum}, expected 1")));
    }
    let lo = target.floor();
    let hi = target.ceil();
    let nll = |i: f64| -dist[i as usize].max(f64::MIN_POSITIVE).ln();
    if lo == hi {
        return Ok(nll(lo));
    }
    Ok((hi - target) * nll(lo) + (target - lo) * nll(hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn ce_cases() {
        assert!(ce_loss(1.0, 1.0) < 1e-6);
        assert!((ce_loss(1.0, 0.5) - 2f64.ln()).abs() < EPS);
        assert!((ce_loss(0.0, 0.5) - 2f64.ln()).abs() < EPS);
        assert!(ce_loss(0.0, 1.0).is_finite());
    }

    #[test]
    fn iou_cases() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert!((iou(&a, &BBox::new(1.0, 1.0, 3.0, 3.0)) - 1.0 / 7.0).abs() < EPS);
        let point = BBox::new(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&point, &point), 0.0);
    }

    #[test]
    fn identical_boxes() {
        let a = BBox::new(1.0, 2.0, 4.0, 7.0);
        for k in [IouKind::Giou, IouKind::Diou, IouKind::Ciou, IouKind::Eiou] {
            assert_eq!(iou_variant(k, &a, &a), 1.0, "{k}");
        }
        assert_eq!(iou_loss(IouKind::Eiou, &a, &a), 0.0);
    }

    #[test]
    fn concentric_same_aspect() {
        let a = BBox::new(0.0, 0.0, 4.0, 2.0);
        let b = BBox::new(1.0, 0.5, 3.0, 1.5);
        let base = iou(&a, &b);
        assert!((iou_variant(IouKind::Ciou, &a, &b) - base).abs() < EPS);
        assert!((iou_variant(IouKind::Diou, &a, &b) - base).abs() < EPS);
    }

    #[test]
    fn overlapping_squares_by_hand() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 1.0, 3.0, 3.0);
        let i = 1.0 / 7.0;
        assert!((iou_variant(IouKind::Giou, &a, &b) - (i - 2.0 / 9.0)).abs() < EPS);
        assert!((iou_variant(IouKind::Diou, &a, &b) - (i - 2.0 / 18.0)).abs() < EPS);
        assert_eq!(iou_variant(IouKind::Ciou, &a, &b), iou_variant(IouKind::Diou, &a, &b));
        // equal sizes: no width/height penalty
        assert!((iou_variant(IouKind::Eiou, &a, &b) - (i - 2.0 / 18.0)).abs() < EPS);
    }

    #[test]
    fn ciou_aspect_penalty() {
        let gt = BBox::new(0.0, 0.0, 2.0, 2.0);
        let pred = BBox::new(0.0, 0.0, 4.0, 2.0);
        let i = iou(&pred, &gt);
        assert!((i - 0.5).abs() < EPS);
        let d = (1.0f64).atan() - (2.0f64).atan();
        let v = 4.0 / (PI * PI) * d * d;
        let alpha = v / (0.5 + v);
        let rho2 = 1.0;
        let c2 = 16.0 + 4.0;
        let expected = i - (rho2 / c2 + alpha * v);
        assert!((iou_variant(IouKind::Ciou, &pred, &gt) - expected).abs() < EPS);
    }

    #[test]
    fn eiou_penalises_size() {
        let gt = BBox::new(0.0, 0.0, 2.0, 2.0);
        let pred = BBox::new(0.0, 0.0, 4.0, 2.0);
        // ρ² = 1, c² = 20, Δw² / c_w² = 4/16, Δh = 0
        let expected = 1.0 - 0.5 + 1.0 / 20.0 + 0.25;
        assert!((iou_loss(IouKind::Eiou, &pred, &gt) - expected).abs() < EPS);
    }

    #[test]
    fn degenerate_boxes() {
        let p = BBox::new(3.0, 3.0, 3.0, 3.0);
        for k in IouKind::ALL {
            assert_eq!(iou_variant(k, &p, &p), 0.0, "{k}");
        }
        let line = BBox::new(0.0, 0.0, 4.0, 0.0);
        for k in IouKind::ALL {
            assert!(iou_variant(k, &line, &p).is_finite(), "{k}");
        }
    }

    #[test]
    fn dfl_cases() {
        let mut one_hot = vec![0.0; 16];
        one_hot[5] = 1.0;
        assert_eq!(dfl_loss(&one_hot, 5.0).unwrap(), 0.0);
        let uniform = vec![1.0 / 16.0; 16];
        for t in [0.0, 3.3, 7.5, 15.0] {
            assert!((dfl_loss(&uniform, t).unwrap() - 16f64.ln()).abs() < 1e-12);
        }
        let mut half = vec![0.0; 16];
        half[2] = 0.5;
        half[3] = 0.5;
        assert!((dfl_loss(&half, 2.5).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(matches!(dfl_loss(&uniform, 15.5), Err(Error::Domain(_))));
        assert!(matches!(dfl_loss(&uniform, -0.1), Err(Error::Domain(_))));
        assert!(matches!(dfl_loss(&[1.0], 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn kind_parsing() {
        for k in IouKind::ALL {
            assert_eq!(k.as_str().parse::<IouKind>().unwrap(), k);
        }
        assert!("siou".parse::<IouKind>().is_err());
    }
}
