//! YOLO text labels: one `class cx cy w h` line per box, normalized.

use crate::error::{Error, Result};
use crate::losses::BBox;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Annotation {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Annotation {
    pub const fn new(class_id: usize, cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Annotation { class_id, cx, cy, w, h }
    }

    pub fn is_valid(&self) -> bool {
        [self.cx, self.cy, self.w, self.h].iter().all(|v| (0.0..=1.0).contains(v)) && self.w > 0.0 && self.h > 0.0
    }

    /// Absolute `xyxy` box on an `img_w × img_h` image.
    pub fn to_xyxy(&self, img_w: f64, img_h: f64) -> BBox {
        cxcywh_to_xyxy(self, img_w, img_h)
    }

    /// Extents clamped into the unit square, center and size recomputed.
    pub fn clamped(&self) -> Annotation {
        let x1 = (self.cx - self.w / 2.0).clamp(0.0, 1.0);
        let x2 = (self.cx + self.w / 2.0).clamp(0.0, 1.0);
        let y1 = (self.cy - self.h / 2.0).clamp(0.0, 1.0);
        let y2 = (self.cy + self.h / 2.0).clamp(0.0, 1.0);
        Annotation::new(self.class_id, (x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }
}

pub fn cxcywh_to_xyxy(a: &Annotation, img_w: f64, img_h: f64) -> BBox {
    BBox::new(
        (a.cx - a.w / 2.0) * img_w,
        (a.cy - a.h / 2.0) * img_h,
        (a.cx + a.w / 2.0) * img_w,
        (a.cy + a.h / 2.0) * img_h,
    )
}

pub fn xyxy_to_cxcywh(b: &BBox, class_id: usize, img_w: f64, img_h: f64) -> Annotation {
    let (cx, cy) = b.center();
    Annotation::new(class_id, cx / img_w, cy / img_h, b.width() / img_w, b.height() / img_h)
}

fn parse_line(line: &str, lineno: usize) -> Result<Option<Annotation>> {
    let err = |msg: String| Error::Parse { line: lineno, msg };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.is_empty() {
        return Ok(None);
    }
    if fields.len() != 5 {
        return Err(err(format!("expected 5 fields, found {}", fields.len())));
    }
    let class: i64 = fields[0]
        .parse()
        .or_else(|_| fields[0].parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64).ok_or(()))
        .map_err(|_| err(format!("class `{}` is not an integer", fields[0])))?;
    if class < 0 {
        return Err(err(format!("negative class {class}")));
    }
    let mut v = [0.0; 4];
    for (i, name) in ["cx", "cy", "w", "h"].iter().enumerate() {
        let x: f64 = fields[i + 1]
            .parse()
            .map_err(|_| err(format!("{name} `{}` is not a number", fields[i + 1])))?;
        if !(0.0..=1.0).contains(&x) {
            return Err(err(format!("{name} out of range: {x}")));
        }
        v[i] = x;
    }
    if v[2] <= 0.0 || v[3] <= 0.0 {
        return Err(err("box has zero width or height".into()));
    }
    Ok(Some(Annotation::new(class as usize, v[0], v[1], v[2], v[3])))
}

/// Blank lines are skipped; errors carry the 1-based line number.
pub fn parse_labels(text: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(a) = parse_line(line, i + 1)? {
            out.push(a);
        }
    }
    Ok(out)
}

pub fn write_labels(annotations: &[Annotation]) -> String {
    let mut s = String::new();
    for a in annotations {
        let a = a.clamped();
        s.push_str(&format!("{} {:.6} {:.6} {:.6} {:.6}\n", a.class_id, a.cx, a.cy, a.w, a.h));
    }
    s
}
