//! Raw head maps to detections: distribution decode, confidence gate, NMS.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::kernels::sigmoid;
use crate::losses::{iou, BBox};
use crate::tensor::Tensor;

pub const DEFAULT_CONF: f64 = 0.25;
pub const DEFAULT_IOU: f64 = 0.65;

/// Per-scale head outputs, each `(n, 4·reg_max + nc, H/s, W/s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawOutputs {
    pub maps: Vec<Tensor>,
    pub strides: Vec<usize>,
    pub reg_max: usize,
    pub nc: usize,
}

impl RawOutputs {
    pub fn cells(&self) -> usize {
        self.maps.iter().map(|m| m.h() * m.w()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub class_id: usize,
}

/// Descending score, then smaller class id, then lexicographic box.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.bbox.x1.total_cmp(&b.bbox.x1))
        .then(a.bbox.y1.total_cmp(&b.bbox.y1))
        .then(a.bbox.x2.total_cmp(&b.bbox.x2))
        .then(a.bbox.y2.total_cmp(&b.bbox.y2))
}

/// Expected bin index under `softmax(logits)`.
pub fn softmax_expectation(logits: &[f32]) -> f64 {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut z = 0.0;
    let mut e = 0.0;
    for (i, &l) in logits.iter().enumerate() {
        let p = (l as f64 - max).exp();
        z += p;
        e += p * i as f64;
    }
    e / z
}

/// Decodes single-image head maps into scored boxes in network-input
/// pixels, keeping cells whose best class score reaches `conf_thresh`.
pub fn decode(raw: &RawOutputs, conf_thresh: f64) -> Result<Vec<Detection>> {
    let (reg_max, nc) = (raw.reg_max, raw.nc);
    let depth = 4 * reg_max + nc;
    if raw.maps.len() != raw.strides.len() {
        return Err(Error::shape(format!(
            "{} maps but {} strides",
            raw.maps.len(),
            raw.strides.len()
        )));
    }
    let mut out = Vec::new();
    let mut bins = vec![0.0f32; reg_max];
    for (map, &stride) in raw.maps.iter().zip(&raw.strides) {
        let [n, c, h, w] = map.shape();
        if c != depth {
            return Err(Error::shape(format!(
                "head map has {c} channels, expected 4·{reg_max} + {nc} = {depth}"
            )));
        }
        if n != 1 {
            return Err(Error::shape(format!("decode takes one image, got batch of {n}")));
        }
        let s = stride as f64;
        let (limit_x, limit_y) = (w as f64 * s, h as f64 * s);
        for i in 0..h {
            for j in 0..w {
                let (class_id, logit) = (0..nc)
                    .map(|k| (k, map.at(0, 4 * reg_max + k, i, j)))
                    .fold((0, f32::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
                let score = sigmoid(logit) as f64;
                if score < conf_thresh {
                    continue;
                }
                let mut dist = [0.0; 4];
                for (side, d) in dist.iter_mut().enumerate() {
                    for (b, v) in bins.iter_mut().enumerate() {
                        *v = map.at(0, side * reg_max + b, i, j);
                    }
                    *d = softmax_expectation(&bins) * s;
                }
                let (ax, ay) = ((j as f64 + 0.5) * s, (i as f64 + 0.5) * s);
                let bbox = BBox::new(ax - dist[0], ay - dist[1], ax + dist[2], ay + dist[3]);
                out.push(Detection {
                    bbox: bbox.clip(limit_x, limit_y),
                    score,
                    class_id,
                });
            }
        }
    }
    Ok(out)
}

/// Class-aware greedy non-maximum suppression.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(detection_order);
    let mut kept: Vec<Detection> = Vec::new();
    for d in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && iou(&k.bbox, &d.bbox) > iou_thresh);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}
