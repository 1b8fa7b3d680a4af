//! Detection evaluation (matching, P/R/F1, AP, mAP@50, mAP@50-95) and a
//! wall-clock throughput harness.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::losses::{iou, BBox};
use crate::postprocess::{detection_order, Detection};

/// A ground-truth box in absolute pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class_id: usize,
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// One prediction after matching.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPrediction {
    pub score: f64,
    pub class_id: usize,
    pub tp: bool,
    /// Index of the matched ground truth, if any.
    pub gt: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImageMatch {
    /// Predictions in evaluation order (descending score).
    pub preds: Vec<MatchedPrediction>,
    pub fn_count: usize,
    /// Ground truths per class, for recall denominators.
    pub gt_per_class: BTreeMap<usize, usize>,
}

/// Greedy per-image, per-class matching. Predictions are visited by
/// descending score; each takes the unmatched ground truth of its class
/// with the highest IoU at or above `iou_thresh` (lowest index on ties).
pub fn match_image(preds: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> ImageMatch {
    let mut order: Vec<&Detection> = preds.iter().collect();
    order.sort_by(|a, b| detection_order(a, b));
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::with_capacity(preds.len());
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.class_id != p.class_id {
                continue;
            }
            let v = iou(&p.bbox, &gt.bbox);
            if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
        }
        out.push(MatchedPrediction {
            score: p.score,
            class_id: p.class_id,
            tp: best.is_some(),
            gt: best.map(|(g, _)| g),
        });
    }
    let mut gt_per_class = BTreeMap::new();
    for gt in gts {
        *gt_per_class.entry(gt.class_id).or_insert(0) += 1;
    }
    ImageMatch {
        preds: out,
        fn_count: taken.iter().filter(|t| !**t).count(),
        gt_per_class,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PrF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn pr_f1_counts(tp: usize, fp: usize, fn_count: usize) -> PrF1 {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_count);
    PrF1 {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Precision, recall and F1 from TP/FP flags and the unmatched-GT count.
pub fn pr_f1(flags: &[bool], fn_count: usize) -> PrF1 {
    let tp = flags.iter().filter(|f| **f).count();
    pr_f1_counts(tp, flags.len() - tp, fn_count)
}

/// Recall sampling used to integrate the precision envelope.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ApInterpolation {
    /// 101 points, 0.00 to 1.00 (COCO).
    #[default]
    Coco101,
    /// 11 points, 0.0 to 1.0 (VOC 2007).
    Voc11,
}

impl ApInterpolation {
    fn points(self) -> Vec<f64> {
        match self {
            ApInterpolation::Coco101 => (0..=100).map(|i| i as f64 / 100.0).collect(),
            ApInterpolation::Voc11 => (0..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

/// AP from `(score, is_tp)` pairs pooled across images and the number of
/// ground truths. Equal scores keep their input order.
pub fn average_precision(scored: &[(f64, bool)], n_gt: usize, interp: ApInterpolation) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0).then(a.cmp(&b)));
    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (k, &i) in order.iter().enumerate() {
        if scored[i].1 {
            tp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let points = interp.points();
    let total: f64 = points
        .iter()
        .map(|&r| {
            // recall is non-decreasing; first index reaching r
            let idx = recall.partition_point(|&x| x < r - 1e-12);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    total / points.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// AP at each threshold, averaged over classes with ground truth.
    pub ap_per_threshold: Vec<(f64, f64)>,
    pub map50: f64,
    pub map50_95: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
}

/// mAP at one IoU threshold over a dataset of images.
pub fn map_at(
    preds: &[Vec<Detection>],
    gts: &[Vec<GroundTruth>],
    iou_thresh: f64,
    interp: ApInterpolation,
) -> f64 {
    let mut scored: BTreeMap<usize, Vec<(f64, bool)>> = BTreeMap::new();
    let mut n_gt: BTreeMap<usize, usize> = BTreeMap::new();
    let empty = Vec::new();
    for (i, g) in gts.iter().enumerate() {
        let p = preds.get(i).unwrap_or(&empty);
        let m = match_image(p, g, iou_thresh);
        for mp in m.preds {
            scored.entry(mp.class_id).or_default().push((mp.score, mp.tp));
        }
        for (c, n) in m.gt_per_class {
            *n_gt.entry(c).or_insert(0) += n;
        }
    }
    if n_gt.is_empty() {
        return 0.0;
    }
    let aps: Vec<f64> = n_gt
        .iter()
        .map(|(c, &n)| average_precision(scored.get(c).map_or(&[][..], |v| v), n, interp))
        .collect();
    aps.iter().sum::<f64>() / aps.len() as f64
}

/// `(mAP@50, mAP@50-95)`.
pub fn map50_95(preds: &[Vec<Detection>], gts: &[Vec<GroundTruth>]) -> (f64, f64) {
    let aps: Vec<f64> = coco_thresholds()
        .iter()
        .map(|&t| map_at(preds, gts, t, ApInterpolation::Coco101))
        .collect();
    (aps[0], aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Full report; the P/R/F1 operating point uses every supplied
/// prediction matched at `iou_thresh`.
pub fn evaluate(preds: &[Vec<Detection>], gts: &[Vec<GroundTruth>], iou_thresh: f64) -> EvalReport {
    let empty = Vec::new();
    let (mut tp, mut fp, mut fn_count) = (0, 0, 0);
    for (i, g) in gts.iter().enumerate() {
        let m = match_image(preds.get(i).unwrap_or(&empty), g, iou_thresh);
        let t = m.preds.iter().filter(|p| p.tp).count();
        tp += t;
        fp += m.preds.len() - t;
        fn_count += m.fn_count;
    }
    let prf = pr_f1_counts(tp, fp, fn_count);
    let ap_per_threshold: Vec<(f64, f64)> = coco_thresholds()
        .iter()
        .map(|&t| (t, map_at(preds, gts, t, ApInterpolation::Coco101)))
        .collect();
    let map50 = ap_per_threshold[0].1;
    let map50_95 = ap_per_threshold.iter().map(|x| x.1).sum::<f64>() / ap_per_threshold.len() as f64;
    EvalReport {
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        ap_per_threshold,
        map50,
        map50_95,
        tp,
        fp,
        fn_count,
    }
}

impl EvalReport {
    /// Line-oriented `key: value` rendering.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(": ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("precision", format!("{:.6}", self.precision));
        kv("recall", format!("{:.6}", self.recall));
        kv("f1", format!("{:.6}", self.f1));
        kv("map50", format!("{:.6}", self.map50));
        kv("map50_95", format!("{:.6}", self.map50_95));
        for (t, ap) in &self.ap_per_threshold {
            kv(&format!("ap@{t:.2}"), format!("{ap:.6}"));
        }
        kv("tp", self.tp.to_string());
        kv("fp", self.fp.to_string());
        kv("fn", self.fn_count.to_string());
        s
    }
}

/// Prediction file: one `class_id score x1 y1 x2 y2` line per detection,
/// absolute pixels.
pub fn write_predictions(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        let b = &d.bbox;
        s.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
            d.class_id, d.score, b.x1, b.y1, b.x2, b.y2
        ));
    }
    s
}

pub fn parse_predictions(text: &str) -> crate::Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |msg: String| crate::Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        let class_id: usize = f[0].parse().map_err(|_| err(format!("bad class `{}`", f[0])))?;
        let mut v = [0.0; 5];
        for (k, x) in v.iter_mut().enumerate() {
            *x = f[k + 1]
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| err(format!("bad number `{}`", f[k + 1])))?;
        }
        let bbox = BBox::new(v[1], v[2], v[3], v[4]);
        if !bbox.is_valid() {
            return Err(err("box has x2 < x1 or y2 < y1".into()));
        }
        out.push(Detection {
            bbox,
            score: v[0],
            class_id,
        });
    }
    Ok(out)
}

/// Time source for the bench harness; swappable in tests.
pub trait Clock {
    fn now(&self) -> Duration;
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyStats {
    pub median: Duration,
    pub p90: Duration,
    pub p99: Duration,
    pub min: Duration,
    pub max: Duration,
    /// `1 / median`.
    pub fps: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort();
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2
        };
        // nearest-rank percentile
        let pct = |p: f64| s[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        let secs = median.as_secs_f64();
        Some(LatencyStats {
            median,
            p90: pct(0.90),
            p99: pct(0.99),
            min: s[0],
            max: s[n - 1],
            fps: if secs > 0.0 { 1.0 / secs } else { f64::INFINITY },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchReport {
    pub runs: usize,
    pub warmup: usize,
    pub forward: LatencyStats,
    pub end_to_end: LatencyStats,
}

impl BenchReport {
    pub fn to_kv(&self) -> String {
        let mut s = format!("runs: {}\nwarmup: {}\n", self.runs, self.warmup);
        for (name, st) in [("forward", &self.forward), ("end_to_end", &self.end_to_end)] {
            s.push_str(&format!("{name}.fps: {:.3}\n", st.fps));
            for (k, d) in [("median", st.median), ("p90", st.p90), ("p99", st.p99), ("min", st.min), ("max", st.max)] {
                s.push_str(&format!("{name}.{k}_ms: {:.3}\n", d.as_secs_f64() * 1e3));
            }
        }
        s
    }
}

fn time_runs<E>(
    runs: usize,
    warmup: usize,
    clock: &impl Clock,
    mut f: impl FnMut() -> Result<(), E>,
) -> Result<Vec<Duration>, E> {
    for _ in 0..warmup {
        f()?;
    }
    let mut out = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t0 = clock.now();
        f()?;
        out.push(clock.now().saturating_sub(t0));
    }
    Ok(out)
}

/// Times `forward` and `end_to_end` separately: `warmup` discarded passes
/// then `runs` timed passes each. `runs` is clamped to at least 1.
pub fn bench_with<E>(
    runs: usize,
    warmup: usize,
    clock: &impl Clock,
    forward: impl FnMut() -> Result<(), E>,
    end_to_end: impl FnMut() -> Result<(), E>,
) -> Result<BenchReport, E> {
    let runs = runs.max(1);
    let fwd = time_runs(runs, warmup, clock, forward)?;
    let e2e = time_runs(runs, warmup, clock, end_to_end)?;
    Ok(BenchReport {
        runs,
        warmup,
        forward: LatencyStats::from_samples(&fwd).expect("runs >= 1"),
        end_to_end: LatencyStats::from_samples(&e2e).expect("runs >= 1"),
    })
}

/// Wall-clock bench of a bound model on one image: forward alone, and
/// letterbox + forward + decode + NMS.
pub fn fps_bench(
    model: &crate::graph::Model,
    image: &crate::dataset::Image,
    runs: usize,
    warmup: usize,
) -> crate::Result<BenchReport> {
    let imgsz = model.graph().imgsz;
    let (input, _) = crate::dataset::letterbox(image, imgsz);
    let clock = SystemClock::default();
    bench_with(
        runs,
        warmup,
        &clock,
        || model.forward(&input).map(drop),
        || {
            let (x, _) = crate::dataset::letterbox(image, imgsz);
            let raw = model.forward(&x)?;
            let dets = crate::postprocess::decode(&raw, crate::postprocess::DEFAULT_CONF)?;
            std::hint::black_box(crate::postprocess::nms(&dets, crate::postprocess::DEFAULT_IOU));
            Ok(())
        },
    )
}
