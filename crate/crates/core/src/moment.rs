//! Moment retrieval: span/frame-label conversion, frame-to-span aggregation
//! and the retrieval metrics (IoU, AP over an IoU ladder, R@1).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::datamodel::{MomentAnnotation, MomentExample};
use crate::error::{ensure_arg, Result};

/// Span threshold used unless overridden.
pub const DEFAULT_SPAN_THRESHOLD: usize = 6;
/// Frame rate at which moment-retrieval videos are scored.
pub const DEFAULT_EVAL_FPS: f64 = 0.5;

/// Predicted span; serialized as `[start_s, end_s, confidence]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64, f64)", into = "(f64, f64, f64)")]
pub struct SpanPrediction {
    pub start_s: f64,
    pub end_s: f64,
    pub confidence: f64,
}

impl From<(f64, f64, f64)> for SpanPrediction {
    fn from((start_s, end_s, confidence): (f64, f64, f64)) -> Self {
        Self {
            start_s,
            end_s,
            confidence,
        }
    }
}

impl From<SpanPrediction> for (f64, f64, f64) {
    fn from(p: SpanPrediction) -> Self {
        (p.start_s, p.end_s, p.confidence)
    }
}

pub trait Interval {
    fn start(&self) -> f64;
    fn end(&self) -> f64;
}

impl Interval for MomentAnnotation {
    fn start(&self) -> f64 {
        self.start_s
    }
    fn end(&self) -> f64 {
        self.end_s
    }
}

impl Interval for SpanPrediction {
    fn start(&self) -> f64 {
        self.start_s
    }
    fn end(&self) -> f64 {
        self.end_s
    }
}

/// Temporal intersection over union.
pub fn iou(a: &impl Interval, b: &impl Interval) -> f64 {
    let inter = (a.end().min(b.end()) - a.start().max(b.start())).max(0.0);
    let union = a.end().max(b.end()) - a.start().min(b.start());
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Bit `i` is set iff some span has `start_s <= timestamps[i] < end_s`.
pub fn spans_to_frame_labels(spans: &[MomentAnnotation], timestamps: &[f64]) -> Vec<u8> {
    timestamps
        .iter()
        .map(|&t| u8::from(spans.iter().any(|s| s.start_s <= t && t < s.end_s)))
        .collect()
}

/// Merges positive frames separated by at most `span_threshold` negatives.
/// A span over frames `a..=b` covers `[a / fps, (b + 1) / fps]` and its
/// confidence is the mean score of its positive frames. Output is ranked.
pub fn aggregate(bits: &[u8], scores: &[f64], fps: f64, span_threshold: usize) -> Result<Vec<SpanPrediction>> {
    ensure_arg!(
        bits.len() == scores.len(),
        "{} bits but {} scores",
        bits.len(),
        scores.len()
    );
    ensure_arg!(fps > 0.0 && fps.is_finite(), "fps must be positive, got {fps}");
    let mut spans = Vec::new();
    // (first, last, score sum, positive count)
    let mut open: Option<(usize, usize, f64, usize)> = None;
    for (i, (&bit, &score)) in bits.iter().zip(scores).enumerate() {
        if bit == 0 {
            continue;
        }
        open = match open {
            Some((a, last, sum, n)) if i - last - 1 <= span_threshold => Some((a, i, sum + score, n + 1)),
            prev => {
                spans.extend(prev);
                Some((i, i, score, 1))
            }
        };
    }
    spans.extend(open);
    let mut out: Vec<SpanPrediction> = spans
        .into_iter()
        .map(|(a, b, sum, n)| SpanPrediction {
            start_s: a as f64 / fps,
            end_s: (b + 1) as f64 / fps,
            confidence: sum / n as f64,
        })
        .collect();
    rank(&mut out);
    Ok(out)
}

fn rank_order(a: &SpanPrediction, b: &SpanPrediction) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.start_s.total_cmp(&b.start_s))
}

/// Sorts by descending confidence, ties by start time.
pub fn rank(preds: &mut [SpanPrediction]) {
    preds.sort_by(rank_order);
}

/// Keeps only the top-ranked span.
pub fn single_span(mut preds: Vec<SpanPrediction>) -> Vec<SpanPrediction> {
    rank(&mut preds);
    preds.truncate(1);
    preds
}

/// Mean gap, in frames at `fps`, between consecutive annotated spans of the
/// same query. `None` when no query has two spans.
pub fn auto_span_threshold(examples: &[MomentExample], fps: f64) -> Option<usize> {
    let mut gaps = Vec::new();
    for ex in examples {
        let mut spans = ex.spans.clone();
        spans.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for w in spans.windows(2) {
            let gap = w[1].start_s - w[0].end_s;
            if gap > 0.0 {
                gaps.push(gap * fps);
            }
        }
    }
    if gaps.is_empty() {
        return None;
    }
    Some((gaps.iter().sum::<f64>() / gaps.len() as f64).round() as usize)
}

/// IoU thresholds for mAP, strictly increasing in `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalLadder {
    thresholds: Vec<f64>,
}

impl EvalLadder {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        ensure_arg!(!thresholds.is_empty(), "empty IoU ladder");
        ensure_arg!(
            thresholds.iter().all(|t| *t > 0.0 && *t <= 1.0),
            "IoU thresholds must lie in (0, 1]"
        );
        ensure_arg!(
            thresholds.windows(2).all(|w| w[0] < w[1]),
            "IoU thresholds must be strictly increasing"
        );
        Ok(Self { thresholds })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

impl Default for EvalLadder {
    /// 0.5, 0.55, ..., 0.95
    fn default() -> Self {
        Self {
            thresholds: (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect(),
        }
    }
}

/// Predictions and ground truth for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub example_id: String,
    pub predictions: Vec<SpanPrediction>,
    pub ground_truth: Vec<MomentAnnotation>,
}

/// Average precision at one IoU threshold, all-point interpolation.
///
/// Predictions are taken in rank order and each is greedily matched to the
/// unmatched ground-truth span with the highest IoU (at least `thr`, ties to
/// the lower index).
pub fn average_precision(preds: &[SpanPrediction], gts: &[MomentAnnotation], thr: f64) -> f64 {
    if gts.is_empty() {
        return if preds.is_empty() { 1.0 } else { 0.0 };
    }
    let mut ranked = preds.to_vec();
    rank(&mut ranked);
    let mut matched = vec![false; gts.len()];
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(ranked.len());
    for (r, p) in ranked.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if matched[g] {
                continue;
            }
            let o = iou(p, gt);
            if o >= thr && best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, _)) = best {
            matched[g] = true;
            tp += 1;
        }
        points.push((tp as f64 / gts.len() as f64, tp as f64 / (r + 1) as f64));
    }
    // precision envelope from the right, then area over recall steps
    let mut env = 0.0f64;
    let mut area = 0.0;
    let mut prev_recall;
    for i in (0..points.len()).rev() {
        env = env.max(points[i].1);
        prev_recall = if i == 0 { 0.0 } else { points[i - 1].0 };
        area += (points[i].0 - prev_recall) * env;
    }
    area
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-query AP averaged over the ladder.
pub fn query_map(q: &QueryResult, ladder: &EvalLadder) -> f64 {
    mean(
        ladder
            .thresholds()
            .iter()
            .map(|&t| average_precision(&q.predictions, &q.ground_truth, t)),
    )
}

/// Mean over queries of the per-query ladder-averaged AP.
pub fn map_over_ladder(queries: &[QueryResult], ladder: &EvalLadder) -> f64 {
    mean(queries.iter().map(|q| query_map(q, ladder)))
}

fn top1_hit(q: &QueryResult, thr: f64) -> bool {
    q.predictions
        .iter()
        .min_by(|a, b| rank_order(a, b))
        .is_some_and(|top| q.ground_truth.iter().any(|g| iou(top, g) >= thr))
}

/// Fraction of queries whose top-ranked prediction reaches `thr` IoU with
/// some ground-truth span.
pub fn recall_at_1(queries: &[QueryResult], thr: f64) -> f64 {
    mean(queries.iter().map(|q| if top1_hit(q, thr) { 1.0 } else { 0.0 }))
}
