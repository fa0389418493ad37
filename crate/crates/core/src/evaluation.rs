//! 3D lane benchmark metrics.
//!
//! Two protocols are provided:
//!
//! * **OpenLane/ApolloSim style** ([`evaluate_openlane`]): lanes are resampled
//!   onto common forward positions, paired by minimum-cost matching, and a
//!   pair is a true positive when more than `tp_fraction` of the
//!   ground-truth points lie within `tp_point_threshold` metres. Precision,
//!   recall and F1 are computed at every distinct prediction score; the
//!   report carries the best F1, the average precision under the
//!   monotonised precision envelope, category accuracy and near/far `x`/`z`
//!   errors at the best operating point.
//! * **ONCE style** ([`evaluate_once`]): pairs must overlap in a top-view
//!   rasterisation (IoU gate), are matched on the unilateral Chamfer
//!   distance, and are true positives below `tau_cd`.
//!
//! Corpus metrics always aggregate raw counts across frames.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::exec::{self, Execution};
use crate::lane::{uniform_samples, Lane3D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfigOL {
    pub tp_point_threshold: f64,
    pub tp_fraction: f64,
    pub near_range: [f64; 2],
    pub far_range: [f64; 2],
    pub y_eval_samples: Vec<f64>,
}

impl Default for EvalConfigOL {
    fn default() -> Self {
        Self {
            tp_point_threshold: 1.5,
            tp_fraction: 0.75,
            near_range: [0.0, 40.0],
            far_range: [40.0, 100.0],
            y_eval_samples: uniform_samples(3.0, 103.0, 20),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfigONCE {
    pub iou_threshold: f64,
    pub tau_cd: f64,
    pub lane_width: f64,
    pub grid_cell: f64,
    /// Predictions scoring below this are ignored.
    pub score_threshold: f64,
}

impl Default for EvalConfigONCE {
    fn default() -> Self {
        Self { iou_threshold: 0.3, tau_cd: 0.3, lane_width: 1.0, grid_cell: 0.1, score_threshold: 0.0 }
    }
}

/// A predicted lane with its confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub lane: Lane3D,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalFrame {
    pub id: String,
    pub gts: Vec<Lane3D>,
    pub preds: Vec<Prediction>,
}

/// A lane resampled onto the evaluation forward positions.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalLane {
    pub category: usize,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub visible: Vec<bool>,
}

/// Linear resampling along `y`. Targets outside the lane's span, or between
/// two points that are not both visible, are invisible.
pub fn resample(lane: &Lane3D, ys: &[f64]) -> EvalLane {
    let n = lane.len();
    let mut out = EvalLane {
        category: lane.category,
        y: ys.to_vec(),
        x: vec![0.0; ys.len()],
        z: vec![0.0; ys.len()],
        visible: vec![false; ys.len()],
    };
    if n == 0 {
        return out;
    }
    for (t, &y) in ys.iter().enumerate() {
        let hi = lane.points.partition_point(|p| p.y < y);
        if hi < n && lane.points[hi].y == y {
            out.x[t] = lane.points[hi].x;
            out.z[t] = lane.points[hi].z;
            out.visible[t] = lane.is_visible(hi);
        } else if hi > 0 && hi < n {
            let (a, b) = (&lane.points[hi - 1], &lane.points[hi]);
            let f = (y - a.y) / (b.y - a.y);
            out.x[t] = a.x + f * (b.x - a.x);
            out.z[t] = a.z + f * (b.z - a.z);
            out.visible[t] = lane.is_visible(hi - 1) && lane.is_visible(hi);
        }
    }
    out
}

/// Per-pair statistics for the OpenLane protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCost {
    /// `sqrt(Σ_k d_k)`
    pub cost: f64,
    /// Per-sample distances: Euclidean in x-z where both lanes are visible,
    /// 0 where neither is, and the TP threshold where only one is.
    pub distances: Vec<f64>,
    pub both_visible: Vec<bool>,
    /// Both-visible samples closer than the threshold.
    pub close_points: usize,
    pub gt_visible: usize,
    pub true_positive: bool,
}

pub fn lane_pair_cost(gt: &EvalLane, pred: &EvalLane, cfg: &EvalConfigOL) -> PairCost {
    let n = gt.y.len().min(pred.y.len());
    let mut distances = vec![0.0; n];
    let mut both_visible = vec![false; n];
    let mut close_points = 0;
    for k in 0..n {
        match (gt.visible[k], pred.visible[k]) {
            (true, true) => {
                let (dx, dz) = (pred.x[k] - gt.x[k], pred.z[k] - gt.z[k]);
                let d = (dx * dx + dz * dz).sqrt();
                distances[k] = d;
                both_visible[k] = true;
                if d < cfg.tp_point_threshold {
                    close_points += 1;
                }
            }
            (false, false) => {}
            _ => distances[k] = cfg.tp_point_threshold,
        }
    }
    let gt_visible = gt.visible.iter().take(n).filter(|v| **v).count();
    let true_positive = gt_visible > 0 && close_points as f64 > cfg.tp_fraction * gt_visible as f64;
    PairCost {
        cost: distances.iter().sum::<f64>().sqrt(),
        distances,
        both_visible,
        close_points,
        gt_visible,
        true_positive,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneMatch {
    pub gt: usize,
    pub pred: usize,
    pub pair: PairCost,
}

/// Minimum-total-cost one-to-one pairing of ground truth and predictions.
pub fn match_lanes(gts: &[EvalLane], preds: &[EvalLane], cfg: &EvalConfigOL) -> Vec<LaneMatch> {
    let pairs: Vec<Vec<PairCost>> =
        gts.iter().map(|g| preds.iter().map(|p| lane_pair_cost(g, p, cfg)).collect()).collect();
    let all: Vec<usize> = (0..preds.len()).collect();
    match_subset(&pairs, &all)
        .into_iter()
        .map(|(i, j)| LaneMatch { gt: i, pred: j, pair: pairs[i][j].clone() })
        .collect()
}

/// Matches ground truth against the prediction columns listed in `subset`.
fn match_subset(pairs: &[Vec<PairCost>], subset: &[usize]) -> Vec<(usize, usize)> {
    let cost = Array2::from_shape_fn((pairs.len(), subset.len()), |(i, c)| pairs[i][subset[c]].cost);
    assignment::solve(&cost).pairs().map(|(i, c)| (i, subset[c])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCounts {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ThresholdCounts {
    fn new(threshold: f64, tp: usize, n_pred: usize, n_gt: usize) -> Self {
        let precision = if n_pred > 0 { tp as f64 / n_pred as f64 } else { 0.0 };
        let recall = if n_gt > 0 { tp as f64 / n_gt as f64 } else { 0.0 };
        Self { threshold, tp, fp: n_pred - tp, fn_: n_gt - tp, precision, recall, f1: f1_score(precision, recall) }
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Average precision under the monotonised precision envelope. Points must
/// be ordered by descending threshold (non-decreasing recall).
pub fn average_precision(points: &[(f64, f64)]) -> f64 {
    let mut envelope: Vec<(f64, f64)> = points.to_vec();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i].0 = envelope[i].0.max(envelope[i + 1].0);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in envelope {
        if r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = r;
        }
    }
    ap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Best F1 over score thresholds, in percent.
    pub f1: f64,
    /// Average precision, in percent.
    pub ap: f64,
    pub precision: f64,
    pub recall: f64,
    /// Share of true positives with the correct category, in percent.
    pub category_accuracy: Option<f64>,
    pub ex_near: Option<f64>,
    pub ex_far: Option<f64>,
    pub ez_near: Option<f64>,
    pub ez_far: Option<f64>,
    pub best_threshold: Option<f64>,
    pub num_frames: usize,
    pub num_gt: usize,
    pub counts: Vec<ThresholdCounts>,
    /// Frames with no ground-truth lanes.
    pub empty_gt_frames: Vec<String>,
}

impl EvalReport {
    /// Plain-text summary: F1, CAcc, x/z errors near and far.
    pub fn table(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| v.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"));
        let mut s = String::new();
        s.push_str(&format!(
            "{:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
            "F1", "AP", "CAcc", "X/N", "X/F", "Z/N", "Z/F"
        ));
        s.push_str(&format!(
            "{:>7.1} {:>7.1} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
            self.f1,
            self.ap,
            opt(self.category_accuracy, 1),
            opt(self.ex_near, 3),
            opt(self.ex_far, 3),
            opt(self.ez_near, 3),
            opt(self.ez_far, 3),
        ));
        s
    }
}

/// Per-frame precomputation: all pair costs, and the counts at each of the
/// frame's own score levels (descending).
struct FramePairs {
    pairs: Vec<Vec<PairCost>>,
    gts: Vec<EvalLane>,
    preds: Vec<EvalLane>,
    scores: Vec<f64>,
    levels: Vec<(f64, usize, usize)>, // (score, tp, n_pred)
}

fn prepare_frame(frame: &EvalFrame, cfg: &EvalConfigOL) -> FramePairs {
    let ys = &cfg.y_eval_samples;
    let gts: Vec<EvalLane> = frame.gts.iter().map(|g| resample(g, ys)).collect();
    let preds: Vec<EvalLane> = frame.preds.iter().map(|p| resample(&p.lane, ys)).collect();
    let pairs: Vec<Vec<PairCost>> =
        gts.iter().map(|g| preds.iter().map(|p| lane_pair_cost(g, p, cfg)).collect()).collect();
    let scores: Vec<f64> = frame.preds.iter().map(|p| p.score).collect();
    let mut distinct = scores.clone();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    let levels = distinct
        .into_iter()
        .map(|t| {
            let subset = subset_at(&scores, t);
            let tp = match_subset(&pairs, &subset).into_iter().filter(|&(i, j)| pairs[i][j].true_positive).count();
            (t, tp, subset.len())
        })
        .collect();
    FramePairs { pairs, gts, preds, scores, levels }
}

fn subset_at(scores: &[f64], threshold: f64) -> Vec<usize> {
    (0..scores.len()).filter(|&j| scores[j] >= threshold).collect()
}

impl FramePairs {
    /// `(tp, n_pred)` when keeping predictions scoring at least `t`.
    fn counts_at(&self, t: f64) -> (usize, usize) {
        // levels are descending; the active level is the last one >= t
        let idx = self.levels.partition_point(|l| l.0 >= t);
        if idx == 0 {
            (0, 0)
        } else {
            let l = self.levels[idx - 1];
            (l.1, l.2)
        }
    }
}

#[derive(Default)]
struct ErrorAccumulator {
    sums: [f64; 4],
    counts: [usize; 4],
    tp: usize,
    correct_category: usize,
}

impl ErrorAccumulator {
    fn add_frame(&mut self, frame: &FramePairs, threshold: f64, cfg: &EvalConfigOL) {
        let subset = subset_at(&frame.scores, threshold);
        for (i, j) in match_subset(&frame.pairs, &subset) {
            let pair = &frame.pairs[i][j];
            if !pair.true_positive {
                continue;
            }
            self.tp += 1;
            let (g, p) = (&frame.gts[i], &frame.preds[j]);
            if g.category == p.category {
                self.correct_category += 1;
            }
            for k in 0..pair.both_visible.len() {
                if !pair.both_visible[k] {
                    continue;
                }
                let y = g.y[k];
                let ex = (p.x[k] - g.x[k]).abs();
                let ez = (p.z[k] - g.z[k]).abs();
                if y >= cfg.near_range[0] && y < cfg.near_range[1] {
                    self.sums[0] += ex;
                    self.sums[2] += ez;
                    self.counts[0] += 1;
                    self.counts[2] += 1;
                }
                if y >= cfg.far_range[0] && y <= cfg.far_range[1] {
                    self.sums[1] += ex;
                    self.sums[3] += ez;
                    self.counts[1] += 1;
                    self.counts[3] += 1;
                }
            }
        }
    }

    fn mean(&self, i: usize) -> Option<f64> {
        (self.counts[i] > 0).then(|| self.sums[i] / self.counts[i] as f64)
    }
}

pub fn evaluate_openlane(frames: &[EvalFrame], cfg: &EvalConfigOL, exec: Execution) -> EvalReport {
    let prepared = exec::map(exec, frames, |f| prepare_frame(f, cfg));
    let num_gt: usize = frames.iter().map(|f| f.gts.len()).sum();
    let empty_gt_frames = frames.iter().filter(|f| f.gts.is_empty()).map(|f| f.id.clone()).collect();

    let mut thresholds: Vec<f64> = frames.iter().flat_map(|f| f.preds.iter().map(|p| p.score)).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let counts: Vec<ThresholdCounts> = thresholds
        .iter()
        .map(|&t| {
            let (tp, n_pred) =
                prepared.iter().map(|f| f.counts_at(t)).fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
            ThresholdCounts::new(t, tp, n_pred, num_gt)
        })
        .collect();

    let best = counts
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |best, (i, c)| match best {
            Some((_, f)) if f >= c.f1 => best,
            _ => Some((i, c.f1)),
        })
        .map(|(i, _)| i);
    let pr: Vec<(f64, f64)> = counts.iter().map(|c| (c.precision, c.recall)).collect();
    let ap = average_precision(&pr);

    let mut acc = ErrorAccumulator::default();
    if let Some(b) = best {
        let t = counts[b].threshold;
        for f in &prepared {
            acc.add_frame(f, t, cfg);
        }
    }
    let at_best = best.map(|b| counts[b]);
    EvalReport {
        f1: at_best.map_or(0.0, |c| 100.0 * c.f1),
        ap: 100.0 * ap,
        precision: at_best.map_or(0.0, |c| 100.0 * c.precision),
        recall: at_best.map_or(0.0, |c| 100.0 * c.recall),
        category_accuracy: (acc.tp > 0).then(|| 100.0 * acc.correct_category as f64 / acc.tp as f64),
        ex_near: acc.mean(0),
        ex_far: acc.mean(1),
        ez_near: acc.mean(2),
        ez_far: acc.mean(3),
        best_threshold: at_best.map(|c| c.threshold),
        num_frames: frames.len(),
        num_gt,
        counts,
        empty_gt_frames,
    }
}

// ---------------------------------------------------------------------------
// ONCE-style protocol

/// Cells of the top-view grid covered by a lane drawn at `lane_width`.
pub fn rasterize_top_view(lane: &Lane3D, cfg: &EvalConfigONCE) -> Vec<(i64, i64)> {
    let cell = cfg.grid_cell;
    let half = cfg.lane_width / 2.0;
    let pts: Vec<(f64, f64)> = visible_runs(lane)
        .into_iter()
        .flat_map(|run| {
            let segs: Vec<((f64, f64), (f64, f64))> =
                if run.len() == 1 { vec![(run[0], run[0])] } else { run.windows(2).map(|w| (w[0], w[1])).collect() };
            segs
        })
        .flat_map(|(a, b)| [a, b])
        .collect();
    let mut cells = HashSet::new();
    for seg in pts.chunks(2) {
        let (a, b) = (seg[0], seg[1]);
        let i0 = ((a.0.min(b.0) - half) / cell).floor() as i64;
        let i1 = ((a.0.max(b.0) + half) / cell).floor() as i64;
        let j0 = ((a.1.min(b.1) - half) / cell).floor() as i64;
        let j1 = ((a.1.max(b.1) + half) / cell).floor() as i64;
        for i in i0..=i1 {
            for j in j0..=j1 {
                let c = ((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell);
                if point_segment_distance(c, a, b) <= half {
                    cells.insert((i, j));
                }
            }
        }
    }
    let mut v: Vec<(i64, i64)> = cells.into_iter().collect();
    v.sort_unstable();
    v
}

/// Consecutive visible points, split at invisible ones, as `(x, y)`.
fn visible_runs(lane: &Lane3D) -> Vec<Vec<(f64, f64)>> {
    let mut runs = Vec::new();
    let mut cur = Vec::new();
    for (k, p) in lane.points.iter().enumerate() {
        if lane.is_visible(k) {
            cur.push((p.x, p.y));
        } else if !cur.is_empty() {
            runs.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (cx * cx + cy * cy).sqrt()
}

/// Intersection over union of two sorted cell lists.
pub fn cell_iou(a: &[(i64, i64)], b: &[(i64, i64)]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Ground-truth polyline (visible runs) densified to `step` spacing, in 3D.
fn densify(lane: &Lane3D, step: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for k in 0..lane.len() {
        if !lane.is_visible(k) {
            prev = None;
            continue;
        }
        let b = lane.points[k];
        if let Some(pk) = prev {
            let a = lane.points[pk];
            let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2) + (b.z - a.z).powi(2)).sqrt();
            let steps = (len / step).ceil().max(1.0) as usize;
            for s in 1..steps {
                let f = s as f64 / steps as f64;
                out.push([a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), a.z + f * (b.z - a.z)]);
            }
        }
        out.push([b.x, b.y, b.z]);
        prev = Some(k);
    }
    out
}

/// Mean distance from each visible prediction point to the nearest point of
/// the densified ground-truth polyline.
pub fn unilateral_chamfer(pred: &Lane3D, gt: &Lane3D, step: f64) -> f64 {
    let dense = densify(gt, step);
    unilateral_chamfer_dense(pred, &dense)
}

fn unilateral_chamfer_dense(pred: &Lane3D, dense: &[[f64; 3]]) -> f64 {
    if dense.is_empty() {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, p) in pred.points.iter().enumerate() {
        if !pred.is_visible(k) {
            continue;
        }
        let best = dense
            .iter()
            .map(|q| (q[0] - p.x).powi(2) + (q[1] - p.y).powi(2) + (q[2] - p.z).powi(2))
            .fold(f64::INFINITY, f64::min);
        sum += best.sqrt();
        count += 1;
    }
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnceReport {
    /// Percent.
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Mean Chamfer distance over true positives, metres.
    pub cd_error: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl OnceReport {
    pub fn table(&self) -> String {
        format!(
            "{:>7} {:>7} {:>7} {:>7}\n{:>7.1} {:>7.1} {:>7.1} {:>7}\n",
            "F1",
            "P",
            "R",
            "CDE",
            self.f1,
            self.precision,
            self.recall,
            self.cd_error.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnceMatch {
    pub gt: usize,
    pub pred: usize,
    pub iou: f64,
    pub chamfer: f64,
    pub true_positive: bool,
}

/// Matches one frame under the ONCE protocol.
pub fn match_once(gts: &[Lane3D], preds: &[&Lane3D], cfg: &EvalConfigONCE) -> Vec<OnceMatch> {
    const BLOCKED: f64 = 1e9;
    let gt_cells: Vec<_> = gts.iter().map(|g| rasterize_top_view(g, cfg)).collect();
    let gt_dense: Vec<_> = gts.iter().map(|g| densify(g, cfg.grid_cell)).collect();
    let pred_cells: Vec<_> = preds.iter().map(|p| rasterize_top_view(p, cfg)).collect();
    let mut iou = Array2::zeros((gts.len(), preds.len()));
    let mut cd = Array2::from_elem((gts.len(), preds.len()), f64::INFINITY);
    let mut cost = Array2::from_elem((gts.len(), preds.len()), BLOCKED);
    for i in 0..gts.len() {
        for j in 0..preds.len() {
            let v = cell_iou(&gt_cells[i], &pred_cells[j]);
            iou[[i, j]] = v;
            if v >= cfg.iou_threshold {
                let c = unilateral_chamfer_dense(preds[j], &gt_dense[i]);
                cd[[i, j]] = c;
                if c.is_finite() {
                    cost[[i, j]] = c;
                }
            }
        }
    }
    assignment::solve(&cost)
        .pairs()
        .filter(|&(i, j)| cost[[i, j]] < BLOCKED)
        .map(|(i, j)| OnceMatch {
            gt: i,
            pred: j,
            iou: iou[[i, j]],
            chamfer: cd[[i, j]],
            true_positive: cd[[i, j]] < cfg.tau_cd,
        })
        .collect()
}

pub fn evaluate_once(frames: &[EvalFrame], cfg: &EvalConfigONCE, exec: Execution) -> OnceReport {
    let per_frame = exec::map(exec, frames, |f| {
        let preds: Vec<&Lane3D> = f.preds.iter().filter(|p| p.score >= cfg.score_threshold).map(|p| &p.lane).collect();
        let matches = match_once(&f.gts, &preds, cfg);
        let tp: Vec<f64> = matches.iter().filter(|m| m.true_positive).map(|m| m.chamfer).collect();
        (tp, preds.len(), f.gts.len())
    });
    let (mut tp, mut n_pred, mut n_gt, mut cd_sum) = (0usize, 0usize, 0usize, 0.0);
    for (cds, p, g) in &per_frame {
        tp += cds.len();
        cd_sum += cds.iter().sum::<f64>();
        n_pred += p;
        n_gt += g;
    }
    let precision = if n_pred > 0 { tp as f64 / n_pred as f64 } else { 0.0 };
    let recall = if n_gt > 0 { tp as f64 / n_gt as f64 } else { 0.0 };
    OnceReport {
        f1: 100.0 * f1_score(precision, recall),
        precision: 100.0 * precision,
        recall: 100.0 * recall,
        cd_error: (tp > 0).then(|| cd_sum / tp as f64),
        tp,
        fp: n_pred - tp,
        fn_: n_gt - tp,
    }
}
