//! Prediction head: single-head self-attention across anchors followed by a
//! classification layer and a regression layer producing per-point `x`/`z`
//! offsets and visibility logits.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::anchors::{softmax_rows, Anchor3D};
use crate::error::{Error, Result};
use crate::geometry::GroundPoint;
use crate::lane::{Lane3D, NON_LANE};
use crate::sampling::AnchorFeature;

/// One refined lane hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    /// `S + 1` probabilities; index 0 is the non-lane class.
    pub class_probs: Vec<f64>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub vis: Vec<f64>,
    /// Highest lane-class probability.
    pub score: f64,
}

impl Proposal {
    pub fn new(class_probs: Vec<f64>, y: Vec<f64>, x: Vec<f64>, z: Vec<f64>, vis: Vec<f64>) -> Self {
        let score = lane_score(&class_probs);
        Self { class_probs, y, x, z, vis, score }
    }

    pub fn num_points(&self) -> usize {
        self.y.len()
    }

    /// Most probable lane category (never the non-lane class when `S >= 1`).
    pub fn category(&self) -> usize {
        self.class_probs
            .iter()
            .enumerate()
            .skip(1)
            .fold((NON_LANE, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }

    pub fn points(&self) -> impl Iterator<Item = GroundPoint> + '_ {
        (0..self.y.len()).map(|k| GroundPoint::new(self.x[k], self.y[k], self.z[k]))
    }

    /// The proposal's points become the next stage's anchor.
    pub fn to_anchor(&self) -> Anchor3D {
        Anchor3D { points: self.points().collect(), metas: None }
    }

    pub fn to_lane(&self) -> Lane3D {
        Lane3D { category: self.category(), points: self.points().collect(), visibility: self.vis.clone() }
    }
}

fn lane_score(class_probs: &[f64]) -> f64 {
    class_probs.iter().skip(1).copied().fold(0.0, f64::max)
}

/// Weights of one refinement stage's head.
///
/// `w_q`, `w_k`, `w_v` are `C_a × d` and `w_o` is `d × C_a`; with `d = C_a`
/// this is the square single-head form. `cls_w` is `C_a × (S+1)` and `reg_w`
/// is `C_a × 3N` laid out as `[Δx(N) | Δz(N) | vis logits(N)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    w_q: Array2<f64>,
    w_k: Array2<f64>,
    w_v: Array2<f64>,
    w_o: Array2<f64>,
    cls_w: Array2<f64>,
    cls_b: Array1<f64>,
    reg_w: Array2<f64>,
    reg_b: Array1<f64>,
    // fused copies used on the hot path: [W_q | W_k | W_v | cls_w | reg_w]
    // and W_o · [cls_w | reg_w]
    w_in: Array2<f64>,
    w_o_out: Array2<f64>,
    b_out: Array1<f64>,
}

impl HeadWeights {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        w_q: Array2<f64>,
        w_k: Array2<f64>,
        w_v: Array2<f64>,
        w_o: Array2<f64>,
        cls_w: Array2<f64>,
        cls_b: Array1<f64>,
        reg_w: Array2<f64>,
        reg_b: Array1<f64>,
    ) -> Result<Self> {
        let c_a = w_q.nrows();
        let d = w_q.ncols();
        let expect = |name: &str, m: &Array2<f64>, shape: (usize, usize)| -> Result<()> {
            if m.dim() != shape {
                return Err(Error::shape(
                    format!("head {name}"),
                    format!("{}x{}", shape.0, shape.1),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
            Ok(())
        };
        expect("W_k", &w_k, (c_a, d))?;
        expect("W_v", &w_v, (c_a, d))?;
        expect("W_o", &w_o, (d, c_a))?;
        expect("cls_w", &cls_w, (c_a, cls_w.ncols()))?;
        expect("reg_w", &reg_w, (c_a, reg_w.ncols()))?;
        if cls_w.ncols() < 2 {
            return Err(Error::shape("head cls_w columns", ">= 2", cls_w.ncols()));
        }
        if !reg_w.ncols().is_multiple_of(3) {
            return Err(Error::shape("head reg_w columns", "multiple of 3", reg_w.ncols()));
        }
        if cls_b.len() != cls_w.ncols() {
            return Err(Error::shape("head cls_b", cls_w.ncols(), cls_b.len()));
        }
        if reg_b.len() != reg_w.ncols() {
            return Err(Error::shape("head reg_b", reg_w.ncols(), reg_b.len()));
        }
        let all = [&w_q, &w_k, &w_v, &w_o, &cls_w, &reg_w];
        if all.iter().any(|m| m.iter().any(|v| !v.is_finite())) || cls_b.iter().chain(&reg_b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("head weights contain non-finite values".into()));
        }

        let w_in = ndarray::concatenate(Axis(1), &[w_q.view(), w_k.view(), w_v.view(), cls_w.view(), reg_w.view()])
            .expect("row counts checked");
        let w_out = ndarray::concatenate(Axis(1), &[cls_w.view(), reg_w.view()]).expect("row counts checked");
        let w_o_out = w_o.dot(&w_out);
        let b_out = ndarray::concatenate(Axis(0), &[cls_b.view(), reg_b.view()]).expect("1-d");
        Ok(Self { w_q, w_k, w_v, w_o, cls_w, cls_b, reg_w, reg_b, w_in, w_o_out, b_out })
    }

    /// All-zero head: uniform class probabilities, zero offsets, visibility 0.5.
    pub fn zeros(feature_len: usize, attn_dim: usize, num_classes: usize, num_points: usize) -> Self {
        let z = |r, c| Array2::zeros((r, c));
        Self::new(
            z(feature_len, attn_dim),
            z(feature_len, attn_dim),
            z(feature_len, attn_dim),
            z(attn_dim, feature_len),
            z(feature_len, num_classes),
            Array1::zeros(num_classes),
            z(feature_len, 3 * num_points),
            Array1::zeros(3 * num_points),
        )
        .expect("consistent shapes")
    }

    /// Per-anchor feature length `C_a`.
    pub fn feature_len(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn attn_dim(&self) -> usize {
        self.w_q.ncols()
    }

    /// `S + 1`
    pub fn num_classes(&self) -> usize {
        self.cls_w.ncols()
    }

    pub fn num_points(&self) -> usize {
        self.reg_w.ncols() / 3
    }

    pub fn w_q(&self) -> &Array2<f64> {
        &self.w_q
    }
    pub fn w_k(&self) -> &Array2<f64> {
        &self.w_k
    }
    pub fn w_v(&self) -> &Array2<f64> {
        &self.w_v
    }
    pub fn w_o(&self) -> &Array2<f64> {
        &self.w_o
    }
    pub fn cls(&self) -> (&Array2<f64>, &Array1<f64>) {
        (&self.cls_w, &self.cls_b)
    }
    pub fn reg(&self) -> (&Array2<f64>, &Array1<f64>) {
        (&self.reg_w, &self.reg_b)
    }
}

/// `Y = X + softmax((X W_q)(X W_k)ᵀ / √d) (X W_v) W_o`
pub fn self_attention(x: &Array2<f64>, w: &HeadWeights) -> Result<Array2<f64>> {
    let (_, context) = attend(x.view(), w)?;
    Ok(x + &context.dot(&w.w_o))
}

/// Returns `X · w_in` and the attention context `softmax(QKᵀ/√d) V`.
fn attend(x: ArrayView2<f64>, w: &HeadWeights) -> Result<(Array2<f64>, Array2<f64>)> {
    if x.ncols() != w.feature_len() {
        return Err(Error::shape("attention input width", w.feature_len(), x.ncols()));
    }
    let d = w.attn_dim();
    let z = x.dot(&w.w_in);
    let context = attention_context(z.view(), d);
    Ok((z, context))
}

/// `softmax(QKᵀ/√d) V` from the projected rows `z = [Q | K | V | ...]`.
fn attention_context(z: ArrayView2<f64>, d: usize) -> Array2<f64> {
    let q = z.slice(s![.., 0..d]);
    let k = z.slice(s![.., d..2 * d]);
    let v = z.slice(s![.., 2 * d..3 * d]);
    let scale = 1.0 / (d.max(1) as f64).sqrt();
    let scores = q.dot(&k.t()) * scale;
    softmax_rows(&scores).dot(&v)
}

/// Stacks per-anchor features into an `M_a × C_a` matrix.
pub fn stack_features(features: &[AnchorFeature]) -> Result<Array2<f64>> {
    let c_a = features.first().map_or(0, |f| f.values.len());
    let mut x = Array2::zeros((features.len(), c_a));
    for (mut row, f) in x.axis_iter_mut(Axis(0)).zip(features) {
        if f.values.len() != c_a {
            return Err(Error::shape("anchor feature length", c_a, f.values.len()));
        }
        row.assign(&ndarray::aview1(&f.values));
    }
    Ok(x)
}

/// Runs attention and the two heads, turning every anchor into a proposal.
pub fn predict(features: &[AnchorFeature], anchors: &[Anchor3D], w: &HeadWeights) -> Result<Vec<Proposal>> {
    Ok(predict_batch(&[features], &[anchors], w)?.pop().expect("one frame in, one out"))
}

/// [`predict`] over several frames. Attention stays within each frame; the
/// linear layers run once on all frames' anchors stacked together.
pub fn predict_batch(
    features: &[&[AnchorFeature]],
    anchors: &[&[Anchor3D]],
    w: &HeadWeights,
) -> Result<Vec<Vec<Proposal>>> {
    if features.len() != anchors.len() {
        return Err(Error::LengthMismatch { left: features.len(), right: anchors.len() });
    }
    let n = w.num_points();
    let c_a = w.feature_len();
    for (f, a) in features.iter().zip(anchors) {
        if f.len() != a.len() {
            return Err(Error::LengthMismatch { left: f.len(), right: a.len() });
        }
        if let Some(bad) = a.iter().find(|a| a.len() != n) {
            return Err(Error::shape("anchor points", n, bad.len()));
        }
        if let Some(bad) = f.iter().find(|f| f.values.len() != c_a) {
            return Err(Error::shape("anchor feature length", c_a, bad.values.len()));
        }
    }
    let rows: usize = anchors.iter().map(|a| a.len()).sum();
    if rows == 0 {
        return Ok(vec![Vec::new(); anchors.len()]);
    }

    let mut x = Array2::zeros((rows, c_a));
    for (mut row, f) in x.outer_iter_mut().zip(features.iter().flat_map(|f| f.iter())) {
        row.assign(&ndarray::aview1(&f.values));
    }
    let d = w.attn_dim();
    let z = x.dot(&w.w_in);
    let mut context = Array2::zeros((rows, d));
    let mut r0 = 0;
    for a in anchors {
        let r1 = r0 + a.len();
        if r1 > r0 {
            let block = z.slice(s![r0..r1, ..]);
            context.slice_mut(s![r0..r1, ..]).assign(&attention_context(block, d));
        }
        r0 = r1;
    }
    // (X + C W_o) [cls | reg] + b, with W_o folded into the output layer
    let out = &z.slice(s![.., 3 * d..]) + &context.dot(&w.w_o_out) + &w.b_out;
    let classes = w.num_classes();
    let probs = softmax_rows(&out.slice(s![.., 0..classes]).to_owned());

    let mut r = 0;
    Ok(anchors
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|anchor| {
                    let reg = out.slice(s![r, classes..]);
                    let p = &anchor.points;
                    let ys = p.iter().map(|p| p.y).collect();
                    let xs = p.iter().enumerate().map(|(k, p)| p.x + reg[k]).collect();
                    let zs = p.iter().enumerate().map(|(k, p)| p.z + reg[n + k]).collect();
                    let vis = (0..n).map(|k| sigmoid(reg[2 * n + k])).collect();
                    let prop = Proposal::new(probs.row(r).to_vec(), ys, xs, zs, vis);
                    r += 1;
                    prop
                })
                .collect()
        })
        .collect())
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{materialize, AnchorMetas};
    use ndarray::array;

    fn feature(values: Vec<f64>, channels: usize) -> AnchorFeature {
        let n = values.len() / channels;
        AnchorFeature { values, valid: vec![true; n], channels }
    }

    #[test]
    fn zero_output_projection_is_identity() {
        let mut w = HeadWeights::zeros(3, 2, 2, 1);
        w = HeadWeights::new(
            Array2::from_elem((3, 2), 0.3),
            Array2::from_elem((3, 2), -0.2),
            Array2::from_elem((3, 2), 0.7),
            Array2::zeros((2, 3)),
            w.cls_w.clone(),
            w.cls_b.clone(),
            w.reg_w.clone(),
            w.reg_b.clone(),
        )
        .unwrap();
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]];
        assert_eq!(self_attention(&x, &w).unwrap(), x);
    }

    #[test]
    fn single_anchor_attends_to_itself() {
        let w_v = array![[1.0, 0.0], [0.5, 1.0], [0.0, -1.0]];
        let w_o = array![[1.0, 0.0, 2.0], [0.0, 1.0, 0.0]];
        let base = HeadWeights::zeros(3, 2, 2, 1);
        let w = HeadWeights::new(
            Array2::from_elem((3, 2), 0.9),
            Array2::from_elem((3, 2), 0.4),
            w_v.clone(),
            w_o.clone(),
            base.cls_w.clone(),
            base.cls_b.clone(),
            base.reg_w.clone(),
            base.reg_b.clone(),
        )
        .unwrap();
        let x = array![[1.0, 2.0, 3.0]];
        let expected = &x + &x.dot(&w_v).dot(&w_o);
        let y = self_attention(&x, &w).unwrap();
        for (a, b) in y.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_network_predictions() {
        let n = 4;
        let w = HeadWeights::zeros(n * 2, 3, 5, n);
        let ys = [5.0, 10.0, 20.0, 40.0];
        let anchors: Vec<_> =
            [0.0, 3.5].iter().map(|&xs| materialize(&AnchorMetas { xs, phi: 0.1, theta: 0.01 }, &ys)).collect();
        let feats = vec![feature(vec![0.2; 8], 2), feature(vec![-0.4; 8], 2)];
        let props = predict(&feats, &anchors, &w).unwrap();
        for (p, a) in props.iter().zip(&anchors) {
            assert!(p.class_probs.iter().all(|c| (c - 0.2).abs() < 1e-15));
            assert!(p.vis.iter().all(|v| *v == 0.5));
            assert_eq!(p.x, a.xs().collect::<Vec<_>>());
            assert_eq!(p.z, a.zs().collect::<Vec<_>>());
            assert_eq!(p.y, ys.to_vec());
        }
    }

    #[test]
    fn bias_only_offset() {
        let n = 3;
        let base = HeadWeights::zeros(n, n, 2, n);
        let mut reg_b = Array1::zeros(3 * n);
        reg_b.slice_mut(s![0..n]).fill(1.0);
        let w = HeadWeights::new(
            base.w_q.clone(),
            base.w_k.clone(),
            base.w_v.clone(),
            base.w_o.clone(),
            base.cls_w.clone(),
            base.cls_b.clone(),
            base.reg_w.clone(),
            reg_b,
        )
        .unwrap();
        let anchor = materialize(&AnchorMetas { xs: -2.0, phi: 0.2, theta: 0.0 }, &[5.0, 15.0, 25.0]);
        let props = predict(&[feature(vec![1.0, 2.0, 3.0], 1)], std::slice::from_ref(&anchor), &w).unwrap();
        for (p, a) in props[0].x.iter().zip(anchor.xs()) {
            assert_eq!(*p, a + 1.0);
        }
    }

    #[test]
    fn shape_errors() {
        let w = HeadWeights::zeros(4, 2, 2, 2);
        let anchor = materialize(&AnchorMetas { xs: 0.0, phi: 0.0, theta: 0.0 }, &[5.0, 10.0]);
        let short = feature(vec![0.0; 2], 1);
        assert!(matches!(predict(&[short], std::slice::from_ref(&anchor), &w), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(predict(&[], &[anchor], &w), Err(Error::LengthMismatch { .. })));
        let bad = HeadWeights::new(
            Array2::zeros((4, 2)),
            Array2::zeros((4, 3)),
            Array2::zeros((4, 2)),
            Array2::zeros((2, 4)),
            Array2::zeros((4, 2)),
            Array1::zeros(2),
            Array2::zeros((4, 6)),
            Array1::zeros(6),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn proposal_category_skips_non_lane() {
        let p = Proposal::new(vec![0.7, 0.1, 0.2], vec![1.0], vec![0.0], vec![0.0], vec![1.0]);
        assert_eq!(p.category(), 2);
        assert_eq!(p.score, 0.2);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
