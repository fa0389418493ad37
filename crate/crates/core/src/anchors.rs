//! Anchor metas, prototype banks and prototype-based adaptive anchor generation.
//!
//! Each anchor is a straight ray leaving the ground `x` axis at `(xs, 0, 0)`,
//! with yaw `phi` (in the x-y plane, measured from `+y`) and pitch `theta`
//! (in the y-z plane, measured from `+y`). A sparse set of `M_a` anchors is
//! produced per frame by mixing a small bank of learned meta prototypes with
//! feature-conditioned softmax coefficients.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GroundPoint;
use crate::sampling::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorMetas {
    pub xs: f64,
    pub phi: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaRanges {
    pub xs_min: f64,
    pub xs_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for MetaRanges {
    fn default() -> Self {
        Self {
            xs_min: -12.0,
            xs_max: 12.0,
            phi_min: (-60.0f64).to_radians(),
            phi_max: 60.0f64.to_radians(),
            theta_min: (-5.0f64).to_radians(),
            theta_max: 5.0f64.to_radians(),
        }
    }
}

impl MetaRanges {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("xs", self.xs_min, self.xs_max),
            ("phi", self.phi_min, self.phi_max),
            ("theta", self.theta_min, self.theta_max),
        ];
        for (name, lo, hi) in pairs {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if self.phi_min <= -half_pi || self.phi_max >= half_pi {
            return Err(Error::InvalidConfig("phi range must lie inside (-pi/2, pi/2)".into()));
        }
        if self.theta_min <= -half_pi || self.theta_max >= half_pi {
            return Err(Error::InvalidConfig("theta range must lie inside (-pi/2, pi/2)".into()));
        }
        Ok(())
    }

    pub fn contains(&self, m: &AnchorMetas) -> bool {
        (self.xs_min..=self.xs_max).contains(&m.xs)
            && (self.phi_min..=self.phi_max).contains(&m.phi)
            && (self.theta_min..=self.theta_max).contains(&m.theta)
    }
}

/// How a clipped prototype mixture in `[-1, 1]` is mapped onto a meta range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaScaling {
    /// `((1 - v) · min + (1 + v) · max) / 2`, so `[-1, 1]` covers the range
    /// exactly and `v = 0` lands on the midpoint.
    #[default]
    Remapped,
    /// `v · (max - min) + min`, which lets `v < 0` fall below `min`.
    Literal,
}

impl MetaScaling {
    fn apply(self, clipped: f64, lo: f64, hi: f64) -> f64 {
        match self {
            MetaScaling::Remapped => ((1.0 - clipped) * lo + (1.0 + clipped) * hi) / 2.0,
            MetaScaling::Literal => clipped * (hi - lo) + lo,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    pub q_x: Array1<f64>,
    pub q_phi: Array1<f64>,
    pub q_theta: Array1<f64>,
}

impl PrototypeBank {
    /// Prototypes spread evenly over `[-1, 1]`, mirrored exactly about zero.
    pub fn uniform(m_x: usize, m_phi: usize, m_theta: usize) -> Self {
        let spread = |m: usize| {
            let mut v = Array1::zeros(m);
            if m > 1 {
                for i in 0..m / 2 {
                    let q = -1.0 + 2.0 * i as f64 / (m - 1) as f64;
                    v[i] = q;
                    v[m - 1 - i] = -q;
                }
            }
            v
        };
        Self { q_x: spread(m_x), q_phi: spread(m_phi), q_theta: spread(m_theta) }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.q_x.len(), self.q_phi.len(), self.q_theta.len()]
    }
}

/// Row-normalised mixing coefficients, one row per anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrices {
    pub w_x: Array2<f64>,
    pub w_phi: Array2<f64>,
    pub w_theta: Array2<f64>,
}

impl CoefficientMatrices {
    pub fn num_anchors(&self) -> usize {
        self.w_x.nrows()
    }

    /// Every row gets equal weight on every prototype.
    pub fn uniform(m_a: usize, sizes: [usize; 3]) -> Self {
        let u = |m: usize| Array2::from_elem((m_a, m), 1.0 / m as f64);
        Self { w_x: u(sizes[0]), w_phi: u(sizes[1]), w_theta: u(sizes[2]) }
    }
}

/// Linear layers turning a height-pooled feature map into prototype logits.
///
/// `a_m` has shape `(W_F·C_F, M_a·M_m)`; the logit vector is reshaped
/// row-major into an `M_a × M_m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PaagWeights {
    pub num_anchors: usize,
    pub a_x: Array2<f64>,
    pub b_x: Array1<f64>,
    pub a_phi: Array2<f64>,
    pub b_phi: Array1<f64>,
    pub a_theta: Array2<f64>,
    pub b_theta: Array1<f64>,
}

impl PaagWeights {
    pub fn zeros(num_anchors: usize, input_len: usize, sizes: [usize; 3]) -> Self {
        let a = |m: usize| Array2::zeros((input_len, num_anchors * m));
        let b = |m: usize| Array1::zeros(num_anchors * m);
        Self {
            num_anchors,
            a_x: a(sizes[0]),
            b_x: b(sizes[0]),
            a_phi: a(sizes[1]),
            b_phi: b(sizes[1]),
            a_theta: a(sizes[2]),
            b_theta: b(sizes[2]),
        }
    }

    pub fn input_len(&self) -> usize {
        self.a_x.nrows()
    }

    fn layers(&self) -> [(&'static str, &Array2<f64>, &Array1<f64>); 3] {
        [("x", &self.a_x, &self.b_x), ("phi", &self.a_phi, &self.b_phi), ("theta", &self.a_theta, &self.b_theta)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor3D {
    pub points: Vec<GroundPoint>,
    /// Metas the anchor was materialised from; `None` for anchors re-seeded
    /// from a previous stage's proposals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metas: Option<AnchorMetas>,
}

impl Anchor3D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.x)
    }

    pub fn zs(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.z)
    }
}

/// Numerically stable softmax along each row.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mixes prototypes with per-anchor coefficients, clips to `[-1, 1]` and
/// scales into `ranges`.
pub fn combine_metas(
    bank: &PrototypeBank,
    coeffs: &CoefficientMatrices,
    ranges: &MetaRanges,
    scaling: MetaScaling,
) -> Result<Vec<AnchorMetas>> {
    let checks = [
        ("W_x", &coeffs.w_x, bank.q_x.len()),
        ("W_phi", &coeffs.w_phi, bank.q_phi.len()),
        ("W_theta", &coeffs.w_theta, bank.q_theta.len()),
    ];
    let m_a = coeffs.w_x.nrows();
    for (name, w, m) in checks {
        if w.dim() != (m_a, m) {
            return Err(Error::shape(name, format!("{m_a}x{m}"), format!("{}x{}", w.nrows(), w.ncols())));
        }
    }
    let f = |w: &Array2<f64>, q: &Array1<f64>, j: usize, lo: f64, hi: f64| {
        let raw = signed_dot(w.row(j).iter().zip(q).map(|(a, b)| a * b));
        scaling.apply(raw.clamp(-1.0, 1.0), lo, hi)
    };
    Ok((0..m_a)
        .map(|j| AnchorMetas {
            xs: f(&coeffs.w_x, &bank.q_x, j, ranges.xs_min, ranges.xs_max),
            phi: f(&coeffs.w_phi, &bank.q_phi, j, ranges.phi_min, ranges.phi_max),
            theta: f(&coeffs.w_theta, &bank.q_theta, j, ranges.theta_min, ranges.theta_max),
        })
        .collect())
}

/// Sums positive and negative terms separately in ascending magnitude, so a
/// mixture of sign-symmetric prototypes with equal weights cancels to exactly 0.
fn signed_dot(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut pos, mut neg): (Vec<f64>, Vec<f64>) = terms.partition(|t| *t >= 0.0);
    pos.sort_by(|a, b| a.total_cmp(b));
    neg.sort_by(|a, b| b.total_cmp(a));
    pos.iter().sum::<f64>() + neg.iter().sum::<f64>()
}

/// Height-averaged, width-major flattening of a feature map: element
/// `w·C + c` is the mean over rows of channel `c` at column `w`.
pub fn pool_height(feature: &FeatureMap) -> Array1<f64> {
    let (h, w, c) = feature.dims();
    let mut pooled = Array1::zeros(w * c);
    let data = feature.data();
    for row in 0..h {
        let base = row * w * c;
        for (acc, v) in pooled.iter_mut().zip(&data[base..base + w * c]) {
            *acc += *v;
        }
    }
    pooled.mapv_inplace(|v| v / h as f64);
    pooled
}

/// Computes softmax-normalised prototype coefficients from a feature map.
pub fn pool_and_weigh(feature: &FeatureMap, weights: &PaagWeights, sizes: [usize; 3]) -> Result<CoefficientMatrices> {
    Ok(pool_and_weigh_batch(&[feature], weights, sizes)?.pop().expect("one frame in, one out"))
}

/// [`pool_and_weigh`] over several frames; the linear layers run once on
/// the stacked pooled features.
pub fn pool_and_weigh_batch(
    features: &[&FeatureMap],
    weights: &PaagWeights,
    sizes: [usize; 3],
) -> Result<Vec<CoefficientMatrices>> {
    let pooled: Vec<Array1<f64>> = features.iter().map(|f| pool_height(f)).collect();
    let len = weights.input_len();
    if let Some(p) = pooled.iter().find(|p| p.len() != len) {
        return Err(Error::shape("PAAG pooled feature length", len, p.len()));
    }
    let m_a = weights.num_anchors;
    let mut per_layer = Vec::with_capacity(3);
    for ((name, a, b), m) in weights.layers().into_iter().zip(sizes) {
        if a.dim() != (len, m_a * m) {
            return Err(Error::shape(
                format!("PAAG A_{name}"),
                format!("{}x{}", len, m_a * m),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if b.len() != m_a * m {
            return Err(Error::shape(format!("PAAG b_{name}"), m_a * m, b.len()));
        }
        let logits: Vec<Array1<f64>> = if pooled.len() == 1 {
            vec![affine(&pooled[0], a, b)]
        } else {
            let mut stacked = Array2::zeros((pooled.len(), len));
            for (mut row, p) in stacked.outer_iter_mut().zip(&pooled) {
                row.assign(p);
            }
            (stacked.dot(a) + b).outer_iter().map(|r| r.to_owned()).collect()
        };
        let mats: Vec<Array2<f64>> = logits
            .into_iter()
            .map(|l| softmax_rows(&l.into_shape_with_order((m_a, m)).expect("length checked above")))
            .collect();
        per_layer.push(mats);
    }
    let w_theta = per_layer.pop().unwrap();
    let w_phi = per_layer.pop().unwrap();
    let w_x = per_layer.pop().unwrap();
    Ok(w_x
        .into_iter()
        .zip(w_phi)
        .zip(w_theta)
        .map(|((w_x, w_phi), w_theta)| CoefficientMatrices { w_x, w_phi, w_theta })
        .collect())
}

/// `p · A + b`, streaming `A` row by row.
fn affine(p: &Array1<f64>, a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let mut out = b.to_vec();
    for (row, &pi) in a.outer_iter().zip(p) {
        let row = row.as_slice().expect("standard layout");
        for (o, r) in out.iter_mut().zip(row) {
            *o += pi * r;
        }
    }
    Array1::from(out)
}

/// Samples the anchor ray at the given forward distances.
pub fn materialize(metas: &AnchorMetas, y_samples: &[f64]) -> Anchor3D {
    debug_assert!(metas.phi.abs() < std::f64::consts::FRAC_PI_2);
    debug_assert!(metas.theta.abs() < std::f64::consts::FRAC_PI_2);
    let (tan_phi, tan_theta) = (metas.phi.tan(), metas.theta.tan());
    Anchor3D {
        points: y_samples.iter().map(|&y| GroundPoint::new(metas.xs + y * tan_phi, y, y * tan_theta)).collect(),
        metas: Some(*metas),
    }
}

/// Dense Cartesian-product anchors over evenly spaced metas; used as a
/// coverage baseline for the sparse generator.
pub fn dense_grid(ranges: &MetaRanges, counts: [usize; 3], y_samples: &[f64]) -> Vec<Anchor3D> {
    let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        if n <= 1 {
            vec![(lo + hi) / 2.0]
        } else {
            Array1::linspace(lo, hi, n).to_vec()
        }
    };
    let xs = axis(ranges.xs_min, ranges.xs_max, counts[0]);
    let phis = axis(ranges.phi_min, ranges.phi_max, counts[1]);
    let thetas = axis(ranges.theta_min, ranges.theta_max, counts[2]);
    let mut out = Vec::with_capacity(xs.len() * phis.len() * thetas.len());
    for &x in &xs {
        for &phi in &phis {
            for &theta in &thetas {
                out.push(materialize(&AnchorMetas { xs: x, phi, theta }, y_samples));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&array![[0.0, 0.0, 0.0], [1000.0, 0.0, 0.0]]);
        for v in s.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((s[[1, 0]] - 1.0).abs() < 1e-12);
        assert!(s[[1, 1]].abs() < 1e-12 && s[[1, 2]].abs() < 1e-12);

        let s = softmax_rows(&array![[1.0, 2.0]]);
        let e = std::f64::consts::E;
        assert!((s[[0, 0]] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((s[[0, 1]] - e / (1.0 + e)).abs() < 1e-15);
        assert!((s[[0, 0]] - 0.26894).abs() < 1e-5);
    }

    fn xs_only(q_x: Array1<f64>, w_x: Array2<f64>, lo: f64, hi: f64) -> f64 {
        let bank = PrototypeBank { q_x, q_phi: array![0.0], q_theta: array![0.0] };
        let coeffs = CoefficientMatrices { w_x, w_phi: array![[1.0]], w_theta: array![[1.0]] };
        let ranges = MetaRanges { xs_min: lo, xs_max: hi, ..MetaRanges::default() };
        combine_metas(&bank, &coeffs, &ranges, MetaScaling::Remapped).unwrap()[0].xs
    }

    #[test]
    fn combine_metas_examples() {
        let third = 1.0 / 3.0;
        assert_eq!(xs_only(array![-1.0, 0.0, 1.0], array![[third, third, third]], -10.0, 10.0), 0.0);
        assert_eq!(xs_only(array![-1.0, 0.0, 1.0], array![[0.0, 0.0, 1.0]], -10.0, 10.0), 10.0);
        let xs = xs_only(array![0.5, -0.5, 2.0], array![[0.5, 0.25, 0.25]], -12.0, 12.0);
        assert!((xs - 7.5).abs() < 1e-12, "{xs}");
    }

    #[test]
    fn literal_scaling_escapes_the_range_below() {
        let bank = PrototypeBank { q_x: array![-1.0], q_phi: array![0.0], q_theta: array![0.0] };
        let coeffs = CoefficientMatrices::uniform(1, [1, 1, 1]);
        let ranges = MetaRanges::default();
        let m = combine_metas(&bank, &coeffs, &ranges, MetaScaling::Literal).unwrap();
        assert_eq!(m[0].xs, 2.0 * ranges.xs_min - ranges.xs_max);
    }

    #[test]
    fn materialize_examples() {
        let a = materialize(&AnchorMetas { xs: 2.0, phi: std::f64::consts::FRAC_PI_4, theta: 0.0 }, &[10.0]);
        assert!((a.points[0].x - 12.0).abs() < 1e-12);
        assert_eq!(a.points[0].y, 10.0);
        assert_eq!(a.points[0].z, 0.0);

        let a = materialize(&AnchorMetas { xs: 1.3, phi: 0.0, theta: 0.0 }, &[3.0, 8.0, 50.0]);
        assert!(a.points.iter().all(|p| p.x == 1.3 && p.z == 0.0));

        let a = materialize(&AnchorMetas { xs: 0.0, phi: 0.0, theta: 0.02f64.atan() }, &[50.0]);
        assert!((a.points[0].z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pool_and_weigh_examples() {
        // 2 rows × 1 column × 1 channel: pooled value is the row mean.
        let fm = FeatureMap::new(2, 1, 1, 5, vec![1.0, 3.0]).unwrap();
        assert_eq!(pool_height(&fm).to_vec(), vec![2.0]);

        let sizes = [2, 2, 2];
        let zero = PaagWeights::zeros(3, 1, sizes);
        let c = pool_and_weigh(&fm, &zero, sizes).unwrap();
        assert!(c.w_x.iter().all(|v| (*v - 0.5).abs() < 1e-15));

        // constant feature c on a 2×2×1 map: logits = c·colsum(A) + b
        let fm = FeatureMap::new(2, 2, 1, 5, vec![0.7; 4]).unwrap();
        let mut w = PaagWeights::zeros(1, 2, [2, 1, 1]);
        w.a_x = array![[0.3, -1.0], [0.5, 2.0]];
        w.b_x = array![0.1, 0.0];
        let c = pool_and_weigh(&fm, &w, [2, 1, 1]).unwrap();
        let l0: f64 = 0.7 * (0.3 + 0.5) + 0.1;
        let l1 = 0.7 * (-1.0 + 2.0);
        let p0 = 1.0 / (1.0 + (l1 - l0).exp());
        assert!((c.w_x[[0, 0]] - p0).abs() < 1e-14);
        assert!((c.w_phi[[0, 0]] - 1.0).abs() < 1e-15);

        let bad = PaagWeights::zeros(1, 3, [2, 1, 1]);
        assert!(matches!(pool_and_weigh(&fm, &bad, [2, 1, 1]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn uniform_bank_spans_unit_interval() {
        let b = PrototypeBank::uniform(30, 15, 5);
        assert_eq!(b.sizes(), [30, 15, 5]);
        assert_eq!(b.q_x[0], -1.0);
        assert_eq!(b.q_x[29], 1.0);
        assert_eq!(b.q_phi[7], 0.0);
        let coeffs = CoefficientMatrices::uniform(4, b.sizes());
        let ranges = MetaRanges::default();
        for m in combine_metas(&b, &coeffs, &ranges, MetaScaling::Remapped).unwrap() {
            assert_eq!(m.xs, (ranges.xs_min + ranges.xs_max) / 2.0);
            assert_eq!(m.phi, (ranges.phi_min + ranges.phi_max) / 2.0);
            assert_eq!(m.theta, (ranges.theta_min + ranges.theta_max) / 2.0);
        }
    }

    #[test]
    fn dense_grid_size() {
        let g = dense_grid(&MetaRanges::default(), [5, 3, 2], &[5.0, 10.0]);
        assert_eq!(g.len(), 30);
    }
}
