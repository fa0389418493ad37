//! Training objectives evaluated on proposals: one-to-one matching against
//! ground truth, classification and regression losses, and the equal-width
//! regulariser. Analytic gradients are returned with respect to proposal
//! coordinates and visibility so they can be checked against finite
//! differences.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::head::Proposal;
use crate::lane::{Lane3D, NON_LANE};

/// Probabilities below this are clamped before taking the log.
pub const MIN_PROB: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub beta_cls: f64,
    pub beta_dis: f64,
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub lambda_ew: f64,
    pub tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { beta_cls: 1.0, beta_dis: 3.0, lambda_cls: 1.0, lambda_reg: 1.0, lambda_ew: 0.1, tau: 0.1 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.beta_cls, self.beta_dis, self.lambda_cls, self.lambda_reg, self.lambda_ew];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig("loss coefficients must be finite and >= 0".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig("tau must be > 0".into()));
        }
        Ok(())
    }
}

fn check_pair(gt: &Lane3D, prop: &Proposal) -> Result<()> {
    if gt.len() != prop.num_points() {
        return Err(Error::LengthMismatch { left: gt.len(), right: prop.num_points() });
    }
    Ok(())
}

/// Visibility-weighted mean point distance in the x-z plane.
pub fn matching_distance(gt: &Lane3D, prop: &Proposal) -> Result<f64> {
    check_pair(gt, prop)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..gt.len() {
        let vis = gt.visibility[k];
        let (dx, dz) = (gt.points[k].x - prop.x[k], gt.points[k].z - prop.z[k]);
        num += vis * (dx * dx + dz * dz).sqrt();
        den += vis;
    }
    if den == 0.0 {
        return Err(Error::AllInvisible);
    }
    Ok(num / den)
}

/// `-β_cls · c[s] + β_dis · D`
pub fn matching_cost(gt: &Lane3D, prop: &Proposal, cfg: &LossConfig) -> Result<f64> {
    let dist = matching_distance(gt, prop)?;
    let prob = *prop
        .class_probs
        .get(gt.category)
        .ok_or_else(|| Error::shape("class_probs (category index)", gt.category + 1, prop.class_probs.len()))?;
    Ok(-cfg.beta_cls * prob + cfg.beta_dis * dist)
}

/// One-to-one assignment of ground-truth lanes to proposals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Proposal assigned to each ground-truth lane.
    pub sigma: Vec<Option<usize>>,
    /// Class label of every proposal; [`NON_LANE`] when unassigned.
    pub labels: Vec<usize>,
    pub total_cost: f64,
}

impl Assignment {
    /// `(gt, proposal)` pairs in ground-truth order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sigma.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j)))
    }

    pub fn positives(&self) -> Vec<usize> {
        self.pairs().map(|(_, j)| j).collect()
    }

    /// Assignment from explicit pairs, labelling proposals with the GT category.
    pub fn from_pairs(gts: &[Lane3D], num_props: usize, pairs: &[(usize, usize)]) -> Self {
        let mut sigma = vec![None; gts.len()];
        let mut labels = vec![NON_LANE; num_props];
        for &(i, j) in pairs {
            sigma[i] = Some(j);
            labels[j] = gts[i].category;
        }
        Self { sigma, labels, total_cost: f64::NAN }
    }
}

pub fn cost_matrix(gts: &[Lane3D], props: &[Proposal], cfg: &LossConfig) -> Result<Array2<f64>> {
    let mut cost = Array2::zeros((gts.len(), props.len()));
    for (i, gt) in gts.iter().enumerate() {
        for (j, p) in props.iter().enumerate() {
            cost[[i, j]] = matching_cost(gt, p, cfg)?;
        }
    }
    Ok(cost)
}

/// Minimum-total-cost injective matching of ground truth to proposals.
pub fn assign(gts: &[Lane3D], props: &[Proposal], cfg: &LossConfig) -> Result<Assignment> {
    if props.is_empty() {
        return Err(Error::InvalidConfig("assignment needs at least one proposal".into()));
    }
    let cost = cost_matrix(gts, props, cfg)?;
    let solved = assignment::solve(&cost);
    let mut labels = vec![NON_LANE; props.len()];
    for (i, j) in solved.pairs() {
        labels[j] = gts[i].category;
    }
    Ok(Assignment { sigma: solved.row_to_col, labels, total_cost: solved.total })
}

/// `-Σ_j log c_j[s_j]` over every proposal.
pub fn classification_loss(props: &[Proposal], assignment: &Assignment) -> Result<f64> {
    let (value, clamped) = classification_loss_clamped(props, assignment)?;
    if let Some(&j) = clamped.first() {
        return Err(Error::ProbabilityUnderflow { proposal: j, prob: props[j].class_probs[assignment.labels[j]] });
    }
    Ok(value)
}

/// Like [`classification_loss`] but clamps probabilities below [`MIN_PROB`]
/// and reports which proposals were clamped.
pub fn classification_loss_clamped(props: &[Proposal], assignment: &Assignment) -> Result<(f64, Vec<usize>)> {
    if assignment.labels.len() != props.len() {
        return Err(Error::LengthMismatch { left: assignment.labels.len(), right: props.len() });
    }
    let mut clamped = Vec::new();
    let mut total = 0.0;
    for (j, (p, &label)) in props.iter().zip(&assignment.labels).enumerate() {
        let prob = *p
            .class_probs
            .get(label)
            .ok_or_else(|| Error::shape("class_probs (label index)", label + 1, p.class_probs.len()))?;
        if prob < MIN_PROB {
            clamped.push(j);
        }
        total -= prob.max(MIN_PROB).ln();
    }
    Ok((total, clamped))
}

/// Loss value and its gradient with respect to every proposal's `x`, `z`
/// and visibility (indexed `[proposal][point]`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateGrad {
    pub value: f64,
    pub grad_x: Vec<Vec<f64>>,
    pub grad_z: Vec<Vec<f64>>,
    pub grad_vis: Vec<Vec<f64>>,
}

impl CoordinateGrad {
    fn zeros(props: &[Proposal]) -> Self {
        let z = || props.iter().map(|p| vec![0.0; p.num_points()]).collect::<Vec<_>>();
        Self { value: 0.0, grad_x: z(), grad_z: z(), grad_vis: z() }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Visibility-masked L1 on `x`/`z` plus L1 on visibility, over matched pairs.
pub fn regression_loss(gts: &[Lane3D], props: &[Proposal], assignment: &Assignment) -> Result<CoordinateGrad> {
    let mut out = CoordinateGrad::zeros(props);
    for (i, j) in assignment.pairs() {
        let (gt, p) = (&gts[i], &props[j]);
        check_pair(gt, p)?;
        for k in 0..gt.len() {
            let vis_gt = gt.visibility[k];
            let ex = p.x[k] - gt.points[k].x;
            let ez = p.z[k] - gt.points[k].z;
            let ev = p.vis[k] - vis_gt;
            out.value += (vis_gt * ex).abs() + (vis_gt * ez).abs() + ev.abs();
            out.grad_x[j][k] += vis_gt * sign(vis_gt * ex);
            out.grad_z[j][k] += vis_gt * sign(vis_gt * ez);
            out.grad_vis[j][k] += sign(ev);
        }
    }
    Ok(out)
}

/// Width-consistency term for an ordered lane pair, with widths measured
/// along the normals of `normal_lane`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairWidth {
    pub widths: Vec<f64>,
    /// Mean absolute deviation of the widths.
    pub deviation: f64,
    /// `deviation` if below `tau`, else 0.
    pub loss: f64,
    /// d loss / d x of the other lane.
    pub grad_other: Vec<f64>,
    /// d loss / d x of the normal lane.
    pub grad_normal: Vec<f64>,
}

/// Widths `w_k = |cos φ_k · (x_normal[k] − x_other[k])|`, where `cos φ_k` is
/// taken from the normal lane's segment `k → k+1` (the last point reuses the
/// final segment).
pub fn pair_width(other: &[f64], normal: &[f64], y: &[f64], tau: f64) -> Result<PairWidth> {
    let n = y.len();
    if other.len() != n || normal.len() != n {
        return Err(Error::LengthMismatch { left: n, right: other.len().min(normal.len()) });
    }
    if n < 2 {
        return Ok(PairWidth {
            widths: vec![0.0; n],
            deviation: 0.0,
            loss: 0.0,
            grad_other: vec![0.0; n],
            grad_normal: vec![0.0; n],
        });
    }
    let mut cos = vec![0.0; n];
    let mut dcos_ddx = vec![0.0; n];
    let mut seg = vec![0usize; n];
    for k in 0..n {
        let s = k.min(n - 2);
        let dy = y[s + 1] - y[s];
        if dy == 0.0 {
            return Err(Error::DegenerateSegment { index: s });
        }
        let dx = normal[s + 1] - normal[s];
        let r2 = dy * dy + dx * dx;
        let r = r2.sqrt();
        cos[k] = dy / r;
        dcos_ddx[k] = -dy * dx / (r2 * r);
        seg[k] = s;
    }
    let signed: Vec<f64> = (0..n).map(|k| cos[k] * (normal[k] - other[k])).collect();
    let widths: Vec<f64> = signed.iter().map(|v| v.abs()).collect();
    let nf = n as f64;
    let mean = widths.iter().sum::<f64>() / nf;
    let deviation = widths.iter().map(|w| (w - mean).abs()).sum::<f64>() / nf;
    let mut grad_other = vec![0.0; n];
    let mut grad_normal = vec![0.0; n];
    let loss = if deviation < tau { deviation } else { 0.0 };
    if deviation < tau {
        let dev_sign: Vec<f64> = widths.iter().map(|w| sign(w - mean)).collect();
        let mean_sign = dev_sign.iter().sum::<f64>() / nf;
        for k in 0..n {
            // d deviation / d w_k
            let d_w = (dev_sign[k] - mean_sign) / nf;
            // d w_k / d signed_k
            let d_signed = d_w * sign(signed[k]);
            let diff = normal[k] - other[k];
            grad_normal[k] += d_signed * cos[k];
            grad_other[k] -= d_signed * cos[k];
            let d_dx = d_signed * diff * dcos_ddx[k];
            grad_normal[seg[k] + 1] += d_dx;
            grad_normal[seg[k]] -= d_dx;
        }
    }
    Ok(PairWidth { widths, deviation, loss, grad_other, grad_normal })
}

/// Equal-width loss over positive proposals, averaged over ordered pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EwLoss {
    pub value: f64,
    /// d loss / d x, indexed `[positive][point]`.
    pub grad_x: Vec<Vec<f64>>,
}

pub fn ew_loss(positives: &[&Proposal], cfg: &LossConfig) -> Result<EwLoss> {
    let xs: Vec<&[f64]> = positives.iter().map(|p| p.x.as_slice()).collect();
    let y = positives.first().map_or(&[][..], |p| p.y.as_slice());
    ew_loss_raw(&xs, y, cfg.tau)
}

/// [`ew_loss`] on bare `x` rows sharing the forward samples `y`.
pub fn ew_loss_raw(xs: &[&[f64]], y: &[f64], tau: f64) -> Result<EwLoss> {
    let m = xs.len();
    let mut grad_x: Vec<Vec<f64>> = xs.iter().map(|x| vec![0.0; x.len()]).collect();
    if m < 2 {
        return Ok(EwLoss { value: 0.0, grad_x });
    }
    let norm = 1.0 / (m * (m - 1)) as f64;
    let mut value = 0.0;
    for j in 0..m {
        for jp in 0..m {
            if j == jp {
                continue;
            }
            let pair = pair_width(xs[j], xs[jp], y, tau)?;
            value += pair.loss;
            for (g, d) in grad_x[j].iter_mut().zip(&pair.grad_other) {
                *g += norm * d;
            }
            for (g, d) in grad_x[jp].iter_mut().zip(&pair.grad_normal) {
                *g += norm * d;
            }
        }
    }
    Ok(EwLoss { value: value * norm, grad_x })
}

/// Distance to the nearest non-differentiable point of the equal-width loss
/// (gate threshold, zero widths, widths equal to their mean).
pub fn ew_kink_margin(xs: &[&[f64]], y: &[f64], tau: f64) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for j in 0..xs.len() {
        for jp in 0..xs.len() {
            if j == jp {
                continue;
            }
            let pair = pair_width(xs[j], xs[jp], y, tau)?;
            margin = margin.min((pair.deviation - tau).abs());
            if pair.deviation < tau {
                let mean = pair.widths.iter().sum::<f64>() / pair.widths.len() as f64;
                for w in &pair.widths {
                    margin = margin.min(w.abs()).min((w - mean).abs());
                }
            }
        }
    }
    Ok(margin)
}

/// Distance to the nearest kink of the regression loss.
pub fn regression_kink_margin(gts: &[Lane3D], props: &[Proposal], assignment: &Assignment) -> f64 {
    let mut margin = f64::INFINITY;
    for (i, j) in assignment.pairs() {
        let (gt, p) = (&gts[i], &props[j]);
        for k in 0..gt.len() {
            if gt.visibility[k] != 0.0 {
                margin = margin.min((p.x[k] - gt.points[k].x).abs()).min((p.z[k] - gt.points[k].z).abs());
            }
            margin = margin.min((p.vis[k] - gt.visibility[k]).abs());
        }
    }
    margin
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub cls: f64,
    pub reg: f64,
    pub ew: f64,
    pub total: f64,
    /// Gradient of `total` with respect to proposal coordinates and visibility.
    pub grad: CoordinateGrad,
}

pub fn weighted_total(cls: f64, reg: f64, ew: f64, cfg: &LossConfig) -> f64 {
    cfg.lambda_cls * cls + cfg.lambda_reg * reg + cfg.lambda_ew * ew
}

pub fn total_loss(gts: &[Lane3D], props: &[Proposal], assignment: &Assignment, cfg: &LossConfig) -> Result<TotalLoss> {
    let cls = classification_loss(props, assignment)?;
    let reg = regression_loss(gts, props, assignment)?;
    let positives = assignment.positives();
    let pos_refs: Vec<&Proposal> = positives.iter().map(|&j| &props[j]).collect();
    let ew = ew_loss(&pos_refs, cfg)?;

    let mut grad = reg.clone();
    for row in grad.grad_x.iter_mut().chain(grad.grad_z.iter_mut()).chain(grad.grad_vis.iter_mut()) {
        row.iter_mut().for_each(|g| *g *= cfg.lambda_reg);
    }
    for (p, &j) in positives.iter().enumerate() {
        for (g, e) in grad.grad_x[j].iter_mut().zip(&ew.grad_x[p]) {
            *g += cfg.lambda_ew * e;
        }
    }
    let total = weighted_total(cls, reg.value, ew.value, cfg);
    grad.value = total;
    Ok(TotalLoss { cls, reg: reg.value, ew: ew.value, total, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GroundPoint;

    fn lane(xs: &[f64], zs: &[f64], vis: &[f64], category: usize) -> Lane3D {
        let points =
            xs.iter().zip(zs).enumerate().map(|(k, (&x, &z))| GroundPoint::new(x, 10.0 * (k + 1) as f64, z)).collect();
        Lane3D::new(category, points, vis.to_vec()).unwrap()
    }

    fn prop(xs: &[f64], zs: &[f64], vis: &[f64], probs: &[f64]) -> Proposal {
        let y = (0..xs.len()).map(|k| 10.0 * (k + 1) as f64).collect();
        Proposal::new(probs.to_vec(), y, xs.to_vec(), zs.to_vec(), vis.to_vec())
    }

    #[test]
    fn distance_examples() {
        let g = lane(&[1.0, 2.0, 3.0], &[0.0, 0.1, 0.2], &[1.0; 3], 1);
        let p = prop(&[1.0, 2.0, 3.0], &[0.0, 0.1, 0.2], &[1.0; 3], &[0.2, 0.8]);
        assert_eq!(matching_distance(&g, &p).unwrap(), 0.0);

        let p = prop(&[1.3, 2.3, 3.3], &[0.4, 0.5, 0.6], &[1.0; 3], &[0.2, 0.8]);
        assert!((matching_distance(&g, &p).unwrap() - 0.5).abs() < 1e-12);

        let g1 = lane(&[1.0, 2.0, 3.0], &[0.0; 3], &[0.0, 1.0, 0.0], 1);
        let p = prop(&[9.0, 3.2, -4.0], &[0.0; 3], &[1.0; 3], &[0.2, 0.8]);
        assert!((matching_distance(&g1, &p).unwrap() - 1.2).abs() < 1e-12);

        let hidden = lane(&[1.0, 2.0, 3.0], &[0.0; 3], &[0.0; 3], 1);
        assert_eq!(matching_distance(&hidden, &p), Err(Error::AllInvisible));
    }

    #[test]
    fn cost_examples() {
        let cfg = LossConfig::default();
        let g = lane(&[1.0, 2.0], &[0.0, 0.0], &[1.0; 2], 1);
        let p = prop(&[1.0, 2.0], &[0.0, 0.0], &[1.0; 2], &[0.2, 0.8]);
        assert!((matching_cost(&g, &p, &cfg).unwrap() + 0.8).abs() < 1e-15);
        let p = prop(&[1.3, 2.3], &[0.4, 0.4], &[1.0; 2], &[0.2, 0.8]);
        assert!((matching_cost(&g, &p, &cfg).unwrap() - 0.7).abs() < 1e-12);
        let geo = LossConfig { beta_cls: 0.0, ..cfg };
        assert!((matching_cost(&g, &p, &geo).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn assign_single_gt_picks_argmin() {
        let cfg = LossConfig::default();
        let g = lane(&[0.0, 0.0], &[0.0, 0.0], &[1.0; 2], 1);
        let props: Vec<_> =
            [2.0, 0.3, -1.0, 0.5].iter().map(|&o| prop(&[o, o], &[0.0, 0.0], &[1.0; 2], &[0.5, 0.5])).collect();
        let a = assign(&[g], &props, &cfg).unwrap();
        assert_eq!(a.sigma, vec![Some(1)]);
        assert_eq!(a.labels, vec![0, 1, 0, 0]);
    }

    #[test]
    fn classification_examples() {
        let a = Assignment { sigma: vec![], labels: vec![1, 0], total_cost: 0.0 };
        let p = vec![prop(&[0.0], &[0.0], &[1.0], &[0.0, 1.0]), prop(&[0.0], &[0.0], &[1.0], &[1.0, 0.0])];
        assert_eq!(classification_loss(&p, &a).unwrap(), 0.0);

        let e1 = (-1.0f64).exp();
        let p = vec![prop(&[0.0], &[0.0], &[1.0], &[1.0 - e1, e1])];
        let a = Assignment { sigma: vec![], labels: vec![1], total_cost: 0.0 };
        assert!((classification_loss(&p, &a).unwrap() - 1.0).abs() < 1e-15);

        let p = vec![prop(&[0.0], &[0.0], &[1.0], &[0.5, 0.5]); 2];
        let a = Assignment { sigma: vec![], labels: vec![1, 0], total_cost: 0.0 };
        assert!((classification_loss(&p, &a).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);

        let p = vec![prop(&[0.0], &[0.0], &[1.0], &[1.0, 0.0])];
        let a = Assignment { sigma: vec![], labels: vec![1], total_cost: 0.0 };
        assert!(matches!(classification_loss(&p, &a), Err(Error::ProbabilityUnderflow { proposal: 0, .. })));
        let (v, clamped) = classification_loss_clamped(&p, &a).unwrap();
        assert_eq!(clamped, vec![0]);
        assert!((v + MIN_PROB.ln()).abs() < 1e-9);
    }

    #[test]
    fn regression_examples() {
        let g = lane(&[1.0, 2.0], &[0.5, 0.5], &[1.0, 1.0], 1);
        let a = Assignment::from_pairs(std::slice::from_ref(&g), 1, &[(0, 0)]);
        let exact = prop(&[1.0, 2.0], &[0.5, 0.5], &[1.0, 1.0], &[0.5, 0.5]);
        assert_eq!(regression_loss(std::slice::from_ref(&g), &[exact], &a).unwrap().value, 0.0);

        let off = prop(&[1.1, 1.8], &[0.5, 0.5], &[1.0, 1.0], &[0.5, 0.5]);
        let r = regression_loss(std::slice::from_ref(&g), &[off], &a).unwrap();
        assert!((r.value - 0.3).abs() < 1e-12);
        assert_eq!(r.grad_x[0], vec![1.0, -1.0]);
        assert_eq!(r.grad_z[0], vec![0.0, 0.0]);

        let hidden = lane(&[1.0, 2.0], &[0.5, 0.5], &[0.0, 0.0], 1);
        let wild = prop(&[7.0, -3.0], &[0.5, 0.5], &[0.25, 0.5], &[0.5, 0.5]);
        let r = regression_loss(&[hidden], &[wild], &a).unwrap();
        assert!((r.value - 0.75).abs() < 1e-15);
        assert_eq!(r.grad_x[0], vec![0.0, 0.0]);
    }

    #[test]
    fn ew_examples() {
        let y = [10.0, 20.0, 30.0];
        let r = ew_loss_raw(&[&[0.0; 3], &[3.0; 3]], &y, 0.1).unwrap();
        assert_eq!(r.value, 0.0);

        let pair = pair_width(&[3.0, 3.0, 3.09], &[0.0; 3], &y, 0.1).unwrap();
        assert!((pair.deviation - 0.04).abs() < 1e-12, "{}", pair.deviation);
        assert!((pair.loss - 0.04).abs() < 1e-12);

        let fork = pair_width(&[3.0, 3.0, 3.9], &[0.0; 3], &y, 0.1).unwrap();
        assert!((fork.deviation - 0.4).abs() < 1e-12);
        assert_eq!(fork.loss, 0.0);
        let r = ew_loss_raw(&[&[0.0; 3], &[3.0, 3.0, 3.9]], &y, 0.1).unwrap();
        assert_eq!(r.value, 0.0);

        assert_eq!(ew_loss_raw(&[&[0.0; 2], &[1.0; 2]], &[5.0, 5.0], 0.1), Err(Error::DegenerateSegment { index: 0 }));
        assert_eq!(ew_loss_raw(&[&[0.0; 3]], &y, 0.1).unwrap().value, 0.0);
    }

    #[test]
    fn total_examples() {
        let cfg = LossConfig::default();
        assert!((weighted_total(1.0, 0.3, 0.04, &cfg) - 1.304).abs() < 1e-15);
        let no_ew = LossConfig { lambda_ew: 0.0, ..cfg };
        assert_eq!(weighted_total(1.0, 0.3, 0.04, &no_ew), 1.0 + 0.3);

        let gts =
            vec![lane(&[-1.75, -1.75], &[0.0, 0.0], &[1.0, 1.0], 1), lane(&[1.75, 1.75], &[0.0, 0.0], &[1.0, 1.0], 2)];
        let props = vec![
            prop(&[1.75, 1.75], &[0.0, 0.0], &[1.0, 1.0], &[0.0, 0.0, 1.0]),
            prop(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0, 0.0]),
            prop(&[-1.75, -1.75], &[0.0, 0.0], &[1.0, 1.0], &[0.0, 1.0, 0.0]),
        ];
        let a = assign(&gts, &props, &cfg).unwrap();
        assert_eq!(a.sigma, vec![Some(2), Some(0)]);
        let t = total_loss(&gts, &props, &a, &cfg).unwrap();
        assert_eq!((t.cls, t.reg, t.ew, t.total), (0.0, 0.0, 0.0, 0.0));
    }
}
