//! Central finite-difference verification of the analytic loss gradients.
//!
//! Instances lying within [`KINK_MARGIN`] of a non-differentiable point are
//! redrawn; the assignment is computed once per instance and held fixed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::GroundPoint;
use crate::head::Proposal;
use crate::lane::Lane3D;
use crate::losses::{
    assign, ew_kink_margin, ew_loss_raw, regression_kink_margin, regression_loss, total_loss, Assignment, LossConfig,
};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;
pub const KINK_MARGIN: f64 = 1e-4;
/// Smallest denominator used for relative errors.
pub const ERROR_FLOOR: f64 = 1e-3;
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub trials: usize,
    pub redrawn: usize,
    pub coordinates_checked: usize,
    pub max_rel_error_ew: f64,
    pub max_rel_error_reg: f64,
    pub max_rel_error_total: f64,
    /// Trials in which the equal-width term was active.
    pub ew_active_trials: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub gts: Vec<Lane3D>,
    pub props: Vec<Proposal>,
    pub assignment: Assignment,
}

/// Up to 4 proposals with up to 5 points; lanes are near-parallel so the
/// equal-width gate is usually open.
pub fn random_instance(rng: &mut ChaCha8Rng, cfg: &LossConfig) -> Result<Instance> {
    let m_p = rng.random_range(2..=4);
    let m_g = rng.random_range(1..=m_p);
    let n = rng.random_range(2..=5);
    let mut y = Vec::with_capacity(n);
    let mut acc = rng.random_range(1.0..5.0);
    for _ in 0..n {
        y.push(acc);
        acc += rng.random_range(2.0..10.0);
    }
    let base: Vec<f64> = y.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let jitter = if rng.random_bool(0.8) { 0.05 } else { 1.0 };
    let lane_x = |j: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let offset = 3.5 * j as f64;
        base.iter().map(|b| offset + b + rng.random_range(-jitter..jitter)).collect()
    };
    let classes = rng.random_range(2..=4);
    let mut props = Vec::with_capacity(m_p);
    for j in 0..m_p {
        let x = lane_x(j, rng);
        let z: Vec<f64> = y.iter().map(|_| rng.random_range(-0.5..0.5)).collect();
        let vis: Vec<f64> = y.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let mut probs: Vec<f64> = (0..classes).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        props.push(Proposal::new(probs, y.clone(), x, z, vis));
    }
    let mut gts = Vec::with_capacity(m_g);
    for j in 0..m_g {
        let x = lane_x(j, rng);
        let points = y.iter().zip(&x).map(|(&yy, &xx)| GroundPoint::new(xx, yy, rng.random_range(-0.5..0.5))).collect();
        let mut vis: Vec<f64> = y.iter().map(|_| if rng.random_bool(0.8) { 1.0 } else { 0.0 }).collect();
        vis[0] = 1.0;
        gts.push(Lane3D::new(rng.random_range(1..classes), points, vis)?);
    }
    let assignment = assign(&gts, &props, cfg)?;
    Ok(Instance { gts, props, assignment })
}

fn central<F: FnMut(f64) -> Result<f64>>(x0: f64, mut f: F) -> Result<f64> {
    Ok((f(x0 + STEP)? - f(x0 - STEP)?) / (2.0 * STEP))
}

#[derive(Debug, Clone, Copy, Default)]
struct TrialErrors {
    ew: f64,
    reg: f64,
    total: f64,
    coordinates: usize,
    ew_active: bool,
}

fn check_instance(inst: &Instance, cfg: &LossConfig) -> Result<TrialErrors> {
    let mut out = TrialErrors::default();
    let y = inst.props[0].y.clone();
    let positives = inst.assignment.positives();

    // equal-width, over positive x rows
    let rows: Vec<Vec<f64>> = positives.iter().map(|&j| inst.props[j].x.clone()).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let ew = ew_loss_raw(&refs, &y, cfg.tau)?;
    out.ew_active = ew.value > 0.0;
    for p in 0..rows.len() {
        for k in 0..y.len() {
            let numeric = central(rows[p][k], |v| {
                let mut r = rows.clone();
                r[p][k] = v;
                let refs: Vec<&[f64]> = r.iter().map(|r| r.as_slice()).collect();
                Ok(ew_loss_raw(&refs, &y, cfg.tau)?.value)
            })?;
            out.ew = out.ew.max(relative_error(ew.grad_x[p][k], numeric));
            out.coordinates += 1;
        }
    }

    // regression and total, over every proposal coordinate
    let reg = regression_loss(&inst.gts, &inst.props, &inst.assignment)?;
    let total = total_loss(&inst.gts, &inst.props, &inst.assignment, cfg)?;
    for j in 0..inst.props.len() {
        for k in 0..y.len() {
            for field in 0..3 {
                let get = |p: &Proposal| match field {
                    0 => p.x[k],
                    1 => p.z[k],
                    _ => p.vis[k],
                };
                let perturbed = |v: f64| {
                    let mut props = inst.props.clone();
                    match field {
                        0 => props[j].x[k] = v,
                        1 => props[j].z[k] = v,
                        _ => props[j].vis[k] = v,
                    }
                    props
                };
                let x0 = get(&inst.props[j]);
                let num_reg = central(x0, |v| Ok(regression_loss(&inst.gts, &perturbed(v), &inst.assignment)?.value))?;
                let num_total =
                    central(x0, |v| Ok(total_loss(&inst.gts, &perturbed(v), &inst.assignment, cfg)?.total))?;
                let (a_reg, a_total) = match field {
                    0 => (reg.grad_x[j][k], total.grad.grad_x[j][k]),
                    1 => (reg.grad_z[j][k], total.grad.grad_z[j][k]),
                    _ => (reg.grad_vis[j][k], total.grad.grad_vis[j][k]),
                };
                out.reg = out.reg.max(relative_error(a_reg, num_reg));
                out.total = out.total.max(relative_error(a_total, num_total));
                out.coordinates += 2;
            }
        }
    }
    Ok(out)
}

fn near_kink(inst: &Instance, cfg: &LossConfig) -> Result<bool> {
    let positives = inst.assignment.positives();
    let rows: Vec<&[f64]> = positives.iter().map(|&j| inst.props[j].x.as_slice()).collect();
    let ew = ew_kink_margin(&rows, &inst.props[0].y, cfg.tau)?;
    let reg = regression_kink_margin(&inst.gts, &inst.props, &inst.assignment);
    Ok(ew.min(reg) < KINK_MARGIN)
}

pub fn run_grad_check(trials: usize, seed: u64, cfg: &LossConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        trials,
        redrawn: 0,
        coordinates_checked: 0,
        max_rel_error_ew: 0.0,
        max_rel_error_reg: 0.0,
        max_rel_error_total: 0.0,
        ew_active_trials: 0,
        passed: false,
    };
    for _ in 0..trials {
        let mut inst = random_instance(&mut rng, cfg)?;
        let mut redraws = 0;
        while near_kink(&inst, cfg)? {
            redraws += 1;
            if redraws > MAX_REDRAWS {
                return Err(crate::error::Error::InvalidConfig(
                    "could not draw an instance away from loss kinks".into(),
                ));
            }
            inst = random_instance(&mut rng, cfg)?;
        }
        report.redrawn += redraws;
        let e = check_instance(&inst, cfg)?;
        report.max_rel_error_ew = report.max_rel_error_ew.max(e.ew);
        report.max_rel_error_reg = report.max_rel_error_reg.max(e.reg);
        report.max_rel_error_total = report.max_rel_error_total.max(e.total);
        report.coordinates_checked += e.coordinates;
        report.ew_active_trials += usize::from(e.ew_active);
    }
    report.passed = report.max_rel_error_ew < TOLERANCE
        && report.max_rel_error_reg < TOLERANCE
        && report.max_rel_error_total < TOLERANCE;
    Ok(report)
}
