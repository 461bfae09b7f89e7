//! Competitive-ratio measurement: the closed-form bound of the rays plan, its
//! first-order condition, and adversarial target sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{simulate, EngineError};
use crate::plans::{EvacPlan, PlanKind};
use crate::trajectory::{left_sender_tp, right_sender_tp, TrajectoryError};

/// Offset above a regime boundary used for critical targets.
pub const BOUNDARY_OFFSET: f64 = 1e-7;

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-5;
pub const FD_POINTS: [f64; 5] = [0.1, 1.0 / 3.0, 0.5, 0.7, 0.9];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{0}")]
    Domain(String),
    #[error("no sign change on [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("derivative identity fails at v_r = {v_r}: relative error {rel_err:e}")]
    DerivativeMismatch { v_r: f64, rel_err: f64 },
    #[error("empty target grid")]
    EmptyGrid,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

fn check_vr(v_r: f64) -> Result<()> {
    if v_r > 0.0 && v_r < 1.0 {
        Ok(())
    } else {
        Err(AnalysisError::Domain(format!("v_r must lie in (0, 1), got {v_r}")))
    }
}

/// Upper bound on the competitive ratio of the rays plan:
/// `1 + (1+v)/(1-v) * (1 + 4v - v^2) / (v (3 - v))`.
pub fn cr_bound_evac_rays(v_r: f64) -> Result<f64> {
    check_vr(v_r)?;
    let v = v_r;
    Ok(1.0 + (1.0 + v) / (1.0 - v) * (1.0 + 4.0 * v - v * v) / (v * (3.0 - v)))
}

/// `v^4 - 16 v^3 + 26 v^2 + 8 v - 3`.
pub fn quartic_residual(v_r: f64) -> f64 {
    let v = v_r;
    (((v - 16.0) * v + 26.0) * v + 8.0) * v - 3.0
}

/// Derivative of the bound written through the quartic.
pub fn bound_derivative(v_r: f64) -> Result<f64> {
    check_vr(v_r)?;
    let v = v_r;
    let den = v * v * (3.0 - v) * (3.0 - v) * (1.0 - v) * (1.0 - v);
    Ok(quartic_residual(v) / den)
}

/// Bisection for a sign change of `f` on `[lo, hi]`, to interval width `tol`.
pub fn bisect(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(AnalysisError::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(AnalysisError::Bracket { lo, hi });
    }
    let negative_at_a = fa < 0.0;
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == negative_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub v_r: f64,
    pub finite_difference: f64,
    pub identity: f64,
    pub rel_err: f64,
}

/// Compares a central difference of the bound with the quartic identity.
pub fn derivative_check(v_r: f64, step: f64) -> Result<DerivativeCheck> {
    let finite_difference = (cr_bound_evac_rays(v_r + step)? - cr_bound_evac_rays(v_r - step)?) / (2.0 * step);
    let identity = bound_derivative(v_r)?;
    let rel_err = (finite_difference - identity).abs() / identity.abs().max(f64::MIN_POSITIVE);
    Ok(DerivativeCheck {
        v_r,
        finite_difference,
        identity,
        rel_err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VrOptimum {
    pub v_r: f64,
    pub cr: f64,
    pub quartic_residual: f64,
    pub checks: Vec<DerivativeCheck>,
}

/// Root of the quartic in `(0, 1)` by bisection, with the derivative identity
/// checked at a fixed set of interior points.
pub fn optimize_vr(tolerance: f64) -> Result<VrOptimum> {
    let v_r = bisect(quartic_residual, 0.0, 1.0, tolerance)?;
    let checks = FD_POINTS
        .iter()
        .map(|&v| derivative_check(v, FD_STEP))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = checks.iter().find(|c| !(c.rel_err <= FD_TOLERANCE)) {
        return Err(AnalysisError::DerivativeMismatch {
            v_r: bad.v_r,
            rel_err: bad.rel_err,
        });
    }
    Ok(VrOptimum {
        v_r,
        cr: cr_bound_evac_rays(v_r)?,
        quartic_residual: quartic_residual(v_r),
        checks,
    })
}

/// Targets just past each regime start of the unscaled rays plan:
/// `D^+_{2k} (1 + 1e-7)` on the right and `D^-_{2k} (1 + 1e-7)` on the left,
/// for `k = 0..=k_max`, in ascending order.
pub fn critical_targets(v_r: f64, k_max: usize) -> Result<Vec<f64>> {
    check_vr(v_r)?;
    let mut out = Vec::with_capacity(2 * (k_max + 1));
    for k in 0..=k_max {
        out.push(right_sender_tp(v_r, 2 * k)?.position * (1.0 + BOUNDARY_OFFSET));
        out.push(left_sender_tp(v_r, 2 * k)?.position * (1.0 + BOUNDARY_OFFSET));
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub both_signs: bool,
}

impl TargetGrid {
    pub fn geometric(min: f64, max: f64, points: usize) -> Self {
        Self {
            min,
            max,
            points,
            both_signs: true,
        }
    }

    /// Geometric magnitudes, mirrored if requested, in ascending order.
    pub fn targets(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) {
            return Err(AnalysisError::Domain(format!(
                "grid bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.points == 0 {
            return Err(AnalysisError::EmptyGrid);
        }
        let magnitudes: Vec<f64> = if self.points == 1 {
            vec![self.min]
        } else {
            let step = (self.max / self.min).ln() / (self.points - 1) as f64;
            (0..self.points)
                .map(|i| {
                    if i + 1 == self.points {
                        self.max
                    } else {
                        self.min * (step * i as f64).exp()
                    }
                })
                .collect()
        };
        let mut out = magnitudes.clone();
        if self.both_signs {
            out.extend(magnitudes.iter().map(|m| -m));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        Ok(out)
    }
}

/// Closed-form competitive ratio of a plan, where one is known.
pub fn analytic_bound(plan: &EvacPlan) -> Option<f64> {
    match plan.name {
        PlanKind::OneOne => Some(3.0 + 2.0 * std::f64::consts::SQRT_2),
        PlanKind::OneMany => Some(5.0),
        PlanKind::EvacRays => plan.param("v_r").and_then(|v| cr_bound_evac_rays(v).ok()),
    }
}

/// Grid plus the rays plan's critical targets (scaled to the plan layout),
/// kept to `1 <= |x| <= coverage`.
pub fn sweep_targets(plan: &EvacPlan, grid: &TargetGrid, critical_k_max: Option<usize>) -> Result<Vec<f64>> {
    let mut targets = grid.targets()?;
    if let (PlanKind::EvacRays, Some(k_max)) = (plan.name, critical_k_max) {
        let v_r = plan
            .param("v_r")
            .ok_or_else(|| AnalysisError::Domain("plan lacks v_r".into()))?;
        let scale = plan.param("scale").unwrap_or(1.0);
        targets.extend(critical_targets(v_r, k_max)?.into_iter().map(|x| x * scale));
    }
    let coverage = plan.coverage.unwrap_or(f64::INFINITY);
    targets.retain(|x| x.abs() >= 1.0 && x.abs() <= coverage);
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    Ok(targets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub x: f64,
    pub evac_time: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrReport {
    pub schema: u32,
    pub plan: PlanKind,
    pub params: BTreeMap<String, f64>,
    pub grid: TargetGrid,
    pub critical_k_max: Option<usize>,
    pub boundary_offset: f64,
    pub empirical_sup: f64,
    pub sup_witness_x: f64,
    pub analytic_bound: Option<f64>,
    pub records: Vec<SweepRecord>,
}

impl CrReport {
    /// CSV with header `x,evac_time,ratio`, rows in ascending `x`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for record in &self.records {
            writer.serialize(record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Simulates every target and reports the largest ratio; ties go to the
/// smallest `x`.
pub fn cr_sweep(plan: &EvacPlan, targets: &[f64]) -> Result<Vec<SweepRecord>> {
    if targets.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    let mut records = targets
        .par_iter()
        .map(|&x| {
            simulate(plan, x).map(|out| SweepRecord {
                x,
                evac_time: out.evac_time,
                ratio: out.ratio,
            })
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    records.sort_by(|a, b| a.x.total_cmp(&b.x));
    Ok(records)
}

/// Runs a sweep over `grid` (plus critical targets for the rays plan) and
/// assembles the report.
pub fn cr_report(plan: &EvacPlan, grid: &TargetGrid, critical_k_max: Option<usize>) -> Result<CrReport> {
    let targets = sweep_targets(plan, grid, critical_k_max)?;
    let records = cr_sweep(plan, &targets)?;
    let (empirical_sup, sup_witness_x) = records.iter().fold((f64::NEG_INFINITY, f64::NAN), |(best, at), r| {
        if r.ratio > best {
            (r.ratio, r.x)
        } else {
            (best, at)
        }
    });
    Ok(CrReport {
        schema: 1,
        plan: plan.name,
        params: plan.params.clone(),
        grid: grid.clone(),
        critical_k_max: if plan.name == PlanKind::EvacRays {
            critical_k_max
        } else {
            None
        },
        boundary_offset: BOUNDARY_OFFSET,
        empirical_sup,
        sup_witness_x,
        analytic_bound: analytic_bound(plan),
        records,
    })
}
