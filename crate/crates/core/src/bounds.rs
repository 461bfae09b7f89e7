//! Lower-bound side: knowledge intervals, the ratio bound they imply, and the
//! one-dimensional optimisations behind the constants 9, 3+2√2 and 2+√5.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{bisect, AnalysisError};
use crate::plans::EvacPlan;
use crate::trajectory::{Trajectory, TrajectoryError};

/// Interval width at which the optimisers stop.
pub const OPT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

pub type Result<T, E = BoundsError> = std::result::Result<T, E>;

/// Locations an agent knows of, as a hull `[lo, hi]` around the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KnowledgeInterval {
    pub lo: f64,
    pub hi: f64,
}

impl KnowledgeInterval {
    pub fn origin() -> Self {
        Self { lo: 0.0, hi: 0.0 }
    }

    pub fn hull(self, other: Self) -> Self {
        Self {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    fn including(self, x: f64) -> Self {
        Self {
            lo: self.lo.min(x),
            hi: self.hi.max(x),
        }
    }

    pub fn is_within(&self, lo: f64, hi: f64) -> bool {
        self.lo >= lo && self.hi <= hi
    }

    pub fn contains(&self, other: &Self) -> bool {
        other.is_within(self.lo, self.hi)
    }
}

/// Range of positions visited up to time `t`.
pub fn direct_knowledge(traj: &Trajectory, t: f64) -> Result<KnowledgeInterval> {
    let now = traj.position_at(t)?;
    Ok(traj
        .vertices()
        .iter()
        .take_while(|v| v.time <= t)
        .fold(KnowledgeInterval::origin().including(now), |k, v| {
            k.including(v.position)
        }))
}

/// Latest `s <= t` at which `other` could still hand its knowledge to an agent
/// standing at `p` at time `t`, i.e. `|p - other(s)| <= t - s`. The feasible
/// times form a prefix `[0, s]` because `other` moves at unit speed.
fn last_handover(other: &Trajectory, p: f64, t: f64) -> Option<f64> {
    let mut best = None;
    for seg in other.segments_until(t) {
        let (a, b, y0, v) = (seg.start_time, seg.end_time, seg.start_position, seg.velocity);
        // p - Y(s) <= t - s and Y(s) - p <= t - s, each linear in s
        let mut limit = b;
        for (slope, intercept) in [(1.0 - v, p - y0 + v * a - t), (1.0 + v, y0 - v * a - p - t)] {
            // slope * s + intercept <= 0
            if slope > 0.0 {
                limit = limit.min(-intercept / slope);
            } else if intercept > 0.0 {
                limit = f64::NEG_INFINITY;
            }
        }
        if limit >= a {
            best = Some(limit);
        } else {
            break;
        }
    }
    best
}

/// Direct knowledge of agent `idx` plus everything another agent could carry
/// to it face-to-face by time `t` (one hop).
pub fn f2f_knowledge(trajs: &[Trajectory], idx: usize, t: f64) -> Result<KnowledgeInterval> {
    let own = trajs
        .get(idx)
        .ok_or_else(|| BoundsError::Domain(format!("no trajectory with index {idx}")))?;
    let p = own.position_at(t)?;
    let mut known = direct_knowledge(own, t)?;
    for (j, other) in trajs.iter().enumerate() {
        if j == idx {
            continue;
        }
        if let Some(s) = last_handover(other, p, t) {
            known = known.hull(direct_knowledge(other, s)?);
        }
    }
    Ok(known)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum RatioBound {
    Finite(f64),
    Unbounded,
}

impl RatioBound {
    pub fn value(self) -> f64 {
        match self {
            RatioBound::Finite(v) => v,
            RatioBound::Unbounded => f64::INFINITY,
        }
    }
}

/// Ratio forced by an exit placed just outside the known interval, for an
/// agent at `position` at time `t`.
pub fn cr_lb_from_knowledge(position: f64, t: f64, known: KnowledgeInterval) -> Result<RatioBound> {
    if !(t > 0.0) {
        return Err(BoundsError::Domain(format!("time must be positive, got {t}")));
    }
    if known.lo > 0.0 || known.hi < 0.0 {
        return Err(BoundsError::Domain("knowledge must contain the origin".into()));
    }
    let edge = |x: f64| -> RatioBound {
        if x == 0.0 {
            RatioBound::Unbounded
        } else if x.is_infinite() {
            RatioBound::Finite(1.0)
        } else {
            RatioBound::Finite(((position - x).abs() + t) / x.abs())
        }
    };
    Ok(match (edge(known.lo), edge(known.hi)) {
        (RatioBound::Finite(a), RatioBound::Finite(b)) => RatioBound::Finite(a.max(b)),
        _ => RatioBound::Unbounded,
    })
}

/// Bound for algorithms with a single sender `S`:
/// `1 + (1 + mu_A)(1 + mu_S) / (mu_A (1 - mu_S))`.
pub fn lb_one_sender(mu_a: f64, mu_s: f64) -> Result<RatioBound> {
    if mu_s == 1.0 && mu_a == 1.0 {
        return Ok(RatioBound::Unbounded);
    }
    if !(mu_s > 0.0 && mu_s < 1.0 && mu_s <= mu_a && mu_a <= 1.0) {
        return Err(BoundsError::Domain(format!(
            "need 0 < mu_S < 1 and mu_S <= mu_A <= 1, got mu_A = {mu_a}, mu_S = {mu_s}"
        )));
    }
    Ok(RatioBound::Finite(
        1.0 + (1.0 + mu_a) * (1.0 + mu_s) / (mu_a * (1.0 - mu_s)),
    ))
}

/// Bound through a receiver `R`: `1 + (1 + mu_A')(1 + mu_R) / (mu_A' (1 + mu_S))`.
pub fn lb_receiver(mu_a_prime: f64, mu_r: f64, mu_s: f64) -> Result<f64> {
    let unit = |m: f64| (0.0..=1.0).contains(&m);
    if !(mu_a_prime > 0.0 && mu_a_prime <= 1.0 && unit(mu_r) && unit(mu_s)) {
        return Err(BoundsError::Domain(format!(
            "need 0 < mu_A' <= 1 and mu_R, mu_S in [0, 1], got {mu_a_prime}, {mu_r}, {mu_s}"
        )));
    }
    Ok(1.0 + (1.0 + mu_a_prime) * (1.0 + mu_r) / (mu_a_prime * (1.0 + mu_s)))
}

/// `(1 + u)^2 / (u (1 - u))`.
pub fn g(u: f64) -> f64 {
    (1.0 + u) * (1.0 + u) / (u * (1.0 - u))
}

pub fn g_prime(u: f64) -> f64 {
    (1.0 + u) * (3.0 * u - 1.0) / (u * u * (1.0 - u) * (1.0 - u))
}

/// `1/u + (1 + u)/(1 - u)`.
pub fn h(u: f64) -> f64 {
    1.0 / u + (1.0 + u) / (1.0 - u)
}

pub fn h_prime(u: f64) -> f64 {
    (2.0 * u * u - (1.0 - u) * (1.0 - u)) / (u * u * (1.0 - u) * (1.0 - u))
}

fn minimize_by_derivative(f: fn(f64) -> f64, df: fn(f64) -> f64) -> Result<(f64, f64)> {
    let lo = 1e-9;
    let hi = 1.0 - 1e-9;
    let u = bisect(df, lo, hi, OPT_TOLERANCE)?;
    Ok((u, f(u)))
}

/// Minimiser of `g` on `(0, 1)`: `(1/3, 8)`.
pub fn minimize_g() -> Result<(f64, f64)> {
    minimize_by_derivative(g, g_prime)
}

/// Minimiser of `h` on `(0, 1)`: `(sqrt(2) - 1, 2 + 2 sqrt(2))`.
pub fn minimize_h() -> Result<(f64, f64)> {
    minimize_by_derivative(h, h_prime)
}

/// Sender speed balancing the two bounds when receivers may run at full
/// speed, `mu_S^2 + 4 mu_S - 1 = 0`, and the resulting bound `2 + sqrt(5)`.
pub fn solve_lb_one_many() -> Result<(f64, f64)> {
    let gap = |s: f64| 2.0 * (1.0 + s) / (1.0 - s) - 4.0 / (1.0 + s);
    let s = bisect(gap, 0.0, 1.0 - 1e-9, OPT_TOLERANCE)?;
    Ok((s, lb_receiver(1.0, 1.0, s)?))
}

/// Smallest value over a `n x n` grid of `(mu_S, mu_R)` of the larger of the
/// two bounds for one sender and one receiver, with `(mu_S, value, mu_R)`
/// of the minimiser.
pub fn one_one_grid_scan(n: usize) -> Result<(f64, f64, f64)> {
    if n == 0 {
        return Err(BoundsError::Domain("grid needs at least one point".into()));
    }
    let cells: Vec<(f64, f64)> = (1..=n)
        .flat_map(|i| (1..=n).map(move |j| ((i as f64 - 0.5) / n as f64, j as f64 / n as f64)))
        .collect();
    let values = cells
        .par_iter()
        .map(|&(s, r)| {
            let sender = lb_one_sender(r.max(s), s)?.value();
            let receiver = lb_receiver(s, r, s)?;
            Ok((s, sender.max(receiver), r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(values
        .into_iter()
        .fold((f64::NAN, f64::INFINITY, f64::NAN), |best, cell| {
            if cell.1 < best.1 {
                cell
            } else {
                best
            }
        }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuProfile {
    pub entries: BTreeMap<String, f64>,
    pub mu_a: f64,
}

/// Drift estimates of every baseline of a plan over `[tail_fraction*horizon, horizon]`.
pub fn mu_profile(plan: &EvacPlan, horizon: f64, tail_fraction: f64) -> Result<MuProfile> {
    let mut entries = BTreeMap::new();
    for agent in &plan.agents {
        entries.insert(agent.label.clone(), agent.baseline.mu_estimate(horizon, tail_fraction)?);
    }
    let mu_a = entries.values().cloned().fold(0.0, f64::max);
    Ok(MuProfile { entries, mu_a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Direction, RaysParams};
    use std::f64::consts::SQRT_2;

    fn line(v: f64) -> Trajectory {
        Trajectory::constant_velocity(v)
    }

    #[test]
    fn direct_knowledge_examples() {
        assert_eq!(
            direct_knowledge(&line(0.5), 10.0).unwrap(),
            KnowledgeInterval { lo: 0.0, hi: 5.0 }
        );
        let receiver = RaysParams::new(Direction::Right, 1.0 / 3.0, -1.0 / 3.0, 1.0)
            .unwrap()
            .trajectory(100.0)
            .unwrap();
        let k = direct_knowledge(&receiver, 6.0).unwrap();
        assert!((k.lo + 2.0).abs() < 1e-12 && k.hi == 1.0);
        assert_eq!(direct_knowledge(&receiver, 0.0).unwrap(), KnowledgeInterval::origin());
    }

    #[test]
    fn f2f_knowledge_examples() {
        let alone = [line(0.7)];
        assert_eq!(
            f2f_knowledge(&alone, 0, 4.0).unwrap(),
            direct_knowledge(&alone[0], 4.0).unwrap()
        );
        let pair = [Trajectory::stationary(), line(1.0)];
        let k = f2f_knowledge(&pair, 0, 10.0).unwrap();
        assert!((k.hi - 5.0).abs() < 1e-12 && k.lo == 0.0);
        let apart = [line(-1.0), line(1.0)];
        assert_eq!(
            f2f_knowledge(&apart, 0, 10.0).unwrap(),
            KnowledgeInterval { lo: -10.0, hi: 0.0 }
        );
    }

    #[test]
    fn handover_matches_brute_force() {
        let other = RaysParams::new(Direction::Right, 2.0 / 3.0, 1.0 / 9.0, 4.0)
            .unwrap()
            .trajectory(500.0)
            .unwrap();
        for (p, t) in [(0.0, 30.0), (-5.0, 40.0), (12.0, 25.0), (3.0, 100.0)] {
            let fast = last_handover(&other, p, t).unwrap();
            let n = 200_000;
            let slow = (0..=n)
                .map(|i| t * i as f64 / n as f64)
                .filter(|&s| (p - other.position_at(s).unwrap()).abs() <= t - s)
                .fold(0.0, f64::max);
            assert!(
                (fast - slow).abs() <= 2.0 * t / n as f64,
                "p={p} t={t}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn ratio_from_knowledge_examples() {
        let k = KnowledgeInterval { lo: -2.0, hi: 5.0 };
        assert_eq!(cr_lb_from_knowledge(5.0, 10.0, k).unwrap(), RatioBound::Finite(8.5));
        let k = KnowledgeInterval { lo: -1.0, hi: 1.0 };
        assert_eq!(cr_lb_from_knowledge(0.0, 1.0, k).unwrap(), RatioBound::Finite(2.0));
        let k = KnowledgeInterval { lo: 0.0, hi: 3.0 };
        assert_eq!(cr_lb_from_knowledge(3.0, 3.0, k).unwrap(), RatioBound::Unbounded);
        let all = KnowledgeInterval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        };
        assert_eq!(cr_lb_from_knowledge(0.0, 1.0, all).unwrap(), RatioBound::Finite(1.0));
        assert!(cr_lb_from_knowledge(0.0, 0.0, k).is_err());
    }

    #[test]
    fn one_sender_bound() {
        let third = 1.0 / 3.0;
        assert!((lb_one_sender(third, third).unwrap().value() - 9.0).abs() < 1e-12);
        let v = lb_one_sender(1.0, SQRT_2 - 1.0).unwrap().value();
        assert!((v - (3.0 + 2.0 * SQRT_2)).abs() < 1e-12);
        assert_eq!(lb_one_sender(1.0, 1.0).unwrap(), RatioBound::Unbounded);
        assert!(lb_one_sender(1e-9, 1e-9).unwrap().value() > 1e8);
        assert!(lb_one_sender(0.2, 0.3).is_err());
    }

    #[test]
    fn receiver_bound() {
        let r = (5f64.sqrt() - 2.0, 1.0);
        assert!((lb_receiver(1.0, r.1, r.0).unwrap() - (2.0 + 5f64.sqrt())).abs() < 1e-12);
        for (r, s) in [(0.1, 0.2), (0.5, 0.5), (0.9, 0.05), (0.33, 0.7), (1.0, 0.99)] {
            let v = lb_receiver(s, r, s).unwrap() - 1.0;
            assert!((v - (1.0 + r) / s).abs() < 1e-12);
        }
        let v = lb_receiver(0.5, 0.0, 0.25).unwrap();
        assert!((v - (1.0 + 1.5 / (0.5 * 1.25))).abs() < 1e-12);
        assert!(lb_receiver(0.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let step = 1e-6;
        for u in [0.1, 1.0 / 3.0, 0.5, 0.7, 0.9] {
            for (f, df) in [(g as fn(f64) -> f64, g_prime as fn(f64) -> f64), (h, h_prime)] {
                let fd = (f(u + step) - f(u - step)) / (2.0 * step);
                let exact = df(u);
                assert!(
                    (fd - exact).abs() <= 1e-5 * exact.abs().max(1.0),
                    "u={u}: {fd} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn grid_scan_stays_above_the_one_one_bound() {
        let (_, value, _) = one_one_grid_scan(100).unwrap();
        assert!(value >= 3.0 + 2.0 * SQRT_2 - 1e-4, "{value}");
    }
}
