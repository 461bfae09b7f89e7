//! The three evacuation algorithms, expressed as data: an agent list with
//! capabilities, baseline search trajectories and post-notification policies.

use std::collections::BTreeMap;

use num_traits::pow;
use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::trajectory::{receiver_growth, Direction, RaysParams, Trajectory, TrajectoryError};

pub type AgentId = usize;

/// Default number of full receiver rounds a `Rays` plan is laid out for.
pub const DEFAULT_K_MAX: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid plan parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

pub type Result<T, E = PlanError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Capability {
    /// Broadcasts at any distance, hears only face-to-face.
    Sender,
    /// Hears broadcasts at any distance, speaks only face-to-face.
    Receiver,
    Wireless,
}

impl Capability {
    pub fn transmits_wirelessly(self) -> bool {
        matches!(self, Capability::Sender | Capability::Wireless)
    }

    pub fn receives_wirelessly(self) -> bool {
        matches!(self, Capability::Receiver | Capability::Wireless)
    }
}

/// What an agent does once it knows where the exit is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "targets")]
pub enum ReactionPolicy {
    GoToExit,
    /// Catch every listed agent that is still uninformed (earliest
    /// interception first), then go to the exit. Listed agents that already
    /// know are skipped, so the same policy serves both the finder and an
    /// agent reached by broadcast.
    PursueThenExit(Vec<AgentId>),
    /// Idle at the baseline until told, then go to the exit.
    WaitUntilNotified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub label: String,
    pub capability: Capability,
    #[serde(rename = "turning_points")]
    pub baseline: Trajectory,
    pub reaction: ReactionPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanKind {
    OneOne,
    OneMany,
    EvacRays,
}

impl PlanKind {
    pub fn label(self) -> &'static str {
        match self {
            PlanKind::OneOne => "one-one",
            PlanKind::OneMany => "one-many",
            PlanKind::EvacRays => "evac-rays",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvacPlan {
    pub name: PlanKind,
    pub params: BTreeMap<String, f64>,
    /// Baselines are exact up to this time; `None` for straight-line plans.
    pub horizon: Option<f64>,
    /// Largest target magnitude whose evacuation finishes within the horizon.
    pub coverage: Option<f64>,
    pub agents: Vec<AgentSpec>,
}

impl EvacPlan {
    pub fn agent(&self, id: AgentId) -> &AgentSpec {
        &self.agents[id]
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }
}

fn agent(
    id: AgentId,
    label: &str,
    capability: Capability,
    baseline: Trajectory,
    reaction: ReactionPolicy,
) -> AgentSpec {
    AgentSpec {
        id,
        label: label.to_string(),
        capability,
        baseline,
        reaction,
    }
}

/// One sender drifting right at speed `sqrt(2) - 1`, one receiver sweeping left
/// at full speed. A receiver that finds the exit runs the sender down.
pub fn plan_one_one() -> EvacPlan {
    let sender_speed = std::f64::consts::SQRT_2 - 1.0;
    let agents = vec![
        agent(
            0,
            "sender",
            Capability::Sender,
            Trajectory::constant_velocity(sender_speed),
            ReactionPolicy::GoToExit,
        ),
        agent(
            1,
            "receiver",
            Capability::Receiver,
            Trajectory::constant_velocity(-1.0),
            ReactionPolicy::PursueThenExit(vec![0]),
        ),
    ];
    EvacPlan {
        name: PlanKind::OneOne,
        params: BTreeMap::from([("sender_speed".to_string(), sender_speed)]),
        horizon: None,
        coverage: None,
        agents,
    }
}

/// One sender parked at the origin, two receivers sweeping outwards at full
/// speed; further receivers wait at the origin.
pub fn plan_one_many(n_r: usize) -> Result<EvacPlan> {
    if n_r < 2 {
        return Err(PlanError::Parameter(format!(
            "one-many needs at least 2 receivers, got {n_r}"
        )));
    }
    let mut agents = vec![
        agent(
            0,
            "sender",
            Capability::Sender,
            Trajectory::stationary(),
            ReactionPolicy::GoToExit,
        ),
        agent(
            1,
            "receiver-left",
            Capability::Receiver,
            Trajectory::constant_velocity(-1.0),
            ReactionPolicy::PursueThenExit(vec![0]),
        ),
        agent(
            2,
            "receiver-right",
            Capability::Receiver,
            Trajectory::constant_velocity(1.0),
            ReactionPolicy::PursueThenExit(vec![0]),
        ),
    ];
    for extra in 0..n_r - 2 {
        let id = agents.len();
        agents.push(agent(
            id,
            &format!("receiver-idle-{}", extra + 1),
            Capability::Receiver,
            Trajectory::stationary(),
            ReactionPolicy::WaitUntilNotified,
        ));
    }
    Ok(EvacPlan {
        name: PlanKind::OneMany,
        params: BTreeMap::from([("n_r".to_string(), n_r as f64)]),
        horizon: None,
        coverage: None,
        agents,
    })
}

/// Speeds and start offsets of the two sender zig-zags for receiver speed `v_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvacRaysParams<S = f64> {
    pub v_r: S,
    pub v0: S,
    pub v1: S,
    pub gamma_plus: S,
    pub gamma_minus: S,
}

impl<S: Scalar> EvacRaysParams<S> {
    pub fn new(v_r: S) -> Result<Self> {
        if !(v_r > S::zero() && v_r < S::one()) {
            return Err(PlanError::Parameter(format!("v_r must lie in (0, 1), got {v_r:?}")));
        }
        let one = S::one();
        let three = S::from_i64(3).expect("small integer");
        let v0 = v_r.clone() * (three.clone() - v_r.clone()) / (one.clone() + v_r.clone());
        let v1 = v_r.clone() * (one.clone() - v_r.clone()) / (one.clone() + three.clone() * v_r.clone());
        let gamma_plus = (three - v_r.clone()) / (one - v_r.clone());
        let gamma_minus = gamma_plus.clone() * receiver_growth(&v_r);
        Ok(Self {
            v_r,
            v0,
            v1,
            gamma_plus,
            gamma_minus,
        })
    }

    /// `Rays(+1, v0, v1, scale*gamma_plus)`.
    pub fn right_sender(&self, scale: S) -> Result<RaysParams<S>> {
        Ok(RaysParams::new(
            Direction::Right,
            self.v0.clone(),
            self.v1.clone(),
            scale * self.gamma_plus.clone(),
        )?)
    }

    /// `Rays(-1, v0, v1, scale*gamma_minus)`.
    pub fn left_sender(&self, scale: S) -> Result<RaysParams<S>> {
        Ok(RaysParams::new(
            Direction::Left,
            self.v0.clone(),
            self.v1.clone(),
            scale * self.gamma_minus.clone(),
        )?)
    }

    /// `Rays(+1, v_r, -v_r, scale)`.
    pub fn receiver(&self, scale: S) -> Result<RaysParams<S>> {
        Ok(RaysParams::new(
            Direction::Right,
            self.v_r.clone(),
            -self.v_r.clone(),
            scale,
        )?)
    }

    /// Receiver turning time `j` of the unscaled layout.
    pub fn receiver_time(&self, j: usize) -> S {
        pow(receiver_growth(&self.v_r), j) / self.v_r.clone()
    }
}

/// `(v0, v1, gamma_plus, gamma_minus)` for receiver speed `v_r`.
pub fn evac_rays_params(v_r: f64) -> Result<(f64, f64, f64, f64)> {
    let p = EvacRaysParams::new(v_r)?;
    Ok((p.v0, p.v1, p.gamma_plus, p.gamma_minus))
}

/// Baselines of the right sender, left sender and receiver, each exact up to
/// `horizon`.
pub fn evac_rays_trajectories<S: Scalar>(
    params: &EvacRaysParams<S>,
    scale: S,
    horizon: S,
) -> Result<[Trajectory<S>; 3]> {
    Ok([
        params.right_sender(scale.clone())?.trajectory(horizon.clone())?,
        params.left_sender(scale.clone())?.trajectory(horizon.clone())?,
        params.receiver(scale)?.trajectory(horizon)?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaysPlanOptions {
    /// Number of senders; all but two idle at the origin.
    pub n_s: usize,
    /// Multiplies every `gamma` (the whole layout scales with it).
    pub scale: f64,
    pub k_max: usize,
    /// Overrides the default horizon `scale * T^r_{2 k_max + 3}`.
    pub horizon: Option<f64>,
}

impl Default for RaysPlanOptions {
    fn default() -> Self {
        Self {
            n_s: 2,
            scale: 1.0,
            k_max: DEFAULT_K_MAX,
            horizon: None,
        }
    }
}

impl RaysPlanOptions {
    /// Layout shrunk by `1 / gamma_minus`, so both senders have finished their
    /// initial outward walk by distance 1 and every target with `|x| >= 1`
    /// falls in a steady zig-zag round.
    pub fn normalized(v_r: f64) -> Result<Self> {
        let p = EvacRaysParams::new(v_r)?;
        Ok(Self {
            scale: 1.0 / p.gamma_minus,
            ..Self::default()
        })
    }
}

/// Two zig-zagging senders and a zig-zagging receiver at the given `v_r`.
pub fn plan_evac_rays(v_r: f64, n_s: usize, horizon: Option<f64>) -> Result<EvacPlan> {
    build_evac_rays(
        v_r,
        &RaysPlanOptions {
            n_s,
            horizon,
            ..RaysPlanOptions::default()
        },
    )
}

pub fn build_evac_rays(v_r: f64, options: &RaysPlanOptions) -> Result<EvacPlan> {
    if options.n_s < 2 {
        return Err(PlanError::Parameter(format!(
            "rays plan needs at least 2 senders, got {}",
            options.n_s
        )));
    }
    if !(options.scale > 0.0 && options.scale.is_finite()) {
        return Err(PlanError::Parameter(format!(
            "scale must be positive, got {}",
            options.scale
        )));
    }
    let p = EvacRaysParams::new(v_r)?;
    let scale = options.scale;
    let horizon = options
        .horizon
        .unwrap_or_else(|| scale * p.receiver_time(2 * options.k_max + 3));
    if !(horizon > 0.0) {
        return Err(PlanError::Parameter(format!("horizon must be positive, got {horizon}")));
    }
    // right regime k needs the horizon to reach T^r_{2k+3}; left regime k
    // finishes by T^r_{2k+4}, which is covered once x <= |D^-_{2k}|.
    let rounds = (0..=options.k_max + 64)
        .take_while(|&k| scale * p.receiver_time(2 * k + 3) <= horizon * (1.0 + 1e-12))
        .last();
    let right = p.right_sender(scale)?;
    let coverage = rounds
        .map(|k| right.turning_point(2 * k).map(|tp| tp.position))
        .transpose()?;

    let [right_path, left_path, receiver_path] = evac_rays_trajectories(&p, scale, horizon)?;
    let mut agents = vec![
        agent(
            0,
            "right-sender",
            Capability::Sender,
            right_path,
            ReactionPolicy::GoToExit,
        ),
        agent(
            1,
            "left-sender",
            Capability::Sender,
            left_path,
            ReactionPolicy::GoToExit,
        ),
        agent(
            2,
            "receiver",
            Capability::Receiver,
            receiver_path,
            ReactionPolicy::PursueThenExit(vec![0, 1]),
        ),
    ];
    for extra in 0..options.n_s - 2 {
        let id = agents.len();
        agents.push(agent(
            id,
            &format!("sender-idle-{}", extra + 1),
            Capability::Sender,
            Trajectory::stationary(),
            ReactionPolicy::WaitUntilNotified,
        ));
    }
    let params = BTreeMap::from([
        ("v_r".to_string(), p.v_r),
        ("v0".to_string(), p.v0),
        ("v1".to_string(), p.v1),
        ("gamma_plus".to_string(), p.gamma_plus),
        ("gamma_minus".to_string(), p.gamma_minus),
        ("scale".to_string(), scale),
        ("n_s".to_string(), options.n_s as f64),
    ]);
    Ok(EvacPlan {
        name: PlanKind::EvacRays,
        params,
        horizon: Some(horizon),
        coverage,
        agents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TurningPoint;
    use num_rational::BigRational;
    use num_traits::FromPrimitive;

    #[test]
    fn one_one_layout() {
        let plan = plan_one_one();
        assert_eq!(plan.agents.len(), 2);
        let sender = &plan.agents[0].baseline;
        assert!((sender.position_at(1.0).unwrap() - 0.414_213_6).abs() < 1e-7);
        assert_eq!(plan.agents[1].baseline.position_at(2.0).unwrap(), -2.0);
        assert_eq!(plan.agents[0].capability, Capability::Sender);
        assert_eq!(plan.agents[1].reaction, ReactionPolicy::PursueThenExit(vec![0]));
    }

    #[test]
    fn one_many_layout() {
        let plan = plan_one_many(2).unwrap();
        assert_eq!(plan.agents.len(), 3);
        for t in [0.0, 1.0, 17.5, 1e6] {
            assert_eq!(plan.agents[0].baseline.position_at(t).unwrap(), 0.0);
        }
        let plan = plan_one_many(5).unwrap();
        assert_eq!(plan.agents.len(), 6);
        let parked = plan
            .agents
            .iter()
            .filter(|a| a.capability == Capability::Receiver && a.baseline.position_at(50.0).unwrap() == 0.0)
            .count();
        assert_eq!(parked, 3);
        assert!(plan_one_many(1).is_err());
    }

    #[test]
    fn rays_params_at_one_third() {
        let (v0, v1, gp, gm) = evac_rays_params(1.0 / 3.0).unwrap();
        assert!((v0 - 2.0 / 3.0).abs() < 1e-15);
        assert!((v1 - 1.0 / 9.0).abs() < 1e-15);
        assert!((gp - 4.0).abs() < 1e-14);
        assert!((gm - 8.0).abs() < 1e-14);

        let v_r = 0.228652;
        let (v0, ..) = evac_rays_params(v_r).unwrap();
        // independent evaluation of v_r (3 - v_r) / (1 + v_r)
        let expected = (3.0 * v_r - v_r * v_r) / (1.0 + v_r);
        assert!((v0 - expected).abs() < 1e-15);
        assert!((v0 - 0.515720).abs() < 1e-4);

        assert!(evac_rays_params(0.0).is_err());
        assert!(evac_rays_params(1.0).is_err());
        assert!(evac_rays_params(-0.1).is_err());
        let tiny = evac_rays_params(1e-9).unwrap();
        assert!(tiny.0 < 1e-8);
    }

    #[test]
    fn rays_plan_layout() {
        let plan = plan_evac_rays(1.0 / 3.0, 2, None).unwrap();
        let right = plan.agents[0].baseline.vertices();
        let close = |a: &TurningPoint, p: f64, t: f64| (a.position - p).abs() < 1e-12 && (a.time - t).abs() < 1e-12;
        assert!(close(&right[0], 0.0, 0.0));
        assert!(close(&right[1], 4.0, 4.0));
        assert!(close(&right[2], 4.0, 6.0));
        assert!(close(&right[3], 1.0, 9.0));
        assert!(close(&right[4], 16.0, 24.0));
        let receiver = plan.agents[2].baseline.vertices();
        assert!(close(&receiver[3], -2.0, 6.0));

        let plan = plan_evac_rays(1.0 / 3.0, 4, None).unwrap();
        assert_eq!(plan.agents.len(), 5);
        assert_eq!(
            plan.agents
                .iter()
                .filter(|a| a.capability == Capability::Sender && a.baseline.vertices().len() == 1)
                .count(),
            2
        );
        assert!(plan_evac_rays(1.0 / 3.0, 1, None).is_err());
        assert!(plan_evac_rays(1.2, 2, None).is_err());
    }

    #[test]
    fn horizon_and_coverage_follow_k_max() {
        let plan = plan_evac_rays(1.0 / 3.0, 2, None).unwrap();
        // T^r_27 = 3 * 2^27 and D^+_24 = 4 * 4^12 at v_r = 1/3
        assert!((plan.horizon.unwrap() / (3.0 * 2f64.powi(27)) - 1.0).abs() < 1e-12);
        let coverage = plan.coverage.unwrap();
        assert!((coverage / (4.0 * 4f64.powi(12)) - 1.0).abs() < 1e-12);

        let normalized = build_evac_rays(1.0 / 3.0, &RaysPlanOptions::normalized(1.0 / 3.0).unwrap()).unwrap();
        assert!((normalized.param("scale").unwrap() - 1.0 / 8.0).abs() < 1e-15);
        let left = normalized.agents[1].baseline.vertices();
        assert!((left[2].position + 1.0).abs() < 1e-12);
    }

    #[test]
    fn senders_stay_on_their_side() {
        for v_r in [0.15, 0.228652, 1.0 / 3.0, 0.45] {
            let plan = plan_evac_rays(v_r, 2, None).unwrap();
            assert!(plan.agents[0].baseline.vertices().iter().all(|v| v.position >= 0.0));
            assert!(plan.agents[1].baseline.vertices().iter().all(|v| v.position <= 0.0));
            assert!(plan.agents.iter().all(|a| a.baseline.validate_unit_speed()));
        }
    }

    #[test]
    fn plan_serializes_with_turning_points() {
        let json = serde_json::to_value(plan_one_one()).unwrap();
        assert_eq!(json["name"], "one-one");
        assert_eq!(json["agents"][1]["capability"], "receiver");
        assert_eq!(json["agents"][1]["reaction"]["kind"], "pursue-then-exit");
        assert_eq!(json["agents"][1]["turning_points"][1][0], -1.0);
    }

    fn co_location_holds<S: Scalar>(v_r: S, rounds: usize, eps: f64) {
        let p = EvacRaysParams::new(v_r).unwrap();
        let horizon = p.receiver_time(2 * rounds + 4);
        let [right, left, receiver] = evac_rays_trajectories(&p, S::one(), horizon).unwrap();
        let turn = |t: &Trajectory<S>, j: usize| t.vertices()[j + 2].clone();
        let tr = |j: usize| p.receiver_time(j);
        let same = |a: &S, b: &S| (a.clone() - b.clone()).abs().approx() <= eps * b.approx().abs().max(1.0);
        for k in 0..rounds {
            assert!(same(&turn(&right, 2 * k).time, &tr(2 * k + 1)));
            assert!(same(&turn(&left, 2 * k).time, &tr(2 * k + 2)));
            // co-located at both ends and the sample midpoint of each window
            let windows = [
                (&right, turn(&right, 2 * k + 1).time, tr(2 * k + 2)),
                (&left, turn(&left, 2 * k + 1).time, tr(2 * k + 3)),
            ];
            for (sender, from, to) in windows {
                assert!(from <= to);
                let two = S::one() + S::one();
                let mid = (from.clone() + to.clone()) / two;
                for t in [from, mid, to] {
                    let a = sender.position_at(t.clone()).unwrap();
                    let b = receiver.position_at(t.clone()).unwrap();
                    assert!(same(&a, &b) || (a.clone() - b).abs().approx() <= eps, "k={k} t={t:?}");
                }
            }
        }
    }

    #[test]
    fn co_location_exact() {
        for text in ["1/3", "0.228652", "0.15", "0.45", "1/10"] {
            co_location_holds(crate::scalar::rational(text).unwrap(), 8, 0.0);
        }
    }

    #[test]
    fn co_location_float() {
        for v_r in [0.1, 0.15, 0.228652, 1.0 / 3.0, 0.45, 0.7] {
            co_location_holds(v_r, 10, 1e-12);
        }
    }

    #[test]
    fn helpers_match_rays_construction() {
        let v_r = crate::scalar::rational("0.228652").unwrap();
        let p = EvacRaysParams::new(v_r.clone()).unwrap();
        let right = p.right_sender(BigRational::from_i64(1).unwrap()).unwrap();
        let left = p.left_sender(BigRational::from_i64(1).unwrap()).unwrap();
        let receiver = p.receiver(BigRational::from_i64(1).unwrap()).unwrap();
        for j in 0..12 {
            assert_eq!(
                right.turning_point(j).unwrap(),
                crate::trajectory::right_sender_tp(v_r.clone(), j).unwrap()
            );
            assert_eq!(
                left.turning_point(j).unwrap(),
                crate::trajectory::left_sender_tp(v_r.clone(), j).unwrap()
            );
            assert_eq!(
                receiver.turning_point(j).unwrap(),
                crate::trajectory::receiver_tp(v_r.clone(), j).unwrap()
            );
        }
    }
}
