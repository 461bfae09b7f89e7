//! Event-driven evacuation: who finds the exit, how the news spreads, and
//! when the last agent gets there.
//!
//! Every geometric question (first passage, interception, two paths meeting)
//! is answered per linear piece in closed form, so the only rounding is that
//! of `f64` arithmetic itself.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::plans::{AgentId, EvacPlan, PlanError, PlanKind, ReactionPolicy};
use crate::trajectory::{left_sender_tp, right_sender_tp, Terminal, Trajectory, TrajectoryError, TurningPoint};

/// Co-location threshold, relative to `max(1, |t|)`.
pub const EPSILON: f64 = 1e-9;

const MAX_EVENTS: usize = 10_000;

pub const TARGET_DOMAIN_MESSAGE: &str = "target must satisfy |x| >= 1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("target must satisfy |x| >= 1")]
    TargetTooClose(f64),
    #[error("target {0} is not a finite number")]
    NonFiniteTarget(f64),
    #[error("position {0} is never reached")]
    NotReached(f64),
    #[error("no interception of the quarry path exists")]
    NoInterception,
    #[error("target {target} lies beyond the plan coverage {coverage}")]
    OutsideCoverage { target: f64, coverage: f64 },
    #[error("event at time {time} is past the plan horizon {horizon}")]
    HorizonExceeded { time: f64, horizon: f64 },
    #[error("simulation stalled at time {0} with uninformed agents left")]
    Stalled(f64),
    #[error("no closed form for this target: {0}")]
    NoClosedForm(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

fn tolerance(t: f64) -> f64 {
    EPSILON * t.abs().max(1.0)
}

/// Earliest time `t >= from` at which `traj` is at `x`.
fn passage_after(traj: &Trajectory, x: f64, from: f64) -> Option<f64> {
    for seg in traj.segments() {
        if seg.end_time < from {
            continue;
        }
        let a = seg.start_time.max(from);
        let pa = seg.position(a);
        if pa == x {
            return Some(a);
        }
        if seg.velocity == 0.0 {
            continue;
        }
        if seg.end_position == x {
            return Some(seg.end_time);
        }
        let t = a + (x - pa) / seg.velocity;
        if t >= a && t <= seg.end_time {
            return Some(t);
        }
    }
    None
}

/// Least `t` with `X(t) = x`.
pub fn first_passage(traj: &Trajectory, x: f64) -> Result<f64> {
    passage_after(traj, x, 0.0).ok_or(EngineError::NotReached(x))
}

/// Earliest meeting of a unit-speed pursuer leaving `start_pos` at
/// `start_time` with the quarry path, as `(time, position)`.
pub fn intercept(start_pos: f64, start_time: f64, quarry: &Trajectory) -> Result<(f64, f64)> {
    let here = quarry.position_at(start_time)?;
    if (here - start_pos).abs() <= tolerance(start_time) {
        return Ok((start_time, start_pos));
    }
    for seg in quarry.segments() {
        if seg.end_time < start_time {
            continue;
        }
        let a = seg.start_time.max(start_time);
        let gap = seg.position(a) - start_pos;
        // |gap + v (t - a)| = t - start_time, solved on each sign branch
        let mut best: Option<f64> = None;
        for sigma in [1.0, -1.0] {
            let denom = sigma * seg.velocity - 1.0;
            if denom == 0.0 {
                continue;
            }
            let dt = ((a - start_time) - sigma * gap) / denom;
            let slack = tolerance(a);
            if dt < -slack || a + dt > seg.end_time + slack {
                continue;
            }
            let t = (a + dt.max(0.0)).min(seg.end_time);
            if sigma * (gap + seg.velocity * (t - a)) >= -tolerance(t) {
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
        if let Some(t) = best {
            return Ok((t, seg.position(t)));
        }
    }
    Err(EngineError::NoInterception)
}

/// A reaction path in absolute time; the agent holds at the last vertex.
#[derive(Debug, Clone)]
struct Route {
    vertices: Vec<TurningPoint>,
}

impl Route {
    fn start(position: f64, time: f64) -> Self {
        Self {
            vertices: vec![TurningPoint::new(position, time)],
        }
    }

    fn last(&self) -> &TurningPoint {
        self.vertices.last().expect("route is never empty")
    }

    fn position_at(&self, t: f64) -> f64 {
        let upper = self.vertices.partition_point(|v| v.time <= t);
        if upper == 0 {
            return self.vertices[0].position;
        }
        let a = &self.vertices[upper - 1];
        if upper == self.vertices.len() || a.time == t {
            return a.position;
        }
        let b = &self.vertices[upper];
        a.position + (b.position - a.position) * (t - a.time) / (b.time - a.time)
    }

    fn truncate(&mut self, t: f64) {
        let position = self.position_at(t);
        self.vertices.retain(|v| v.time <= t);
        if self.last().time < t {
            self.vertices.push(TurningPoint::new(position, t));
        }
    }

    fn extend_to(&mut self, position: f64, time: f64) {
        if time > self.last().time {
            self.vertices.push(TurningPoint::new(position, time));
        }
    }
}

/// Earliest `t > from` at which the route and the baseline coincide.
fn earliest_meeting(route: &Route, baseline: &Trajectory, from: f64) -> Option<f64> {
    let mut breaks: Vec<f64> = route
        .vertices
        .iter()
        .chain(baseline.vertices())
        .map(|v| v.time)
        .filter(|&t| t > from)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let gap = |t: f64| route.position_at(t) - baseline.position_at(t).expect("non-negative time");

    let mut a = from;
    let mut da = gap(a);
    for b in breaks {
        let db = gap(b);
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            return Some(a + da / (da - db) * (b - a));
        }
        if db.abs() <= tolerance(b) {
            return Some(b);
        }
        a = b;
        da = db;
    }
    let slope = -baseline.tail_velocity();
    if slope != 0.0 && da * slope < 0.0 {
        return Some(a - da / slope);
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Discover,
    Broadcast,
    Wireless,
    FaceToFace,
    Arrive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub time: f64,
    pub agent: String,
    #[serde(rename = "event")]
    pub kind: EventKind,
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvacOutcome {
    pub target: f64,
    pub finder: String,
    pub discovery_time: f64,
    pub notify_time: BTreeMap<String, f64>,
    pub arrival_time: BTreeMap<String, f64>,
    pub evac_time: f64,
    pub ratio: f64,
    pub trace: Vec<TraceEvent>,
    /// Baseline up to notification followed by the reaction legs.
    pub paths: BTreeMap<String, Trajectory>,
}

impl EvacOutcome {
    /// Writes the trace as CSV with header `time,agent,event,position`.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for event in &self.trace {
            writer.serialize(event)?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct AgentState {
    notified: Option<f64>,
    route: Option<Route>,
    chasing: Option<AgentId>,
}

struct Run<'a> {
    plan: &'a EvacPlan,
    target: f64,
    states: Vec<AgentState>,
    trace: Vec<TraceEvent>,
}

impl Run<'_> {
    fn position(&self, id: AgentId, t: f64) -> f64 {
        match &self.states[id].route {
            Some(route) => route.position_at(t),
            None => self.plan.agents[id]
                .baseline
                .position_at(t)
                .expect("event times are non-negative"),
        }
    }

    fn inform(&mut self, id: AgentId, now: f64, kind: EventKind) {
        let position = match kind {
            EventKind::Discover => self.target,
            _ => self.position(id, now),
        };
        let state = &mut self.states[id];
        state.notified = Some(now);
        state.route = Some(Route::start(position, now));
        let label = self.plan.agents[id].label.clone();
        self.trace.push(TraceEvent {
            time: now,
            agent: label.clone(),
            kind,
            position,
        });
        if self.plan.agents[id].capability.transmits_wirelessly() {
            self.trace.push(TraceEvent {
                time: now,
                agent: label,
                kind: EventKind::Broadcast,
                position,
            });
        }
    }

    fn uninformed(&self) -> impl Iterator<Item = AgentId> + '_ {
        (0..self.states.len()).filter(|&i| self.states[i].notified.is_none())
    }

    fn informed(&self) -> impl Iterator<Item = AgentId> + '_ {
        (0..self.states.len()).filter(|&i| self.states[i].notified.is_some())
    }

    /// Spreads the news at instant `now` until nothing changes: exit sightings,
    /// then broadcasts, then face-to-face contact.
    fn settle(&mut self, now: f64) -> Vec<AgentId> {
        let tol = tolerance(now);
        let mut fresh = Vec::new();
        loop {
            let mut changed = false;
            let at_exit: Vec<AgentId> = self
                .uninformed()
                .filter(|&u| (self.position(u, now) - self.target).abs() <= tol)
                .collect();
            for u in at_exit {
                self.inform(u, now, EventKind::Discover);
                fresh.push(u);
                changed = true;
            }
            let broadcasting = self
                .informed()
                .any(|i| self.plan.agents[i].capability.transmits_wirelessly());
            if broadcasting {
                let hearers: Vec<AgentId> = self
                    .uninformed()
                    .filter(|&u| self.plan.agents[u].capability.receives_wirelessly())
                    .collect();
                for u in hearers {
                    self.inform(u, now, EventKind::Wireless);
                    fresh.push(u);
                    changed = true;
                }
            }
            let met: Vec<AgentId> = self
                .uninformed()
                .filter(|&u| {
                    let pu = self.position(u, now);
                    self.informed().any(|i| (self.position(i, now) - pu).abs() <= tol)
                })
                .collect();
            for u in met {
                self.inform(u, now, EventKind::FaceToFace);
                fresh.push(u);
                changed = true;
            }
            if !changed {
                return fresh;
            }
        }
    }

    /// Sends agent `id` on its next leg starting at `now`.
    fn plan_leg(&mut self, id: AgentId, now: f64) -> Result<()> {
        let route = self.states[id].route.as_mut().expect("informed agents have a route");
        route.truncate(now);
        let here = route.last().position;
        let mut next: Option<(f64, f64, AgentId)> = None;
        if let ReactionPolicy::PursueThenExit(quarries) = &self.plan.agents[id].reaction {
            for &q in quarries {
                if self.states[q].notified.is_some() {
                    continue;
                }
                let (t, p) = intercept(here, now, &self.plan.agents[q].baseline)?;
                let t = t.max(now + (p - here).abs());
                if next.is_none_or(|(best, ..)| t < best) {
                    next = Some((t, p, q));
                }
            }
        }
        let state = &mut self.states[id];
        let route = state.route.as_mut().expect("informed agents have a route");
        match next {
            Some((t, p, q)) => {
                route.extend_to(p, t);
                state.chasing = Some(q);
            }
            None => {
                route.extend_to(self.target, now + (self.target - here).abs());
                state.chasing = None;
            }
        }
        Ok(())
    }

    fn react(&mut self, now: f64, fresh: &[AgentId]) -> Result<()> {
        for &id in fresh {
            self.plan_leg(id, now)?;
        }
        let stale: Vec<AgentId> = self
            .informed()
            .filter(|&i| match self.states[i].chasing {
                Some(q) => {
                    self.states[q].notified.is_some()
                        || self.states[i].route.as_ref().is_some_and(|r| r.last().time <= now)
                }
                None => false,
            })
            .collect();
        for id in stale {
            self.plan_leg(id, now)?;
        }
        Ok(())
    }

    fn next_event(&self, now: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        let mut offer = |t: f64| {
            if t > now {
                best = Some(best.map_or(t, |b| b.min(t)));
            }
        };
        for u in self.uninformed() {
            let baseline = &self.plan.agents[u].baseline;
            if let Some(t) = passage_after(baseline, self.target, now) {
                offer(t);
            }
            for i in self.informed() {
                let route = self.states[i].route.as_ref().expect("informed agents have a route");
                if let Some(t) = earliest_meeting(route, baseline, now) {
                    offer(t);
                }
            }
        }
        for i in self.informed() {
            if self.states[i].chasing.is_some() {
                offer(self.states[i].route.as_ref().expect("route").last().time);
            }
        }
        best
    }

    fn check_horizon(&self, time: f64) -> Result<()> {
        match self.plan.horizon {
            Some(horizon) if time > horizon * (1.0 + 1e-12) => Err(EngineError::HorizonExceeded { time, horizon }),
            _ => Ok(()),
        }
    }

    fn finished(&self) -> bool {
        self.states.iter().all(|s| s.notified.is_some() && s.chasing.is_none())
    }
}

fn check_target(plan: &EvacPlan, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(EngineError::NonFiniteTarget(x));
    }
    if x.abs() < 1.0 {
        return Err(EngineError::TargetTooClose(x));
    }
    if let Some(coverage) = plan.coverage {
        if x.abs() > coverage * (1.0 + 1e-12) {
            return Err(EngineError::OutsideCoverage { target: x, coverage });
        }
    }
    Ok(())
}

/// Runs the plan against an exit at `x`.
pub fn simulate(plan: &EvacPlan, x: f64) -> Result<EvacOutcome> {
    check_target(plan, x)?;
    let mut discovery: Option<(f64, AgentId)> = None;
    for agent in &plan.agents {
        if let Some(t) = passage_after(&agent.baseline, x, 0.0) {
            if discovery.is_none_or(|(best, _)| t < best) {
                discovery = Some((t, agent.id));
            }
        }
    }
    let (discovery_time, finder) = discovery.ok_or(EngineError::NotReached(x))?;

    let mut run = Run {
        plan,
        target: x,
        states: vec![
            AgentState {
                notified: None,
                route: None,
                chasing: None,
            };
            plan.agents.len()
        ],
        trace: Vec::new(),
    };
    run.check_horizon(discovery_time)?;
    run.inform(finder, discovery_time, EventKind::Discover);
    let mut now = discovery_time;
    let mut fresh = vec![finder];
    fresh.extend(run.settle(now));
    run.react(now, &fresh)?;

    for _ in 0..MAX_EVENTS {
        if run.finished() {
            return Ok(outcome(run, finder, discovery_time));
        }
        now = run.next_event(now).ok_or(EngineError::Stalled(now))?;
        run.check_horizon(now)?;
        let fresh = run.settle(now);
        run.react(now, &fresh)?;
    }
    Err(EngineError::Stalled(now))
}

fn outcome(mut run: Run<'_>, finder: AgentId, discovery_time: f64) -> EvacOutcome {
    let plan = run.plan;
    let mut notify_time = BTreeMap::new();
    let mut arrival_time = BTreeMap::new();
    let mut paths = BTreeMap::new();
    let mut evac_time = f64::NEG_INFINITY;
    for (agent, state) in plan.agents.iter().zip(&run.states) {
        let notified = state.notified.expect("finished runs inform everyone");
        let route = state.route.as_ref().expect("informed agents have a route");
        let arrival = route.last().time;
        evac_time = evac_time.max(arrival);
        notify_time.insert(agent.label.clone(), notified);
        arrival_time.insert(agent.label.clone(), arrival);
        run.trace.push(TraceEvent {
            time: arrival,
            agent: agent.label.clone(),
            kind: EventKind::Arrive,
            position: route.last().position,
        });

        let mut vertices: Vec<TurningPoint> = agent
            .baseline
            .vertices()
            .iter()
            .filter(|v| v.time < notified)
            .cloned()
            .collect();
        vertices.extend(route.vertices.iter().cloned());
        let path = Trajectory::new(vertices, Terminal::HoldLastPosition).expect("realized path is time-ordered");
        paths.insert(agent.label.clone(), path);
    }
    run.trace.sort_by(|a, b| a.time.total_cmp(&b.time));
    EvacOutcome {
        target: run.target,
        finder: plan.agents[finder].label.clone(),
        discovery_time,
        notify_time,
        arrival_time,
        evac_time,
        ratio: evac_time / run.target.abs(),
        trace: run.trace,
        paths,
    }
}

/// Simulates many targets in parallel; results keep the input order.
pub fn simulate_batch(plan: &EvacPlan, targets: &[f64]) -> Vec<Result<EvacOutcome>> {
    targets.par_iter().map(|&x| simulate(plan, x)).collect()
}

/// Closed-form evacuation time of a named plan.
///
/// `params` are the plan parameters as produced by the plan builders; the
/// rays plan reads `v_r` and `scale`.
pub fn analytic_evac_time(kind: PlanKind, params: &BTreeMap<String, f64>, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(EngineError::NonFiniteTarget(x));
    }
    if x.abs() < 1.0 {
        return Err(EngineError::TargetTooClose(x));
    }
    match kind {
        PlanKind::OneOne => Ok((3.0 + 2.0 * std::f64::consts::SQRT_2) * x.abs()),
        PlanKind::OneMany => Ok(5.0 * x.abs()),
        PlanKind::EvacRays => {
            let v_r = *params
                .get("v_r")
                .ok_or_else(|| EngineError::NoClosedForm("missing parameter v_r".into()))?;
            let scale = params.get("scale").copied().unwrap_or(1.0);
            Ok(scale * rays_evac_time(v_r, x / scale)?)
        }
    }
}

/// Regime index `k` with `lo(k) < y <= lo(k + 1)`.
fn regime(y: f64, lo: impl Fn(usize) -> f64) -> Option<usize> {
    if y <= lo(0) {
        return None;
    }
    (0..2048).find(|&k| y <= lo(k + 1))
}

/// Where a sender-found target sits in the unscaled rays plan and the two
/// candidate evacuation times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RaysRegime {
    /// `+1` right of the origin, `-1` left.
    pub side: i32,
    pub k: usize,
    /// Time the receiver would catch the far sender if it were still on its
    /// outward run.
    pub t_star: f64,
    /// Time the far sender turns back towards the receiver.
    pub boundary: f64,
    pub case_one: f64,
    pub case_two: f64,
}

impl RaysRegime {
    pub fn is_case_one(&self) -> bool {
        self.t_star <= self.boundary
    }

    pub fn evac_time(&self) -> f64 {
        if self.is_case_one() {
            self.case_one
        } else {
            self.case_two
        }
    }
}

/// Classifies target `x` of the unscaled rays plan with receiver speed `v`.
pub fn rays_regime(v: f64, x: f64) -> Result<RaysRegime> {
    if !(v > 0.0 && v < 1.0) {
        return Err(EngineError::NoClosedForm(format!("v_r must lie in (0, 1), got {v}")));
    }
    let q = (1.0 + v) / (1.0 - v);
    let tr = |j: usize| q.powi(j as i32) / v;
    let c1 = (1.0 + 3.0 * v + v * (1.0 - v)) / (1.0 + v);
    let c2 = (1.0 - v * (2.0 + 3.0 * v)) / (1.0 + v);
    let y = x.abs();
    let initial = || EngineError::NoClosedForm(format!("target {x} is reached before the zig-zag settles"));
    let (side, k, t_star, boundary, receiver_time) = if x > 0.0 {
        let k = regime(y, |k| right_sender_tp(v, 2 * k).map_or(f64::NAN, |p| p.position)).ok_or_else(initial)?;
        (
            1,
            k,
            y + (1.0 + v) * tr(2 * k + 1),
            left_sender_tp(v, 2 * k + 1)?.time,
            tr(2 * k + 2),
        )
    } else {
        let k = regime(y, |k| left_sender_tp(v, 2 * k).map_or(f64::NAN, |p| -p.position)).ok_or_else(initial)?;
        (
            -1,
            k,
            y + (1.0 + v) * tr(2 * k + 2),
            right_sender_tp(v, 2 * k + 3)?.time,
            tr(2 * k + 3),
        )
    };
    Ok(RaysRegime {
        side,
        k,
        t_star,
        boundary,
        case_one: y + c1 * receiver_time,
        case_two: 3.0 * y + c2 * receiver_time,
    })
}

fn rays_evac_time(v: f64, x: f64) -> Result<f64> {
    Ok(rays_regime(v, x)?.evac_time())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plans::{build_evac_rays, plan_evac_rays, plan_one_many, plan_one_one, RaysPlanOptions};
    use crate::trajectory::{Direction, RaysParams};
    use std::f64::consts::SQRT_2;

    #[test]
    fn first_passage_examples() {
        let receiver = RaysParams::new(Direction::Right, 1.0 / 3.0, -1.0 / 3.0, 1.0)
            .unwrap()
            .trajectory(100.0)
            .unwrap();
        assert!((first_passage(&receiver, -2.0).unwrap() - 6.0).abs() < 1e-12);
        let drift = Trajectory::constant_velocity(SQRT_2 - 1.0);
        assert!((first_passage(&drift, 2.0).unwrap() - 4.828_427_124_746_19).abs() < 1e-12);
        assert!(first_passage(&Trajectory::constant_velocity(-1.0), 1.0).is_err());
    }

    #[test]
    fn intercept_examples() {
        let left = RaysParams::new(Direction::Left, 2.0 / 3.0, 1.0 / 9.0, 8.0)
            .unwrap()
            .trajectory(1000.0)
            .unwrap();
        let (t, p) = intercept(4.0, 12.0, &left).unwrap();
        assert!((t - 18.0).abs() < 1e-12 && (p + 2.0).abs() < 1e-12);

        let x = 3.0;
        let drift = Trajectory::constant_velocity(SQRT_2 - 1.0);
        let (t, _) = intercept(-x, x, &drift).unwrap();
        assert!((t - (x + (1.0 + SQRT_2) * x)).abs() < 1e-12);

        assert_eq!(
            intercept(2.0, 4.0, &Trajectory::constant_velocity(0.5)).unwrap(),
            (4.0, 2.0)
        );
        assert!(intercept(0.0, 1.0, &Trajectory::constant_velocity(1.0)).is_err());
    }

    #[test]
    fn worked_examples() {
        let one_one = simulate(&plan_one_one(), 2.0).unwrap();
        assert!((one_one.evac_time - 11.656_854_2).abs() < 1e-6);
        let one_many = simulate(&plan_one_many(2).unwrap(), -3.0).unwrap();
        assert!((one_many.evac_time - 15.0).abs() < 1e-12);
        let rays = simulate(&plan_evac_rays(1.0 / 3.0, 2, None).unwrap(), 4.000001).unwrap();
        assert!((rays.evac_time - 24.000001).abs() < 1e-9);
        assert_eq!(rays.finder, "right-sender");
        let intercepted = rays
            .trace
            .iter()
            .find(|e| e.agent == "left-sender" && e.kind == EventKind::FaceToFace)
            .unwrap();
        assert!((intercepted.time - 18.0).abs() < 1e-9 && (intercepted.position + 2.0).abs() < 1e-9);
    }

    #[test]
    fn analytic_examples() {
        let one_one = analytic_evac_time(PlanKind::OneOne, &BTreeMap::new(), -3.0).unwrap();
        assert!((one_one - 17.485_281_4).abs() < 1e-6);
        assert_eq!(
            analytic_evac_time(PlanKind::OneMany, &BTreeMap::new(), 7.0).unwrap(),
            35.0
        );
        let plan = plan_evac_rays(1.0 / 3.0, 2, None).unwrap();
        let rays = analytic_evac_time(PlanKind::EvacRays, &plan.params, 4.000001).unwrap();
        assert!((rays - 24.000001).abs() < 1e-12);
        assert!(analytic_evac_time(PlanKind::EvacRays, &plan.params, 2.0).is_err());
        assert!(analytic_evac_time(PlanKind::OneOne, &plan.params, 0.5).is_err());
    }

    #[test]
    fn rejects_close_targets() {
        let err = simulate(&plan_one_one(), 0.5).unwrap_err();
        assert_eq!(err.to_string(), TARGET_DOMAIN_MESSAGE);
        assert!(simulate(&plan_one_one(), f64::NAN).is_err());
    }

    #[test]
    fn idle_agents_are_picked_up() {
        let plan = build_evac_rays(
            0.25,
            &RaysPlanOptions {
                n_s: 4,
                ..RaysPlanOptions::normalized(0.25).unwrap()
            },
        )
        .unwrap();
        for x in [1.0, 3.7, -1.0, -12.5] {
            let out = simulate(&plan, x).unwrap();
            let plain = simulate(
                &build_evac_rays(0.25, &RaysPlanOptions::normalized(0.25).unwrap()).unwrap(),
                x,
            )
            .unwrap();
            assert!((out.evac_time - plain.evac_time).abs() < 1e-9 * plain.evac_time);
        }
        let many = simulate(&plan_one_many(5).unwrap(), 4.0).unwrap();
        assert!((many.evac_time - 20.0).abs() < 1e-12);
    }

    #[test]
    fn horizon_is_enforced() {
        let plan = plan_evac_rays(1.0 / 3.0, 2, Some(40.0)).unwrap();
        assert!(matches!(
            simulate(&plan, 60.0),
            Err(EngineError::OutsideCoverage { .. }) | Err(EngineError::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn trace_csv_has_header() {
        let out = simulate(&plan_one_many(2).unwrap(), 2.0).unwrap();
        let mut buf = Vec::new();
        out.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,agent,event,position\n"));
        assert!(text.contains(",receiver-right,discover,"));
    }
}
