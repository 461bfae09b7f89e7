//! Piecewise-linear agent trajectories and the `Rays` zig-zag family.
//!
//! A trajectory is stored as its exact space-time vertices. Between two
//! vertices the agent moves at constant velocity; after the last vertex it
//! either holds its position or keeps its last velocity.

use num_traits::pow;
use serde::ser::SerializeTuple;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

/// Slack allowed on segment speeds when checking the unit-speed bound.
pub const SPEED_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("trajectory has no vertices")]
    Empty,
    #[error("trajectory must start at time 0, got {0}")]
    NotAnchored(f64),
    #[error("vertex {index} does not advance time")]
    NonIncreasingTime { index: usize },
    #[error("non-finite vertex at index {index}")]
    NonFinite { index: usize },
    #[error("invalid Rays parameters: {0}")]
    Parameter(String),
    #[error("invalid argument: {0}")]
    Domain(String),
}

pub type Result<T, E = TrajectoryError> = std::result::Result<T, E>;

/// A space-time vertex of an agent path.
#[derive(Debug, Clone, PartialEq)]
pub struct TurningPoint<S = f64> {
    pub position: S,
    pub time: S,
}

impl<S: Scalar> TurningPoint<S> {
    pub fn new(position: S, time: S) -> Self {
        Self { position, time }
    }

    pub fn approx(&self) -> TurningPoint<f64> {
        TurningPoint::new(self.position.approx(), self.time.approx())
    }
}

// Serialized as `[position, time]`.
impl<S: Scalar> Serialize for TurningPoint<S> {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> std::result::Result<Z::Ok, Z::Error> {
        let mut tup = serializer.serialize_tuple(2)?;
        tup.serialize_element(&self.position.approx())?;
        tup.serialize_element(&self.time.approx())?;
        tup.end()
    }
}

impl<'de> Deserialize<'de> for TurningPoint<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let (position, time) = <(f64, f64)>::deserialize(deserializer)?;
        Ok(TurningPoint { position, time })
    }
}

/// What the agent does after its last explicit vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Terminal {
    HoldLastPosition,
    ExtendLastVelocity,
}

/// Travel direction on the line; the `eta` of a `Rays` trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Right,
    Left,
}

impl Direction {
    pub fn sign<S: Scalar>(self) -> S {
        match self {
            Direction::Right => S::one(),
            Direction::Left => -S::one(),
        }
    }

    pub fn from_sign(eta: i32) -> Option<Self> {
        match eta {
            1 => Some(Direction::Right),
            -1 => Some(Direction::Left),
            _ => None,
        }
    }
}

/// One linear piece of a trajectory. `end_time` is infinite for the tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_time: f64,
    pub start_position: f64,
    pub end_time: f64,
    pub end_position: f64,
    pub velocity: f64,
}

impl Segment {
    pub fn position(&self, t: f64) -> f64 {
        if t == self.start_time {
            self.start_position
        } else if t == self.end_time {
            self.end_position
        } else {
            self.start_position + self.velocity * (t - self.start_time)
        }
    }

    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S = f64> {
    vertices: Vec<TurningPoint<S>>,
    terminal: Terminal,
}

impl<S: Scalar> Trajectory<S> {
    /// Builds a trajectory. The first vertex must sit at time 0 and times must
    /// strictly increase; speed is not checked here (see `validate_unit_speed`).
    pub fn new(vertices: Vec<TurningPoint<S>>, terminal: Terminal) -> Result<Self> {
        let first = vertices.first().ok_or(TrajectoryError::Empty)?;
        if !first.time.is_zero() {
            return Err(TrajectoryError::NotAnchored(first.time.approx()));
        }
        for (index, v) in vertices.iter().enumerate() {
            if !v.position.approx().is_finite() || !v.time.approx().is_finite() {
                return Err(TrajectoryError::NonFinite { index });
            }
        }
        for (index, pair) in vertices.windows(2).enumerate() {
            if pair[1].time <= pair[0].time {
                return Err(TrajectoryError::NonIncreasingTime { index: index + 1 });
            }
        }
        Ok(Self { vertices, terminal })
    }

    /// Stays at the origin forever.
    pub fn stationary() -> Self {
        Self {
            vertices: vec![TurningPoint::new(S::zero(), S::zero())],
            terminal: Terminal::HoldLastPosition,
        }
    }

    /// `X(t) = velocity * t` for all `t >= 0`.
    pub fn constant_velocity(velocity: S) -> Self {
        Self {
            vertices: vec![
                TurningPoint::new(S::zero(), S::zero()),
                TurningPoint::new(velocity, S::one()),
            ],
            terminal: Terminal::ExtendLastVelocity,
        }
    }

    pub fn vertices(&self) -> &[TurningPoint<S>] {
        &self.vertices
    }

    pub fn terminal(&self) -> Terminal {
        self.terminal
    }

    pub fn last_vertex(&self) -> &TurningPoint<S> {
        self.vertices.last().expect("trajectory is never empty")
    }

    /// Velocity used after the last vertex.
    pub fn tail_velocity(&self) -> S {
        match self.terminal {
            Terminal::HoldLastPosition => S::zero(),
            Terminal::ExtendLastVelocity => match self.vertices.len() {
                0 | 1 => S::zero(),
                n => {
                    let a = &self.vertices[n - 2];
                    let b = &self.vertices[n - 1];
                    (b.position.clone() - a.position.clone()) / (b.time.clone() - a.time.clone())
                }
            },
        }
    }

    /// Position at time `t`, interpolating between bracketing vertices.
    pub fn position_at(&self, t: S) -> Result<S> {
        if t < S::zero() {
            return Err(TrajectoryError::NegativeTime(t.approx()));
        }
        let last = self.last_vertex();
        if t >= last.time {
            let dt = t - last.time.clone();
            return Ok(last.position.clone() + self.tail_velocity() * dt);
        }
        // first index whose time exceeds t; t < last.time so it exists and is >= 1
        let upper = self.vertices.partition_point(|v| v.time <= t);
        let a = &self.vertices[upper - 1];
        if a.time == t {
            return Ok(a.position.clone());
        }
        let b = &self.vertices[upper];
        let frac = (t - a.time.clone()) / (b.time.clone() - a.time.clone());
        Ok(a.position.clone() + (b.position.clone() - a.position.clone()) * frac)
    }

    pub fn approx(&self) -> Trajectory<f64> {
        Trajectory {
            vertices: self.vertices.iter().map(TurningPoint::approx).collect(),
            terminal: self.terminal,
        }
    }
}

impl Trajectory<f64> {
    /// Linear pieces between consecutive vertices followed by the unbounded tail.
    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        let inner = self.vertices.windows(2).map(|w| Segment {
            start_time: w[0].time,
            start_position: w[0].position,
            end_time: w[1].time,
            end_position: w[1].position,
            velocity: (w[1].position - w[0].position) / (w[1].time - w[0].time),
        });
        let last = self.last_vertex().clone();
        let tail = Segment {
            start_time: last.time,
            start_position: last.position,
            end_time: f64::INFINITY,
            end_position: if self.tail_velocity() == 0.0 {
                last.position
            } else {
                f64::INFINITY.copysign(self.tail_velocity())
            },
            velocity: self.tail_velocity(),
        };
        inner.chain(std::iter::once(tail))
    }

    /// Linear pieces restricted to `[0, until]`.
    pub fn segments_until(&self, until: f64) -> Vec<Segment> {
        let mut out = Vec::new();
        for seg in self.segments() {
            if seg.start_time > until {
                break;
            }
            if seg.end_time > until {
                let mut clipped = seg;
                clipped.end_position = seg.position(until);
                clipped.end_time = until;
                out.push(clipped);
                break;
            }
            out.push(seg);
        }
        out
    }

    /// True iff the path starts at the origin and no segment is faster than 1,
    /// up to rounding at the magnitude of its coordinates.
    pub fn validate_unit_speed(&self) -> bool {
        let first = &self.vertices[0];
        if first.position != 0.0 || first.time != 0.0 {
            return false;
        }
        let segments_ok = self.vertices.windows(2).all(|w| {
            let dp = (w[1].position - w[0].position).abs();
            let dt = w[1].time - w[0].time;
            let scale = w[1].time.abs().max(w[1].position.abs()).max(1.0);
            dp <= dt * (1.0 + SPEED_SLACK) + SPEED_SLACK * scale
        });
        segments_ok && self.tail_velocity().abs() <= 1.0 + SPEED_SLACK
    }

    /// Finite-horizon estimate of `limsup |X(t)|/t`: the largest ratio over the
    /// window `[tail_fraction * horizon, horizon]`.
    ///
    /// On a linear piece `|X(t)|/t` is monotone, so window endpoints and the
    /// vertices inside the window are the only candidates.
    pub fn mu_estimate(&self, horizon: f64, tail_fraction: f64) -> Result<f64> {
        if !(horizon > 0.0) {
            return Err(TrajectoryError::Domain(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
            return Err(TrajectoryError::Domain(format!(
                "tail fraction must lie in (0, 1), got {tail_fraction}"
            )));
        }
        let start = tail_fraction * horizon;
        let ratio = |t: f64, x: f64| x.abs() / t;
        let mut best = ratio(start, self.position_at(start)?).max(ratio(horizon, self.position_at(horizon)?));
        for v in &self.vertices {
            if v.time > start && v.time < horizon {
                best = best.max(ratio(v.time, v.position));
            }
        }
        Ok(best)
    }
}

impl<S: Scalar> Serialize for Trajectory<S> {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> std::result::Result<Z::Ok, Z::Error> {
        self.vertices.serialize(serializer)
    }
}

/// Parameters of the zig-zag trajectory bouncing between the space-time rays
/// `x = eta*v0*t` and `x = eta*v1*t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RaysParams<S = f64> {
    pub eta: Direction,
    pub v0: S,
    pub v1: S,
    pub gamma: S,
}

impl<S: Scalar> RaysParams<S> {
    /// Validates `0 < v0 <= 1`, `-1 <= v1 < v0` and `gamma > 0`.
    pub fn new(eta: Direction, v0: S, v1: S, gamma: S) -> Result<Self> {
        let one = S::one();
        if !(v0 > S::zero() && v0 <= one) {
            return Err(TrajectoryError::Parameter(format!("v0 must lie in (0, 1], got {v0:?}")));
        }
        if !(v1 >= -one.clone() && v1 < v0) {
            return Err(TrajectoryError::Parameter(format!(
                "v1 must satisfy -1 <= v1 < v0, got v1={v1:?}, v0={v0:?}"
            )));
        }
        if gamma <= S::zero() {
            return Err(TrajectoryError::Parameter(format!(
                "gamma must be positive, got {gamma:?}"
            )));
        }
        Ok(Self { eta, v0, v1, gamma })
    }

    /// The bounce recursion is singular for `v0 = 1`, `v1 = 0` or `v1 = -1`.
    fn check_bouncing(&self) -> Result<()> {
        if self.v0 == S::one() {
            return Err(TrajectoryError::Parameter(
                "v0 = 1 never returns to the outer ray".into(),
            ));
        }
        if self.v1.is_zero() {
            return Err(TrajectoryError::Parameter(
                "v1 = 0 gives undefined odd turning times".into(),
            ));
        }
        if self.v1 == -S::one() {
            return Err(TrajectoryError::Parameter("v1 = -1 never reaches the inner ray".into()));
        }
        Ok(())
    }

    /// Growth factor of the turning positions over one full zig-zag.
    pub fn round_factor(&self) -> S {
        let one = S::one();
        ((one.clone() - self.v1.clone()) * (one.clone() + self.v0.clone()))
            / ((one.clone() + self.v1.clone()) * (one - self.v0.clone()))
    }

    /// Closed-form turning point `j`.
    pub fn turning_point(&self, j: usize) -> Result<TurningPoint<S>> {
        self.check_bouncing()?;
        let one = S::one();
        let eta: S = self.eta.sign();
        let mut position = eta.clone() * self.gamma.clone() * pow(self.round_factor(), j / 2);
        let slope_inv = if j.is_multiple_of(2) {
            one.clone() / self.v0.clone()
        } else {
            position = position * (self.v1.clone() * (one.clone() + self.v0.clone()))
                / (self.v0.clone() * (one.clone() + self.v1.clone()));
            one / self.v1.clone()
        };
        let time = position.clone() / eta * slope_inv;
        Ok(TurningPoint::new(position, time))
    }

    /// Closed-form turning points `0..=j_max`.
    pub fn turning_points(&self, j_max: usize) -> Result<Vec<TurningPoint<S>>> {
        (0..=j_max).map(|j| self.turning_point(j)).collect()
    }

    /// Vertices of the path up to `horizon` from the closed-form turning
    /// points: origin, arrival at `eta*gamma`, then every turning point until
    /// the first one at or past the horizon.
    pub fn trajectory(&self, horizon: S) -> Result<Trajectory<S>> {
        self.check_bouncing()?;
        let eta: S = self.eta.sign();
        let mut vertices = vec![
            TurningPoint::new(S::zero(), S::zero()),
            TurningPoint::new(eta * self.gamma.clone(), self.gamma.clone()),
        ];
        for j in 0.. {
            let tp = self.turning_point(j)?;
            let done = tp.time >= horizon;
            vertices.push(tp);
            if done {
                break;
            }
        }
        Trajectory::new(vertices, Terminal::ExtendLastVelocity)
    }

    /// Follows the path step by step: walk out to `eta*gamma`, wait on the
    /// outer ray, then alternately intersect unit-speed moves with the inner
    /// and outer rays. The result is truncated at `horizon`.
    pub fn simulate(&self, horizon: S) -> Result<Trajectory<S>> {
        self.check_bouncing()?;
        if horizon <= S::zero() {
            return Err(TrajectoryError::Domain("horizon must be positive".into()));
        }
        let one = S::one();
        let eta: S = self.eta.sign();
        let mut vertices = vec![TurningPoint::new(S::zero(), S::zero())];
        let push = |vertices: &mut Vec<TurningPoint<S>>, next: TurningPoint<S>| -> bool {
            let last = vertices.last().expect("non-empty").clone();
            if next.time <= horizon {
                vertices.push(next);
                next_time_reached(vertices, &horizon)
            } else {
                let frac = (horizon.clone() - last.time.clone()) / (next.time - last.time.clone());
                let position = last.position.clone() + (next.position - last.position) * frac;
                vertices.push(TurningPoint::new(position, horizon.clone()));
                true
            }
        };

        let start = TurningPoint::new(eta.clone() * self.gamma.clone(), self.gamma.clone());
        if push(&mut vertices, start.clone()) {
            return Trajectory::new(vertices, Terminal::ExtendLastVelocity);
        }
        let waited = TurningPoint::new(start.position, self.gamma.clone() / self.v0.clone());
        if push(&mut vertices, waited) {
            return Trajectory::new(vertices, Terminal::ExtendLastVelocity);
        }
        let mut inward = true;
        loop {
            let here = vertices.last().expect("non-empty").clone();
            // distance walked before x/t hits the target ray
            let step = if inward {
                // x = p - eta*s must equal eta*v1*(t + s)
                (eta.clone() * here.position.clone() - self.v1.clone() * here.time.clone())
                    / (one.clone() + self.v1.clone())
            } else {
                // x = p + eta*s must equal eta*v0*(t + s)
                (self.v0.clone() * here.time.clone() - eta.clone() * here.position.clone())
                    / (one.clone() - self.v0.clone())
            };
            let heading = if inward { -eta.clone() } else { eta.clone() };
            let next = TurningPoint::new(here.position + heading * step.clone(), here.time + step);
            if push(&mut vertices, next) {
                break;
            }
            inward = !inward;
        }
        Trajectory::new(vertices, Terminal::ExtendLastVelocity)
    }
}

fn next_time_reached<S: Scalar>(vertices: &[TurningPoint<S>], horizon: &S) -> bool {
    vertices.last().is_some_and(|v| v.time >= *horizon)
}

/// Closed-form turning points `(D_j, T_j)` for `j = 0..=j_max`.
pub fn rays_closed_form<S: Scalar>(params: &RaysParams<S>, j_max: usize) -> Result<Vec<TurningPoint<S>>> {
    params.turning_points(j_max)
}

/// Step-by-step construction of `Rays`, truncated at `horizon`.
pub fn rays_simulate<S: Scalar>(params: &RaysParams<S>, horizon: S) -> Result<Trajectory<S>> {
    params.simulate(horizon)
}

fn check_receiver_speed<S: Scalar>(v_r: &S) -> Result<()> {
    if *v_r > S::zero() && *v_r < S::one() {
        Ok(())
    } else {
        Err(TrajectoryError::Parameter(format!(
            "v_r must lie in (0, 1), got {v_r:?}"
        )))
    }
}

/// `(1 + v_r) / (1 - v_r)`, the per-turn growth of the receiver's zig-zag.
pub fn receiver_growth<S: Scalar>(v_r: &S) -> S {
    (S::one() + v_r.clone()) / (S::one() - v_r.clone())
}

/// Receiver turning point `j`: `((-q)^j, q^j / v_r)` with `q = (1+v_r)/(1-v_r)`.
pub fn receiver_tp<S: Scalar>(v_r: S, j: usize) -> Result<TurningPoint<S>> {
    check_receiver_speed(&v_r)?;
    let power = pow(receiver_growth(&v_r), j);
    let position = if j.is_multiple_of(2) {
        power.clone()
    } else {
        -power.clone()
    };
    Ok(TurningPoint::new(position, power / v_r))
}

fn receiver_time<S: Scalar>(v_r: &S, j: usize) -> S {
    pow(receiver_growth(v_r), j) / v_r.clone()
}

/// Right-sender turning point `j`, expressed through the receiver's times.
pub fn right_sender_tp<S: Scalar>(v_r: S, j: usize) -> Result<TurningPoint<S>> {
    check_receiver_speed(&v_r)?;
    Ok(sender_tp_from_receiver_time(&v_r, j, receiver_time(&v_r, j), S::one()))
}

/// Left-sender turning point `j`; same shape as the right sender, shifted one
/// receiver turn later and mirrored.
pub fn left_sender_tp<S: Scalar>(v_r: S, j: usize) -> Result<TurningPoint<S>> {
    check_receiver_speed(&v_r)?;
    Ok(sender_tp_from_receiver_time(
        &v_r,
        j,
        receiver_time(&v_r, j + 1),
        -S::one(),
    ))
}

fn sender_tp_from_receiver_time<S: Scalar>(v_r: &S, j: usize, receiver_time: S, side: S) -> TurningPoint<S> {
    let one = S::one();
    let two = one.clone() + one.clone();
    let three = two.clone() + one.clone();
    let (dist_factor, time_factor) = if j.is_multiple_of(2) {
        (
            (three - v_r.clone()) / (one.clone() - v_r.clone()),
            (one.clone() + v_r.clone()) / (one - v_r.clone()),
        )
    } else {
        (
            (one.clone() - v_r.clone()) / (one.clone() + v_r.clone()),
            (one.clone() + three * v_r.clone()) / (one + v_r.clone()),
        )
    };
    let position = side * v_r.clone() * receiver_time.clone() * dist_factor;
    TurningPoint::new(position, receiver_time * time_factor)
}
