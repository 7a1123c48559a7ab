//! Per-period utility features, weighted period utility, and cumulative
//! utility over a planning horizon.
//!
//! Eight features: a forward-progress reward that peaks at the speed limit,
//! two action-roughness penalties, a soft acceleration-band penalty, lane
//! departure, off-road, barrier crash, and pairwise collision. The crash and
//! collision terms are sigmoid halos ("risk premiums") that are felt before
//! any physical contact, which is what keeps the whole game deterministic.

use crate::dynamics::{rollout, ActionPair, Trajectory, VehicleGeometry, VehicleState};
use crate::error::{ModelError, Result};
use crate::scalar::{sigmoid, softplus, Real};

/// Utility feature indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    /// phi1: forward progress, peaks at the speed limit.
    Forward,
    /// phi2: squared change of consecutive accelerations.
    AccelSmoothness,
    /// phi3: squared change of consecutive steering angles.
    SteerSmoothness,
    /// phi4: softplus band penalty on hard acceleration/braking.
    HardAccel,
    /// phi5: quartic lane-departure penalty, zero at lane centers.
    LaneDeparture,
    /// phi6: sigmoid off-road penalty beyond the shoulder.
    OffRoad,
    /// phi7: barrier crash halo.
    Crash,
    /// phi8: pairwise collision halo.
    Collision,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::Forward,
        Feature::AccelSmoothness,
        Feature::SteerSmoothness,
        Feature::HardAccel,
        Feature::LaneDeparture,
        Feature::OffRoad,
        Feature::Crash,
        Feature::Collision,
    ];

    pub fn index(self) -> usize {
        match self {
            Feature::Forward => 0,
            Feature::AccelSmoothness => 1,
            Feature::SteerSmoothness => 2,
            Feature::HardAccel => 3,
            Feature::LaneDeparture => 4,
            Feature::OffRoad => 5,
            Feature::Crash => 6,
            Feature::Collision => 7,
        }
    }
}

/// All feature parameters for one agent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilityParams<T> {
    /// Highway speed limit, the peak of the forward reward (m/s).
    pub speed_limit: T,
    /// Soft acceleration limit (m/s^2).
    pub accel_max: T,
    /// Soft braking limit (m/s^2, negative).
    pub accel_min: T,
    /// Hardness of the acceleration band.
    pub kappa4: T,
    /// Lane width (m); lanes are centered at multiples of +-W/2.
    pub lane_width: T,
    /// Off-road onset rate (1/m).
    pub kappa6: T,
    /// Crash halo longitudinal reach (m).
    pub crash_lx: T,
    /// Crash halo lateral extent (m).
    pub crash_ly: T,
    /// Crash halo longitudinal rate (1/m).
    pub kappa7x: T,
    /// Crash halo lateral rate (1/m).
    pub kappa7y: T,
    /// Collision halo longitudinal half-length (m).
    pub coll_lx: T,
    /// Collision halo lateral half-width (m).
    pub coll_ly: T,
    /// Collision halo longitudinal rate (1/m).
    pub kappa8x: T,
    /// Collision halo lateral rate (1/m).
    pub kappa8y: T,
    /// Longitudinal position of the barrier (m).
    pub barrier_x: T,
}

impl<T: Real> UtilityParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("speed_limit", self.speed_limit),
            ("accel_max", self.accel_max),
            ("kappa4", self.kappa4),
            ("lane_width", self.lane_width),
            ("kappa6", self.kappa6),
            ("crash_lx", self.crash_lx),
            ("crash_ly", self.crash_ly),
            ("kappa7x", self.kappa7x),
            ("kappa7y", self.kappa7y),
            ("coll_lx", self.coll_lx),
            ("coll_ly", self.coll_ly),
            ("kappa8x", self.kappa8x),
            ("kappa8y", self.kappa8y),
        ];
        for (field, v) in positives {
            if !v.is_finite() || v <= T::zero() {
                return Err(ModelError::OutOfRange { field, value: v.as_f64(), constraint: "> 0" });
            }
        }
        if !self.accel_min.is_finite() || self.accel_min >= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "accel_min",
                value: self.accel_min.as_f64(),
                constraint: "< 0",
            });
        }
        if !self.barrier_x.is_finite() {
            return Err(ModelError::NonFinite { field: "barrier_x" });
        }
        Ok(())
    }
}

impl<T: Real> Default for UtilityParams<T> {
    /// Double-lane highway parameter set (31 m/s limit, 3.7 m lanes,
    /// barrier at x = 0).
    fn default() -> Self {
        Self {
            speed_limit: T::of(31.0),
            accel_max: T::of(4.0),
            accel_min: T::of(-5.0),
            kappa4: T::of(15.0),
            lane_width: T::of(3.7),
            kappa6: T::of(3.0),
            crash_lx: T::of(5.0),
            crash_ly: T::of(1.0),
            kappa7x: T::of(2.0),
            kappa7y: T::of(20.0),
            coll_lx: T::of(10.0),
            coll_ly: T::of(2.0),
            kappa8x: T::of(0.5),
            kappa8y: T::of(9.0),
            barrier_x: T::zero(),
        }
    }
}

/// Signed feature weights: `w1 > 0` (reward), `w2..w8 <= 0` (penalties).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilityWeights<T> {
    w: [T; 8],
}

impl<T: Real> UtilityWeights<T> {
    pub fn new(w: [T; 8]) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { field: "weight" });
        }
        if w[0] <= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "w1",
                value: w[0].as_f64(),
                constraint: "> 0",
            });
        }
        for (i, &v) in w.iter().enumerate().skip(1) {
            if v > T::zero() {
                return Err(ModelError::OutOfRange {
                    field: match i {
                        1 => "w2",
                        2 => "w3",
                        3 => "w4",
                        4 => "w5",
                        5 => "w6",
                        6 => "w7",
                        _ => "w8",
                    },
                    value: v.as_f64(),
                    constraint: "<= 0",
                });
            }
        }
        Ok(Self { w })
    }

    pub fn get(&self, feature: Feature) -> T {
        self.w[feature.index()]
    }

    pub fn as_array(&self) -> [T; 8] {
        self.w
    }
}

impl<T: Real> Default for UtilityWeights<T> {
    fn default() -> Self {
        Self {
            w: [
                T::of(1.0),
                T::of(-0.01),
                T::of(-1.5),
                T::of(-1.0),
                T::of(-0.3),
                T::of(-24.0),
                T::of(-20.0),
                T::of(-14.0),
            ],
        }
    }
}

/// Per-agent utility bundle: parameters, weights, and vehicle geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentUtilitySpec<T> {
    pub params: UtilityParams<T>,
    pub weights: UtilityWeights<T>,
    pub geometry: VehicleGeometry<T>,
}

impl<T: Real> AgentUtilitySpec<T> {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()
    }
}

impl<T: Real> Default for AgentUtilitySpec<T> {
    fn default() -> Self {
        Self {
            params: UtilityParams::default(),
            weights: UtilityWeights::default(),
            geometry: VehicleGeometry::default(),
        }
    }
}

/// Inputs to one period-utility evaluation.
#[derive(Clone, Copy, Debug)]
pub struct PeriodContext<'a, T> {
    pub own_state: VehicleState<T>,
    pub own_action: ActionPair<T>,
    /// Previous own action; `(0, 0)` at the first period.
    pub prev_action: ActionPair<T>,
    /// States of the nearby agents at the same period, in ascending id order.
    pub others: &'a [VehicleState<T>],
}

/// phi1: `1 - ((v - v0)/v0)^2`, maximal (= 1) at the speed limit.
pub fn phi1_forward<T: Real>(spec: &AgentUtilitySpec<T>, speed: T) -> T {
    let r = (speed - spec.params.speed_limit) / spec.params.speed_limit;
    T::one() - r * r
}

/// phi2: squared change of consecutive accelerations.
pub fn phi2_accel_smooth<T: Real>(accel: T, prev_accel: T) -> T {
    let d = accel - prev_accel;
    d * d
}

/// phi3: squared change of consecutive steering angles.
pub fn phi3_steer_smooth<T: Real>(steer: T, prev_steer: T) -> T {
    let d = steer - prev_steer;
    d * d
}

/// phi4: `softplus(k(a - a_max)) + softplus(-k(a - a_min))`, a smooth band
/// penalty that is ~0 inside the feasible range and linear outside it.
pub fn phi4_hard_accel<T: Real>(spec: &AgentUtilitySpec<T>, accel: T) -> T {
    let p = &spec.params;
    softplus(p.kappa4 * (accel - p.accel_max)) + softplus(-p.kappa4 * (accel - p.accel_min))
}

/// phi5: `min[(y^2 - (W/2)^2)^2 / (3W^4/4), 1]`, zero at the lane centers.
pub fn phi5_lane_departure<T: Real>(spec: &AgentUtilitySpec<T>, y: T) -> T {
    let w = spec.params.lane_width;
    let half_sq = (w / T::of(2.0)) * (w / T::of(2.0));
    let num = (y * y - half_sq) * (y * y - half_sq);
    let denom = T::of(0.75) * w * w * w * w;
    (num / denom).min(T::one())
}

/// phi6: `S(k6 (|y| - (W + w/2)))`, the off-road sigmoid. The vehicle width
/// comes from the agent geometry.
pub fn phi6_out_of_road<T: Real>(spec: &AgentUtilitySpec<T>, y: T) -> T {
    let edge = spec.params.lane_width + spec.geometry.body_width() / T::of(2.0);
    sigmoid(spec.params.kappa6 * (y.abs() - edge))
}

/// phi7: `S(k7x (x - barrier_x + lx)) * S(-k7y (y - ly))`, the crash halo of
/// a barrier blocking the lower lane.
pub fn phi7_crash<T: Real>(spec: &AgentUtilitySpec<T>, x: T, y: T) -> T {
    let p = &spec.params;
    sigmoid(p.kappa7x * (x - p.barrier_x + p.crash_lx)) * sigmoid(-p.kappa7y * (y - p.crash_ly))
}

/// phi8: pairwise collision halo on center-of-gravity offsets.
///
/// The printed form is `[St(kx(dx+lx)) + St(kx(lx-dx))] * [same in y]` with
/// `St(x) = S(x) - 1/2`. Because the two arguments of each bracket sum to the
/// constant `2*k*l`, the bracket is algebraically equal to
/// `(1 - exp(-2kl)) * S(k(d+l)) * S(k(l-d))`, which is what we evaluate: it
/// cannot cancel to zero in floating point, so the halo stays strictly
/// positive and strictly monotone far into the tails.
pub fn phi8_collision<T: Real>(spec: &AgentUtilitySpec<T>, dx: T, dy: T) -> T {
    let p = &spec.params;
    let two = T::of(2.0);
    // The sigmoid pair is multiplied first so that (dx,dy) -> (-dx,-dy)
    // is an exact symmetry of the evaluation.
    let bx = (sigmoid(p.kappa8x * (dx + p.coll_lx)) * sigmoid(p.kappa8x * (p.coll_lx - dx)))
        * (T::one() - (-two * p.kappa8x * p.coll_lx).exp());
    let by = (sigmoid(p.kappa8y * (dy + p.coll_ly)) * sigmoid(p.kappa8y * (p.coll_ly - dy)))
        * (T::one() - (-two * p.kappa8y * p.coll_ly).exp());
    bx * by
}

/// Weighted per-period utility: `sum_k w_k phi_k`, with the collision term
/// summed pairwise over every other agent in the context.
pub fn period_utility<T: Real>(spec: &AgentUtilitySpec<T>, ctx: &PeriodContext<'_, T>) -> T {
    let w = &spec.weights;
    let s = ctx.own_state;
    let mut u = w.get(Feature::Forward) * phi1_forward(spec, s.speed());
    u += w.get(Feature::AccelSmoothness)
        * phi2_accel_smooth(ctx.own_action.accel(), ctx.prev_action.accel());
    u += w.get(Feature::SteerSmoothness)
        * phi3_steer_smooth(ctx.own_action.steer(), ctx.prev_action.steer());
    u += w.get(Feature::HardAccel) * phi4_hard_accel(spec, ctx.own_action.accel());
    u += w.get(Feature::LaneDeparture) * phi5_lane_departure(spec, s.y());
    u += w.get(Feature::OffRoad) * phi6_out_of_road(spec, s.y());
    u += w.get(Feature::Crash) * phi7_crash(spec, s.x(), s.y());
    let w8 = w.get(Feature::Collision);
    for other in ctx.others {
        u += w8 * phi8_collision(spec, s.x() - other.x(), s.y() - other.y());
    }
    u
}

/// Cumulative utility over the horizon with zero previous action at t = 0.
///
/// Own states are produced by rolling `own_actions` out of `initial`; other
/// agents' states are read from their (fixed) trajectories. No discounting.
pub fn cumulative_utility<T: Real>(
    spec: &AgentUtilitySpec<T>,
    initial: &VehicleState<T>,
    own_actions: &[ActionPair<T>],
    others: &[Trajectory<T>],
    dt: T,
) -> Result<T> {
    cumulative_utility_with_prev(spec, initial, own_actions, others, dt, ActionPair::zero())
}

/// Cumulative utility with an explicit previous action for the first period
/// (used when evaluating tail sub-games).
pub fn cumulative_utility_with_prev<T: Real>(
    spec: &AgentUtilitySpec<T>,
    initial: &VehicleState<T>,
    own_actions: &[ActionPair<T>],
    others: &[Trajectory<T>],
    dt: T,
    initial_prev: ActionPair<T>,
) -> Result<T> {
    let horizon = own_actions.len();
    for other in others {
        if other.len() != horizon {
            return Err(ModelError::LengthMismatch { expected: horizon, got: other.len() });
        }
    }
    let own = rollout(&spec.geometry, initial, own_actions, dt)?;
    let mut at_t: Vec<VehicleState<T>> = Vec::with_capacity(others.len());
    let mut total = T::zero();
    for t in 0..horizon {
        at_t.clear();
        at_t.extend(others.iter().map(|o| o.states()[t]));
        let ctx = PeriodContext {
            own_state: own.states()[t],
            own_action: own_actions[t],
            prev_action: if t == 0 { initial_prev } else { own_actions[t - 1] },
            others: &at_t,
        };
        total += period_utility(spec, &ctx);
    }
    Ok(total)
}
