//! Finite look-ahead anticipation: heading targets for lane keeping and lane
//! changing, hypothesized path scenarios for nearby agents, and the
//! worst-case effective utility aggregated over the look-ahead horizon.
//!
//! An anticipated lane change steers by feedback toward the heading target
//!
//! ```text
//! psi* = atan(kappa * d / sqrt(1 + v))
//! ```
//!
//! where `d` is the lateral offset to the target lane center. The feedback is
//! normalized by the per-step yaw gain `dt*v/L`, so one anticipated step
//! closes (almost exactly) the heading error; the raw unit-gain difference
//! `psi* - psi` overshoots at highway speed and `dt = 0.2 s`, where
//! `dt*v/L > 2`, and oscillates instead of converging.

use crate::dynamics::{step, ActionPair, VehicleGeometry, VehicleState};
use crate::error::{ModelError, Result};
use crate::scalar::Real;
use crate::utility::{
    phi1_forward, phi2_accel_smooth, phi3_steer_smooth, phi4_hard_accel, phi5_lane_departure,
    phi6_out_of_road, phi7_crash, phi8_collision, AgentUtilitySpec, Feature,
};
use crate::world::{AgentId, Barrier, Lanes};

/// Tuning of the look-ahead machinery.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnticipationConfig<T> {
    /// Look-ahead horizon in steps (h >= 1).
    pub horizon: usize,
    /// Gain of the heading-target formula.
    pub stanley_gain: T,
    /// Fraction of the horizon over which a candidate action persists.
    pub persistence_fraction: T,
    /// Lateral departure from a lane center that counts as crossing (m).
    pub crossing_threshold: T,
}

impl<T: Real> AnticipationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(ModelError::OutOfRange {
                field: "horizon",
                value: 0.0,
                constraint: ">= 1",
            });
        }
        if !self.stanley_gain.is_finite() || self.stanley_gain <= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "stanley_gain",
                value: self.stanley_gain.as_f64(),
                constraint: "> 0",
            });
        }
        if !(self.persistence_fraction > T::zero() && self.persistence_fraction < T::one()) {
            return Err(ModelError::OutOfRange {
                field: "persistence_fraction",
                value: self.persistence_fraction.as_f64(),
                constraint: "in (0, 1)",
            });
        }
        if !self.crossing_threshold.is_finite() || self.crossing_threshold <= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "crossing_threshold",
                value: self.crossing_threshold.as_f64(),
                constraint: "> 0",
            });
        }
        Ok(())
    }

    /// Number of leading steps that hold the candidate verbatim:
    /// `ceil(horizon * persistence_fraction)`, at least 1.
    pub fn persistence_steps(&self) -> usize {
        let raw = (T::of_usize(self.horizon) * self.persistence_fraction).ceil();
        raw.to_usize().unwrap_or(1).clamp(1, self.horizon)
    }
}

impl<T: Real> Default for AnticipationConfig<T> {
    /// One persistence step by default (fraction 1/15 at the default
    /// horizon): a steering candidate acts as an impulse whose maneuver the
    /// heading feedback completes. Longer windows make held steering build
    /// enough lateral momentum that every small correction near a lane
    /// center anticipates a dive through the (downstream-saturated) crash
    /// halo, which freezes the closed loop off-center.
    fn default() -> Self {
        Self {
            horizon: 15,
            stanley_gain: T::of(0.15),
            persistence_fraction: T::of(1.0 / 15.0),
            crossing_threshold: T::of(0.5),
        }
    }
}

/// Hypothesized maneuver of an agent over the look-ahead horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LaneIntent<T> {
    KeepLane,
    ChangeToLane { target_y: T },
}

/// One hypothesized h-step future for one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct PathScenario<T> {
    pub agent: AgentId,
    pub intent: LaneIntent<T>,
    /// Exactly `horizon` anticipated states (the start state excluded).
    pub states: Vec<VehicleState<T>>,
}

/// Per-feature horizon aggregation rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregationRule {
    MeanOverHorizon,
    FirstPeriod,
    MaxOverHorizon,
}

/// Aggregation rule per utility feature.
///
/// Defaults: forward progress and lane departure average over the horizon;
/// the roughness and acceleration-band terms depend only on the current
/// decision and take the first period; off-road, crash and collision are
/// near-calamitous and take the worst period.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Aggregators {
    rules: [AggregationRule; 8],
}

impl Aggregators {
    pub fn new(rules: [AggregationRule; 8]) -> Self {
        Self { rules }
    }

    pub fn rule(&self, feature: Feature) -> AggregationRule {
        self.rules[feature.index()]
    }

    pub fn with_rule(mut self, feature: Feature, rule: AggregationRule) -> Self {
        self.rules[feature.index()] = rule;
        self
    }
}

impl Default for Aggregators {
    fn default() -> Self {
        use AggregationRule::*;
        Self {
            rules: [
                MeanOverHorizon, // forward
                FirstPeriod,     // accel smoothness
                FirstPeriod,     // steer smoothness
                FirstPeriod,     // hard accel
                MeanOverHorizon, // lane departure
                MaxOverHorizon,  // off road
                MaxOverHorizon,  // crash
                MaxOverHorizon,  // collision
            ],
        }
    }
}

/// Heading target `atan(kappa d / sqrt(1 + v))`; `d` is measured toward the
/// target lane center, and the sign of the result follows `d`.
pub fn stanley_heading<T: Real>(cfg: &AnticipationConfig<T>, lateral_offset: T, speed: T) -> T {
    (cfg.stanley_gain * lateral_offset / (T::one() + speed).sqrt()).atan()
}

/// Anticipated steering is capped at this magnitude (radians). The cap makes
/// hypothesized recoveries take realistic time: an aggressive candidate whose
/// heading overshoots cannot be rescued instantly by the feedback, so its
/// overshoot shows up in the aggregated features.
pub const FEEDBACK_STEER_CAP: f64 = 0.008726646259971648; // 0.5 degrees

/// Steering angle that closes the heading error in one step,
/// `atan((psi* - psi) * L / (dt v))`, clipped to [`FEEDBACK_STEER_CAP`].
/// Returns zero at negligible speed.
pub fn heading_feedback_steer<T: Real>(
    geom: &VehicleGeometry<T>,
    heading: T,
    target_heading: T,
    speed: T,
    dt: T,
) -> T {
    if speed < T::of(1e-9) {
        return T::zero();
    }
    let raw = ((target_heading - heading) * geom.wheelbase() / (dt * speed)).atan();
    let cap = T::of(FEEDBACK_STEER_CAP);
    raw.max(-cap).min(cap)
}

/// Look-ahead context: configuration plus the road geometry it runs on.
#[derive(Clone, Debug)]
pub struct AnticipationContext<T> {
    pub cfg: AnticipationConfig<T>,
    pub lanes: Lanes<T>,
    pub dt: T,
}

impl<T: Real> AnticipationContext<T> {
    pub fn new(cfg: AnticipationConfig<T>, lanes: Lanes<T>, dt: T) -> Result<Self> {
        cfg.validate()?;
        if !dt.is_finite() || dt <= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "dt",
                value: dt.as_f64(),
                constraint: "> 0",
            });
        }
        Ok(Self { cfg, lanes, dt })
    }

    fn steer_toward(&self, geom: &VehicleGeometry<T>, s: &VehicleState<T>, target_y: T) -> T {
        let psi_star = stanley_heading(&self.cfg, target_y - s.y(), s.speed());
        heading_feedback_steer(geom, s.heading(), psi_star, s.speed(), self.dt)
    }

    /// Hypothesize another agent's future: keep-lane extrapolates with zero
    /// action; change-to-lane steers toward the target center every step
    /// with zero acceleration.
    pub fn anticipate_other(
        &self,
        geom: &VehicleGeometry<T>,
        agent: AgentId,
        s: &VehicleState<T>,
        intent: LaneIntent<T>,
    ) -> PathScenario<T> {
        let mut states = Vec::with_capacity(self.cfg.horizon);
        let mut cur = *s;
        for _ in 0..self.cfg.horizon {
            let action = match intent {
                LaneIntent::KeepLane => ActionPair::zero(),
                LaneIntent::ChangeToLane { target_y } => {
                    let steer = self.steer_toward(geom, &cur, target_y);
                    ActionPair::new(T::zero(), steer).expect("feedback steering is bounded")
                }
            };
            cur = step(geom, &cur, &action, self.dt).expect("anticipation step cannot fail");
            states.push(cur);
        }
        PathScenario { agent, intent, states }
    }

    /// Maneuver target implied by a candidate action: the next lane center in
    /// the steering direction (the nearest center when steering is zero or
    /// points off the road).
    fn candidate_target(&self, y: T, steer: T) -> T {
        let next = if steer > T::zero() {
            self.lanes.next_center_toward(y, T::one())
        } else if steer < T::zero() {
            self.lanes.next_center_toward(y, -T::one())
        } else {
            None
        };
        next.unwrap_or_else(|| self.lanes.nearest_center(y))
    }

    /// Hypothesize the deciding agent's own future under a candidate action.
    ///
    /// The candidate holds verbatim for the persistence window; afterwards
    /// steering follows the heading feedback toward the candidate's implied
    /// maneuver target while the acceleration persists. A steering candidate
    /// targets the next lane center in its steering direction (a lane
    /// change, or a return to the lane when the vehicle sits beyond it); a
    /// zero-steer candidate targets the nearest center, i.e. it is read as
    /// lane keeping. With the default one-step window a candidate is an
    /// impulse whose maneuver the feedback completes, which keeps the
    /// promised continuation close to what the re-deciding closed loop
    /// actually does.
    pub fn anticipate_self(
        &self,
        geom: &VehicleGeometry<T>,
        agent: AgentId,
        s: &VehicleState<T>,
        candidate: &ActionPair<T>,
    ) -> PathScenario<T> {
        let target_y = self.candidate_target(s.y(), candidate.steer());
        let persist = self.cfg.persistence_steps();
        let mut states = Vec::with_capacity(self.cfg.horizon);
        let mut cur = *s;
        for k in 1..=self.cfg.horizon {
            let action = if k <= persist {
                *candidate
            } else {
                let steer = self.steer_toward(geom, &cur, target_y);
                ActionPair::new(candidate.accel(), steer).expect("feedback steering is bounded")
            };
            cur = step(geom, &cur, &action, self.dt).expect("anticipation step cannot fail");
            states.push(cur);
        }
        let intent = if (target_y - self.lanes.nearest_center(s.y())).abs() > T::of(1e-9) {
            LaneIntent::ChangeToLane { target_y }
        } else {
            LaneIntent::KeepLane
        };
        PathScenario { agent, intent, states }
    }

    /// Path scenarios another agent may plausibly pursue. Keep-lane is always
    /// hypothesized. A lane change is added when the agent's own lane is
    /// blocked with the barrier inside the crash halo's reach, or when the
    /// agent has visibly begun crossing (departed its nearest center by the
    /// crossing threshold); the change targets the next center in the
    /// direction of travel.
    pub fn enumerate_other_intents(
        &self,
        barrier: Option<&Barrier<T>>,
        other: &VehicleState<T>,
        crash_reach: T,
    ) -> Vec<LaneIntent<T>> {
        let mut intents = vec![LaneIntent::KeepLane];
        let nearest = self.lanes.nearest_center(other.y());
        let in_blocked_lane = barrier
            .map(|b| (nearest - b.blocked_lane_y).abs() < T::of(1e-6))
            .unwrap_or(false);
        if in_blocked_lane {
            let b = barrier.expect("checked above");
            if other.x() <= b.x && b.x - other.x() <= crash_reach {
                let escape = self
                    .lanes
                    .next_center_toward(nearest, T::one())
                    .or_else(|| self.lanes.next_center_toward(nearest, -T::one()));
                if let Some(target_y) = escape {
                    intents.push(LaneIntent::ChangeToLane { target_y });
                    return intents;
                }
            }
        }
        if (other.y() - nearest).abs() >= self.cfg.crossing_threshold {
            let dir = if other.heading() > T::zero() {
                T::one()
            } else if other.heading() < T::zero() {
                -T::one()
            } else if other.y() > nearest {
                T::one()
            } else {
                -T::one()
            };
            let target_y = self.lanes.next_center_toward(other.y(), dir).unwrap_or(nearest);
            intents.push(LaneIntent::ChangeToLane { target_y });
        }
        intents
    }

    /// Worst-case effective utility of a candidate action: per-feature
    /// aggregation over the anticipated horizon, minimized over every
    /// combination of one scenario per other agent.
    pub fn effective_utility(
        &self,
        spec: &AgentUtilitySpec<T>,
        aggs: &Aggregators,
        agent: AgentId,
        s: &VehicleState<T>,
        prev_action: &ActionPair<T>,
        candidate: &ActionPair<T>,
        scenario_sets: &[Vec<PathScenario<T>>],
    ) -> Result<T> {
        let h = self.cfg.horizon;
        for (i, set) in scenario_sets.iter().enumerate() {
            if set.is_empty() {
                return Err(ModelError::EmptyScenarioSet { agent: i });
            }
            for sc in set {
                if sc.states.len() != h {
                    return Err(ModelError::LengthMismatch { expected: h, got: sc.states.len() });
                }
            }
        }

        let path = self.anticipate_self(&spec.geometry, agent, s, candidate);
        let w = &spec.weights;

        // Features 1-7 do not depend on the others' scenario choice.
        let mut base = T::zero();
        base += w.get(Feature::Forward)
            * aggregate(aggs.rule(Feature::Forward), h, |t| {
                phi1_forward(spec, path.states[t].speed())
            });
        // The roughness and band terms depend only on the candidate and the
        // previous action, so the series is constant and every rule agrees.
        base += w.get(Feature::AccelSmoothness)
            * phi2_accel_smooth(candidate.accel(), prev_action.accel());
        base += w.get(Feature::SteerSmoothness)
            * phi3_steer_smooth(candidate.steer(), prev_action.steer());
        base += w.get(Feature::HardAccel) * phi4_hard_accel(spec, candidate.accel());
        base += w.get(Feature::LaneDeparture)
            * aggregate(aggs.rule(Feature::LaneDeparture), h, |t| {
                phi5_lane_departure(spec, path.states[t].y())
            });
        base += w.get(Feature::OffRoad)
            * aggregate(aggs.rule(Feature::OffRoad), h, |t| {
                phi6_out_of_road(spec, path.states[t].y())
            });
        base += w.get(Feature::Crash)
            * aggregate(aggs.rule(Feature::Crash), h, |t| {
                phi7_crash(spec, path.states[t].x(), path.states[t].y())
            });

        if scenario_sets.is_empty() {
            return Ok(base);
        }

        // Minimize over the cartesian product of scenario choices.
        let w8 = w.get(Feature::Collision);
        let rule8 = aggs.rule(Feature::Collision);
        let mut choice = vec![0usize; scenario_sets.len()];
        let mut worst: Option<T> = None;
        loop {
            let agg8 = aggregate(rule8, h, |t| {
                let own = &path.states[t];
                let mut sum = T::zero();
                for (set, &ci) in scenario_sets.iter().zip(choice.iter()) {
                    let o = &set[ci].states[t];
                    sum += phi8_collision(spec, own.x() - o.x(), own.y() - o.y());
                }
                sum
            });
            let u = base + w8 * agg8;
            worst = Some(match worst {
                None => u,
                Some(prev) => prev.min(u),
            });
            // odometer increment
            let mut i = 0;
            loop {
                if i == choice.len() {
                    return Ok(worst.expect("at least one combination"));
                }
                choice[i] += 1;
                if choice[i] < scenario_sets[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }
}

fn aggregate<T: Real>(rule: AggregationRule, h: usize, mut f: impl FnMut(usize) -> T) -> T {
    match rule {
        AggregationRule::FirstPeriod => f(0),
        AggregationRule::MeanOverHorizon => {
            let mut sum = T::zero();
            for t in 0..h {
                sum += f(t);
            }
            sum / T::of_usize(h)
        }
        AggregationRule::MaxOverHorizon => {
            let mut best = f(0);
            for t in 1..h {
                best = best.max(f(t));
            }
            best
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rollout;
    use crate::utility::{period_utility, PeriodContext};
    use approx::assert_abs_diff_eq;

    fn two_lanes() -> Lanes<f64> {
        Lanes::new(vec![1.85, -1.85]).unwrap()
    }

    fn ctx() -> AnticipationContext<f64> {
        AnticipationContext::new(AnticipationConfig::default(), two_lanes(), 0.2).unwrap()
    }

    fn state(x: f64, y: f64, psi: f64, v: f64) -> VehicleState<f64> {
        VehicleState::new(x, y, psi, v).unwrap()
    }

    #[test]
    fn stanley_heading_values() {
        let cfg = AnticipationConfig::<f64>::default();
        assert_eq!(stanley_heading(&cfg, 0.0, 31.0), 0.0);
        // scalar oracle: atan(0.15 * 1.85 / sqrt(32))
        assert_abs_diff_eq!(
            stanley_heading(&cfg, 1.85, 31.0),
            0.049016239844149115,
            epsilon = 1e-15
        );
        assert!(stanley_heading(&cfg, 1.85, 1.0e9).abs() < 1e-4);
    }

    #[test]
    fn feedback_steer_zero_when_on_target() {
        let geom = VehicleGeometry::default();
        assert_eq!(heading_feedback_steer(&geom, 0.04, 0.04, 31.0, 0.2), 0.0);
        assert_eq!(heading_feedback_steer(&geom, 0.3, 0.1, 0.0, 0.2), 0.0);
    }

    #[test]
    fn keep_lane_anticipation_is_straight() {
        let c = ctx();
        let s = state(-80.0, -1.85, 0.0, 31.0);
        let sc = c.anticipate_other(&VehicleGeometry::default(), AgentId(1), &s, LaneIntent::KeepLane);
        assert_eq!(sc.states.len(), 15);
        for w in &sc.states {
            assert_eq!(w.y(), -1.85);
            assert_eq!(w.speed(), 31.0);
        }
    }

    #[test]
    fn change_lane_anticipation_is_monotone_and_lands_near_target() {
        let c = ctx();
        let s = state(-80.0, -1.85, 0.0, 31.0);
        let sc = c.anticipate_other(
            &VehicleGeometry::default(),
            AgentId(1),
            &s,
            LaneIntent::ChangeToLane { target_y: 1.85 },
        );
        assert_eq!(sc.states.len(), 15);
        let mut prev = s.y();
        for w in &sc.states {
            assert!(w.y() >= prev - 1e-12, "y must not decrease");
            prev = w.y();
        }
        let last = sc.states.last().unwrap().y();
        assert!(last > -1.85 && last < 1.85 + 0.3, "final y = {last}");
    }

    #[test]
    fn anticipation_is_reproducible() {
        let c = ctx();
        let s = state(-40.0, -1.0, 0.02, 29.0);
        let a = c.anticipate_other(
            &VehicleGeometry::default(),
            AgentId(0),
            &s,
            LaneIntent::ChangeToLane { target_y: 1.85 },
        );
        let b = c.anticipate_other(
            &VehicleGeometry::default(),
            AgentId(0),
            &s,
            LaneIntent::ChangeToLane { target_y: 1.85 },
        );
        assert_eq!(a, b);
    }

    #[test]
    fn self_anticipation_zero_candidate_is_straight() {
        let c = ctx();
        let s = state(-80.0, 1.85, 0.0, 31.0);
        let sc = c.anticipate_self(&VehicleGeometry::default(), AgentId(0), &s, &ActionPair::zero());
        assert_eq!(sc.states.len(), 15);
        for w in &sc.states {
            assert_eq!(w.y(), 1.85);
            assert_eq!(w.heading(), 0.0);
        }
        assert_eq!(sc.intent, LaneIntent::KeepLane);
    }

    #[test]
    fn self_anticipation_persistence_window_is_verbatim() {
        // ceil(15 * 1/3) = 5 leading steps hold the candidate unchanged.
        let cfg = AnticipationConfig {
            persistence_fraction: 1.0 / 3.0,
            ..AnticipationConfig::default()
        };
        let c = AnticipationContext::new(cfg, two_lanes(), 0.2).unwrap();
        assert_eq!(c.cfg.persistence_steps(), 5);
        let geom = VehicleGeometry::default();
        let s = state(-80.0, -1.85, 0.0, 31.0);
        let cand = ActionPair::new(2.0, crate::scalar::deg_to_rad(3.0)).unwrap();
        let sc = c.anticipate_self(&geom, AgentId(0), &s, &cand);
        let manual = rollout(&geom, &s, &vec![cand; 5], 0.2).unwrap();
        assert_eq!(&sc.states[..5], &manual.states()[1..]);
    }

    #[test]
    fn self_anticipation_crosses_and_recovers_toward_target() {
        // At a moderate speed the held candidate does not badly overshoot, and
        // the feedback phase must bring the path close to the target center.
        let c = ctx();
        let geom = VehicleGeometry::default();
        let s = state(-80.0, -1.85, 0.0, 20.0);
        let cand = ActionPair::new(2.0, crate::scalar::deg_to_rad(3.0)).unwrap();
        let sc = c.anticipate_self(&geom, AgentId(0), &s, &cand);
        assert!(sc.states.iter().any(|w| w.y() > 0.0), "path must cross the divider");
        let last = sc.states.last().unwrap().y();
        assert!((last - 1.85).abs() < 0.5, "final y = {last}");
        assert_eq!(sc.intent, LaneIntent::ChangeToLane { target_y: 1.85 });
    }

    #[test]
    fn enumerate_intents_blocked_lane_and_crossing() {
        let c = ctx();
        let barrier = Barrier { x: 0.0, blocked_lane_y: -1.85 };
        // Far upstream: the barrier is outside the crash reach.
        let far = state(-80.0, -1.85, 0.0, 31.0);
        assert_eq!(c.enumerate_other_intents(Some(&barrier), &far, 12.0), vec![LaneIntent::KeepLane]);
        // Inside reach: a change to the open lane is hypothesized.
        let near = state(-10.0, -1.85, 0.0, 31.0);
        let intents = c.enumerate_other_intents(Some(&barrier), &near, 12.0);
        assert!(intents.contains(&LaneIntent::ChangeToLane { target_y: 1.85 }));
        // Begun crossing upward: a change toward the upper lane is hypothesized.
        let crossing = state(-50.0, -1.2, 0.04, 31.0);
        let intents = c.enumerate_other_intents(Some(&barrier), &crossing, 12.0);
        assert!(intents.contains(&LaneIntent::ChangeToLane { target_y: 1.85 }));
        // Centered in the open lane: keep only.
        let open = state(-50.0, 1.85, 0.0, 31.0);
        assert_eq!(c.enumerate_other_intents(Some(&barrier), &open, 12.0), vec![LaneIntent::KeepLane]);
    }

    #[test]
    fn effective_utility_lone_vehicle_near_one() {
        let c = ctx();
        let spec = AgentUtilitySpec::default();
        let s = state(-300.0, 1.85, 0.0, 31.0);
        let u = c
            .effective_utility(&spec, &Aggregators::default(), AgentId(0), &s, &ActionPair::zero(), &ActionPair::zero(), &[])
            .unwrap();
        // Only the off-road tail survives: 1 - 24 * S(3 (1.85 - 4.7)).
        assert_abs_diff_eq!(u, 0.9953558164695695, epsilon = 1e-12);
        assert_abs_diff_eq!(u, 1.0, epsilon = 5e-3);
    }

    #[test]
    fn effective_utility_h1_equals_period_utility_of_the_step() {
        let lanes = two_lanes();
        let cfg = AnticipationConfig { horizon: 1, ..AnticipationConfig::default() };
        let c = AnticipationContext::new(cfg, lanes, 0.2).unwrap();
        let spec = AgentUtilitySpec::default();
        let s = state(-30.0, -1.85, 0.0, 29.0);
        let prev = ActionPair::new(0.5, 0.01).unwrap();
        let cand = ActionPair::new(1.0, 0.02).unwrap();
        let other0 = state(-40.0, 1.85, 0.0, 31.0);
        let other_sc = c.anticipate_other(&spec.geometry, AgentId(1), &other0, LaneIntent::KeepLane);
        let u = c
            .effective_utility(&spec, &Aggregators::default(), AgentId(0), &s, &prev, &cand, &[vec![other_sc.clone()]])
            .unwrap();
        let own1 = step(&spec.geometry, &s, &cand, 0.2).unwrap();
        let ctx1 = PeriodContext {
            own_state: own1,
            own_action: cand,
            prev_action: prev,
            others: &[other_sc.states[0]],
        };
        assert_abs_diff_eq!(u, period_utility(&spec, &ctx1), epsilon = 1e-12);
    }

    #[test]
    fn effective_utility_takes_worst_scenario() {
        let c = ctx();
        let spec = AgentUtilitySpec::default();
        let s = state(0.0, 1.85, 0.0, 31.0);
        let near0 = state(5.0, -1.85, 0.0, 31.0);
        let near = c.anticipate_other(
            &spec.geometry,
            AgentId(1),
            &near0,
            LaneIntent::ChangeToLane { target_y: 1.85 },
        );
        let far = c.anticipate_other(
            &spec.geometry,
            AgentId(1),
            &state(200.0, -1.85, 0.0, 31.0),
            LaneIntent::KeepLane,
        );
        let both = c
            .effective_utility(
                &spec,
                &Aggregators::default(),
                AgentId(0),
                &s,
                &ActionPair::zero(),
                &ActionPair::zero(),
                &[vec![near.clone(), far.clone()]],
            )
            .unwrap();
        let near_only = c
            .effective_utility(
                &spec,
                &Aggregators::default(),
                AgentId(0),
                &s,
                &ActionPair::zero(),
                &ActionPair::zero(),
                &[vec![near]],
            )
            .unwrap();
        let far_only = c
            .effective_utility(
                &spec,
                &Aggregators::default(),
                AgentId(0),
                &s,
                &ActionPair::zero(),
                &ActionPair::zero(),
                &[vec![far]],
            )
            .unwrap();
        assert_eq!(both, near_only.min(far_only));
        assert!(near_only < far_only);
    }

    #[test]
    fn adding_a_scenario_never_increases_value() {
        let c = ctx();
        let spec = AgentUtilitySpec::default();
        let s = state(0.0, 1.85, 0.0, 31.0);
        let keep = c.anticipate_other(
            &spec.geometry,
            AgentId(1),
            &state(15.0, -1.85, 0.0, 31.0),
            LaneIntent::KeepLane,
        );
        let change = c.anticipate_other(
            &spec.geometry,
            AgentId(1),
            &state(15.0, -1.85, 0.0, 31.0),
            LaneIntent::ChangeToLane { target_y: 1.85 },
        );
        let one = c
            .effective_utility(&spec, &Aggregators::default(), AgentId(0), &s, &ActionPair::zero(), &ActionPair::zero(), &[vec![keep.clone()]])
            .unwrap();
        let two = c
            .effective_utility(&spec, &Aggregators::default(), AgentId(0), &s, &ActionPair::zero(), &ActionPair::zero(), &[vec![keep, change]])
            .unwrap();
        assert!(two <= one);
    }

    #[test]
    fn stronger_collision_weight_cannot_increase_value() {
        let c = ctx();
        let mut spec = AgentUtilitySpec::default();
        let s = state(0.0, 1.85, 0.0, 31.0);
        let near = c.anticipate_other(
            &spec.geometry,
            AgentId(1),
            &state(8.0, 1.85, 0.0, 31.0),
            LaneIntent::KeepLane,
        );
        let base = c
            .effective_utility(&spec, &Aggregators::default(), AgentId(0), &s, &ActionPair::zero(), &ActionPair::zero(), &[vec![near.clone()]])
            .unwrap();
        let mut w = spec.weights.as_array();
        w[7] = -28.0;
        spec.weights = crate::utility::UtilityWeights::new(w).unwrap();
        let stronger = c
            .effective_utility(&spec, &Aggregators::default(), AgentId(0), &s, &ActionPair::zero(), &ActionPair::zero(), &[vec![near]])
            .unwrap();
        assert!(stronger < base);
    }

    #[test]
    fn empty_scenario_set_is_an_error() {
        let c = ctx();
        let spec = AgentUtilitySpec::default();
        let s = state(0.0, 1.85, 0.0, 31.0);
        let err = c
            .effective_utility(&spec, &Aggregators::default(), AgentId(0), &s, &ActionPair::zero(), &ActionPair::zero(), &[vec![]])
            .unwrap_err();
        assert!(matches!(err, ModelError::EmptyScenarioSet { .. }));
    }
}
