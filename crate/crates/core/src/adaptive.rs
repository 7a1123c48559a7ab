//! Per-tick adaptive optimization: exhaustive grid search over the action
//! space scored by the worst-case effective utility, additive state/action
//! noise with counter-based seeding, and the closed-loop simulation.
//!
//! Every tick, every agent reads the frozen tick-start states (a decision
//! never sees another agent's same-tick choice), hypothesizes path scenarios
//! for its neighbors, picks the grid action maximizing the effective utility
//! against the worst scenario combination, and then all realized actions
//! evolve the true states simultaneously.

use crate::anticipation::{AnticipationConfig, AnticipationContext, Aggregators, PathScenario};
use crate::dynamics::{step_detailed, ActionPair, Trajectory, VehicleGeometry, VehicleState};
use crate::error::{ModelError, Result};
use crate::scalar::Real;
use crate::seeding::{mix_seed, standard_normal};
use crate::utility::{phi7_crash, phi8_collision, AgentUtilitySpec, Feature};
use crate::world::{AgentId, Barrier, Lanes};

/// Discretized action space; both axes strictly increasing and containing 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionGrid<T> {
    accel: Vec<T>,
    steer: Vec<T>,
}

impl<T: Real> ActionGrid<T> {
    pub fn new(accel: Vec<T>, steer: Vec<T>) -> Result<Self> {
        for (field, axis) in [("accel grid", &accel), ("steer grid", &steer)] {
            if axis.is_empty() {
                return Err(ModelError::EmptyActions);
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { field });
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ModelError::OutOfRange {
                    field,
                    value: f64::NAN,
                    constraint: "strictly increasing",
                });
            }
            if !axis.iter().any(|v| *v == T::zero()) {
                return Err(ModelError::OutOfRange {
                    field,
                    value: 0.0,
                    constraint: "must contain 0",
                });
            }
        }
        if steer.iter().any(|v| v.abs() >= T::FRAC_PI_2()) {
            return Err(ModelError::SteeringSingularity {
                value_rad: steer.last().map(|v| v.as_f64()).unwrap_or(f64::NAN),
            });
        }
        Ok(Self { accel, steer })
    }

    pub fn accel_values(&self) -> &[T] {
        &self.accel
    }

    pub fn steer_values(&self) -> &[T] {
        &self.steer
    }

    pub fn len(&self) -> usize {
        self.accel.len() * self.steer.len()
    }

    pub fn is_empty(&self) -> bool {
        // the constructor rejects empty axes
        false
    }

    /// Row-major enumeration: acceleration outer, steering inner.
    pub fn iter(&self) -> impl Iterator<Item = (usize, ActionPair<T>)> + '_ {
        self.accel.iter().enumerate().flat_map(move |(ia, &a)| {
            self.steer
                .iter()
                .enumerate()
                .map(move |(is, &d)| {
                    (ia * self.steer.len() + is, ActionPair::new(a, d).expect("grid axes validated"))
                })
        })
    }
}

impl<T: Real> Default for ActionGrid<T> {
    /// Acceleration -6..=5 m/s^2 in 0.5 steps; steering -10..=10 degrees in
    /// 0.25-degree steps. At highway speed one tick of steering turns the
    /// heading by ~2.15x the wheel angle, so the quarter-degree pitch is
    /// what lets the planner express the small corrections that settle a
    /// finished lane change instead of sawtoothing around the center.
    fn default() -> Self {
        let accel: Vec<T> = (0..23).map(|i| T::of(-6.0 + 0.5 * f64::from(i))).collect();
        let steer: Vec<T> =
            (0..81).map(|i| T::of((-10.0 + 0.25 * f64::from(i)).to_radians())).collect();
        Self::new(accel, steer).expect("default grid is valid")
    }
}

/// Noise distribution switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseDistribution {
    None,
    GaussianIid,
}

/// Additive perception/actuation noise. Draws are keyed by
/// (seed, agent, tick, field), so no execution order or parallel schedule
/// can perturb a stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel<T> {
    pub distribution: NoiseDistribution,
    /// Standard deviations for (x, y, heading, speed).
    pub state_sigma: [T; 4],
    /// Standard deviations for (accel, steer).
    pub action_sigma: [T; 2],
    pub rng_seed: u64,
}

impl<T: Real> NoiseModel<T> {
    pub fn disabled() -> Self {
        Self {
            distribution: NoiseDistribution::None,
            state_sigma: [T::zero(); 4],
            action_sigma: [T::zero(); 2],
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .state_sigma
            .iter()
            .chain(self.action_sigma.iter())
            .any(|s| !s.is_finite() || *s < T::zero())
        {
            return Err(ModelError::OutOfRange {
                field: "noise sigma",
                value: f64::NAN,
                constraint: ">= 0",
            });
        }
        Ok(())
    }

    fn enabled(&self) -> bool {
        self.distribution == NoiseDistribution::GaussianIid
    }

    fn draw(&self, agent: AgentId, tick: usize, field: u64, sigma: T) -> T {
        if sigma == T::zero() {
            return T::zero();
        }
        let key = mix_seed(&[self.rng_seed, agent.0 as u64, tick as u64, field]);
        sigma * T::of(standard_normal(key))
    }
}

/// Noisy perception of one vehicle's state at one tick. Speed is floored at
/// zero so the perceived state stays valid.
pub fn perceive_state<T: Real>(
    noise: &NoiseModel<T>,
    s: &VehicleState<T>,
    tick: usize,
    agent: AgentId,
) -> VehicleState<T> {
    if !noise.enabled() {
        return *s;
    }
    let x = s.x() + noise.draw(agent, tick, 0, noise.state_sigma[0]);
    let y = s.y() + noise.draw(agent, tick, 1, noise.state_sigma[1]);
    let heading = s.heading() + noise.draw(agent, tick, 2, noise.state_sigma[2]);
    let speed = (s.speed() + noise.draw(agent, tick, 3, noise.state_sigma[3])).max(T::zero());
    VehicleState::new(x, y, heading, speed).expect("noisy state stays finite")
}

/// Noisy actuation of one action at one tick. Steering stays inside the tan
/// singularity guard.
pub fn realize_action<T: Real>(
    noise: &NoiseModel<T>,
    a: &ActionPair<T>,
    tick: usize,
    agent: AgentId,
) -> ActionPair<T> {
    if !noise.enabled() {
        return *a;
    }
    let accel = a.accel() + noise.draw(agent, tick, 10, noise.action_sigma[0]);
    let guard = T::FRAC_PI_2() - T::of(1e-6);
    let steer =
        (a.steer() + noise.draw(agent, tick, 11, noise.action_sigma[1])).max(-guard).min(guard);
    ActionPair::new(accel, steer).expect("noisy action stays in bounds")
}

/// Perceived state and realized action for one agent at one tick.
pub fn apply_noise<T: Real>(
    noise: &NoiseModel<T>,
    s: &VehicleState<T>,
    a: &ActionPair<T>,
    tick: usize,
    agent: AgentId,
) -> (VehicleState<T>, ActionPair<T>) {
    (perceive_state(noise, s, tick, agent), realize_action(noise, a, tick, agent))
}

/// What one deciding agent sees of another at a tick.
#[derive(Clone, Copy, Debug)]
pub struct AgentView<T> {
    pub id: AgentId,
    pub state: VehicleState<T>,
    pub geometry: VehicleGeometry<T>,
}

/// Exhaustive grid argmax of the effective utility.
///
/// Ties on the exact utility value break toward the smallest scaled action
/// magnitude `accel^2 + (10 steer)^2`, then the lowest row-major grid index.
/// Returns the chosen action and its effective utility.
#[allow(clippy::too_many_arguments)]
pub fn optimal_action<T: Real>(
    spec: &AgentUtilitySpec<T>,
    ctx: &AnticipationContext<T>,
    aggs: &Aggregators,
    grid: &ActionGrid<T>,
    barrier: Option<&Barrier<T>>,
    neighbor_radius: T,
    perceived: &[AgentView<T>],
    prev_action: &ActionPair<T>,
    agent_id: AgentId,
) -> Result<(ActionPair<T>, T)> {
    let me = perceived
        .iter()
        .find(|v| v.id == agent_id)
        .ok_or(ModelError::UnknownAgent { agent: agent_id.0 })?;

    // Neighbor filter, canonical ascending-id order.
    let mut others: Vec<&AgentView<T>> = perceived
        .iter()
        .filter(|v| {
            v.id != agent_id && {
                let dx = v.state.x() - me.state.x();
                let dy = v.state.y() - me.state.y();
                (dx * dx + dy * dy).sqrt() <= neighbor_radius
            }
        })
        .collect();
    others.sort_by_key(|v| v.id);

    let scenario_sets: Vec<Vec<PathScenario<T>>> = others
        .iter()
        .map(|o| {
            ctx.enumerate_other_intents(barrier, &o.state, crash_reach(spec))
                .into_iter()
                .map(|intent| ctx.anticipate_other(&o.geometry, o.id, &o.state, intent))
                .collect()
        })
        .collect();

    let ten = T::of(10.0);
    let mut best: Option<(T, T, usize, ActionPair<T>)> = None;
    for (index, candidate) in grid.iter() {
        let u = ctx.effective_utility(
            spec,
            aggs,
            agent_id,
            &me.state,
            prev_action,
            &candidate,
            &scenario_sets,
        )?;
        let scaled_steer = ten * candidate.steer();
        let magnitude = candidate.accel() * candidate.accel() + scaled_steer * scaled_steer;
        let better = match &best {
            None => true,
            Some((bu, bmag, bidx, _)) => {
                u > *bu
                    || (u == *bu && (magnitude < *bmag || (magnitude == *bmag && index < *bidx)))
            }
        };
        if better {
            best = Some((u, magnitude, index, candidate));
        }
    }
    let (u, _, _, action) = best.expect("grid is nonempty");
    Ok((action, u))
}

/// The believed reach of the crash halo: premium length plus the sigmoid
/// shoulder. Used to decide when a blocked-lane vehicle plausibly changes
/// lanes.
fn crash_reach<T: Real>(spec: &AgentUtilitySpec<T>) -> T {
    spec.params.crash_lx + T::of(4.0) / spec.params.kappa7x
}

/// One agent of a closed-loop simulation.
#[derive(Clone, Debug)]
pub struct WorldAgent<T> {
    pub id: AgentId,
    pub spec: AgentUtilitySpec<T>,
    pub initial: VehicleState<T>,
    /// First tick at which the agent participates.
    pub entry_tick: usize,
    /// Tick before which the agent leaves (defaults to the full run).
    pub exit_tick: Option<usize>,
}

/// Scenario-level description of a closed-loop run.
#[derive(Clone, Debug)]
pub struct World<T> {
    pub dt: T,
    pub ticks: usize,
    pub lanes: Lanes<T>,
    pub barrier: Option<Barrier<T>>,
    pub anticipation: AnticipationConfig<T>,
    pub aggregators: Aggregators,
    pub grid: ActionGrid<T>,
    /// Only agents within this center distance enter a decision context.
    pub neighbor_radius: T,
    pub agents: Vec<WorldAgent<T>>,
}

impl<T: Real> World<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "dt",
                value: self.dt.as_f64(),
                constraint: "> 0",
            });
        }
        if self.ticks == 0 {
            return Err(ModelError::OutOfRange { field: "ticks", value: 0.0, constraint: ">= 1" });
        }
        self.anticipation.validate()?;
        if !self.neighbor_radius.is_finite() || self.neighbor_radius <= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "neighbor_radius",
                value: self.neighbor_radius.as_f64(),
                constraint: "> 0",
            });
        }
        let mut ids: Vec<usize> = self.agents.iter().map(|a| a.id.0).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.agents.len() {
            return Err(ModelError::OutOfRange {
                field: "agent ids",
                value: self.agents.len() as f64,
                constraint: "unique",
            });
        }
        for a in &self.agents {
            a.spec.validate()?;
            let exit = a.exit_tick.unwrap_or(self.ticks);
            if a.entry_tick >= exit || exit > self.ticks {
                return Err(ModelError::OutOfRange {
                    field: "entry_tick/exit_tick",
                    value: a.entry_tick as f64,
                    constraint: "entry < exit <= ticks",
                });
            }
        }
        if let Some(b) = &self.barrier {
            if !self.lanes.centers().iter().any(|c| (*c - b.blocked_lane_y).abs() < T::of(1e-6)) {
                return Err(ModelError::OutOfRange {
                    field: "barrier.blocked_lane_y",
                    value: b.blocked_lane_y.as_f64(),
                    constraint: "must equal a lane center",
                });
            }
        }
        Ok(())
    }
}

/// Simulation events worth logging.
#[derive(Clone, Debug, PartialEq)]
pub enum SimEvent<T> {
    /// The zero-speed floor clipped a velocity update.
    SpeedClamped { agent: AgentId, tick: usize },
    /// A crash or collision feature exceeded the calamity threshold at a
    /// realized state.
    Calamity { agent: AgentId, tick: usize, feature: Feature, value: T },
    /// The scenario set an observer hypothesizes for another agent gained or
    /// lost its lane-change branch.
    ScenarioShift { observer: AgentId, other: AgentId, tick: usize, lane_change_considered: bool },
    AgentEntered { agent: AgentId, tick: usize },
    AgentLeft { agent: AgentId, tick: usize },
}

/// Realized features above this value are logged as calamities.
pub const CALAMITY_THRESHOLD: f64 = 0.99;

/// Everything one agent did during a run.
#[derive(Clone, Debug)]
pub struct AgentRecord<T> {
    pub agent: AgentId,
    pub entry_tick: usize,
    /// Realized trajectory over the agent's alive window.
    pub trajectory: Trajectory<T>,
    /// Pre-noise grid optima, one per alive tick.
    pub chosen: Vec<ActionPair<T>>,
    /// Post-noise realized actions, one per alive tick.
    pub realized: Vec<ActionPair<T>>,
    /// Effective utility of the chosen action, one per alive tick.
    pub effective_utilities: Vec<T>,
}

/// Closed-loop simulation output.
#[derive(Clone, Debug)]
pub struct SimulationResult<T> {
    pub records: Vec<AgentRecord<T>>,
    pub events: Vec<SimEvent<T>>,
}

impl<T: Real> SimulationResult<T> {
    pub fn record(&self, agent: AgentId) -> Option<&AgentRecord<T>> {
        self.records.iter().find(|r| r.agent == agent)
    }

    pub fn calamity_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, SimEvent::Calamity { .. })).count()
    }
}

struct LiveAgent<T: Real> {
    state: VehicleState<T>,
    prev_action: ActionPair<T>,
    states: Vec<VehicleState<T>>,
    chosen: Vec<ActionPair<T>>,
    realized: Vec<ActionPair<T>>,
    effective_utilities: Vec<T>,
    /// Last tick's scenario-branch answer per visible neighbor.
    change_considered_for: Vec<(AgentId, bool)>,
}

/// Run the closed-loop game: each tick every alive agent decides on the
/// frozen tick-start (possibly noisy) states, then all realized actions
/// evolve the true states simultaneously. Calamities are recorded as events,
/// never aborts.
pub fn simulate<T: Real>(world: &World<T>, noise: &NoiseModel<T>) -> Result<SimulationResult<T>> {
    world.validate()?;
    noise.validate()?;
    let ctx = AnticipationContext::new(world.anticipation, world.lanes.clone(), world.dt)?;
    let mut events: Vec<SimEvent<T>> = Vec::new();
    let mut live: Vec<Option<LiveAgent<T>>> = world.agents.iter().map(|_| None).collect();
    let mut done: Vec<Option<AgentRecord<T>>> = world.agents.iter().map(|_| None).collect();

    // Agents are processed in ascending id order; decisions read only the
    // frozen views, so this order cannot influence any choice.
    let mut order: Vec<usize> = (0..world.agents.len()).collect();
    order.sort_by_key(|&i| world.agents[i].id);

    for tick in 0..world.ticks {
        for &i in &order {
            let agent = &world.agents[i];
            if tick == agent.entry_tick {
                events.push(SimEvent::AgentEntered { agent: agent.id, tick });
                live[i] = Some(LiveAgent {
                    state: agent.initial,
                    prev_action: ActionPair::zero(),
                    states: vec![agent.initial],
                    chosen: Vec::new(),
                    realized: Vec::new(),
                    effective_utilities: Vec::new(),
                    change_considered_for: Vec::new(),
                });
            }
            if tick == agent.exit_tick.unwrap_or(world.ticks) {
                if let Some(l) = live[i].take() {
                    events.push(SimEvent::AgentLeft { agent: agent.id, tick });
                    done[i] = Some(seal_record(world.dt, agent, l)?);
                }
            }
        }
        if tick == 0 {
            check_calamities(world, &order, &live, 0, &mut events);
        }

        // frozen perceived views of every alive agent
        let views: Vec<AgentView<T>> = order
            .iter()
            .filter_map(|&i| {
                live[i].as_ref().map(|l| AgentView {
                    id: world.agents[i].id,
                    state: perceive_state(noise, &l.state, tick, world.agents[i].id),
                    geometry: world.agents[i].spec.geometry,
                })
            })
            .collect();

        // decision stage
        let mut decisions: Vec<(usize, ActionPair<T>, ActionPair<T>, T)> = Vec::new();
        for &i in &order {
            let Some(l) = live[i].as_ref() else { continue };
            let agent = &world.agents[i];
            let (chosen, eu) = optimal_action(
                &agent.spec,
                &ctx,
                &world.aggregators,
                &world.grid,
                world.barrier.as_ref(),
                world.neighbor_radius,
                &views,
                &l.prev_action,
                agent.id,
            )?;
            let realized = realize_action(noise, &chosen, tick, agent.id);
            decisions.push((i, chosen, realized, eu));

            let me_view =
                views.iter().find(|v| v.id == agent.id).expect("alive agent has a view");
            let mut branch_state: Vec<(AgentId, bool)> = Vec::new();
            for v in &views {
                if v.id == agent.id {
                    continue;
                }
                let dx = v.state.x() - me_view.state.x();
                let dy = v.state.y() - me_view.state.y();
                if (dx * dx + dy * dy).sqrt() > world.neighbor_radius {
                    continue;
                }
                let considers = ctx
                    .enumerate_other_intents(world.barrier.as_ref(), &v.state, crash_reach(&agent.spec))
                    .len()
                    > 1;
                branch_state.push((v.id, considers));
                let prior = l
                    .change_considered_for
                    .iter()
                    .find(|(id, _)| *id == v.id)
                    .map(|(_, c)| *c);
                if prior != Some(considers) {
                    events.push(SimEvent::ScenarioShift {
                        observer: agent.id,
                        other: v.id,
                        tick,
                        lane_change_considered: considers,
                    });
                }
            }
            live[i].as_mut().expect("alive").change_considered_for = branch_state;
        }

        // simultaneous evolution of the true states
        for (i, chosen, realized, eu) in decisions {
            let agent = &world.agents[i];
            let l = live[i].as_mut().expect("alive agent decided");
            let out = step_detailed(&agent.spec.geometry, &l.state, &realized, world.dt)?;
            if out.speed_clamped {
                events.push(SimEvent::SpeedClamped { agent: agent.id, tick });
            }
            l.state = out.state;
            l.states.push(out.state);
            l.chosen.push(chosen);
            l.realized.push(realized);
            l.effective_utilities.push(eu);
            l.prev_action = realized;
        }
        check_calamities(world, &order, &live, tick + 1, &mut events);
    }

    for &i in &order {
        if let Some(l) = live[i].take() {
            done[i] = Some(seal_record(world.dt, &world.agents[i], l)?);
        }
    }
    let records = done.into_iter().map(|r| r.expect("every agent sealed")).collect();
    Ok(SimulationResult { records, events })
}

fn check_calamities<T: Real>(
    world: &World<T>,
    order: &[usize],
    live: &[Option<LiveAgent<T>>],
    tick: usize,
    events: &mut Vec<SimEvent<T>>,
) {
    let states: Vec<(usize, VehicleState<T>)> =
        order.iter().filter_map(|&i| live[i].as_ref().map(|l| (i, l.state))).collect();
    for &(i, s) in &states {
        let spec = &world.agents[i].spec;
        let crash = phi7_crash(spec, s.x(), s.y());
        if crash.as_f64() > CALAMITY_THRESHOLD {
            events.push(SimEvent::Calamity {
                agent: world.agents[i].id,
                tick,
                feature: Feature::Crash,
                value: crash,
            });
        }
        for &(j, o) in &states {
            if i == j {
                continue;
            }
            let coll = phi8_collision(spec, s.x() - o.x(), s.y() - o.y());
            if coll.as_f64() > CALAMITY_THRESHOLD {
                events.push(SimEvent::Calamity {
                    agent: world.agents[i].id,
                    tick,
                    feature: Feature::Collision,
                    value: coll,
                });
                break;
            }
        }
    }
}

fn seal_record<T: Real>(dt: T, agent: &WorldAgent<T>, l: LiveAgent<T>) -> Result<AgentRecord<T>> {
    let trajectory = Trajectory::new(&agent.spec.geometry, dt, l.states, l.realized.clone())?;
    Ok(AgentRecord {
        agent: agent.id,
        entry_tick: agent.entry_tick,
        trajectory,
        chosen: l.chosen,
        realized: l.realized,
        effective_utilities: l.effective_utilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::deg_to_rad;

    fn two_lane_world(agents: Vec<WorldAgent<f64>>, ticks: usize) -> World<f64> {
        World {
            dt: 0.2,
            ticks,
            lanes: Lanes::new(vec![1.85, -1.85]).unwrap(),
            barrier: Some(Barrier { x: 0.0, blocked_lane_y: -1.85 }),
            anticipation: AnticipationConfig::default(),
            aggregators: Aggregators::default(),
            grid: ActionGrid::default(),
            neighbor_radius: 60.0,
            agents,
        }
    }

    fn agent(id: usize, x: f64, y: f64, v: f64) -> WorldAgent<f64> {
        let mut spec = AgentUtilitySpec::default();
        spec.params.crash_lx = 10.0;
        WorldAgent {
            id: AgentId(id),
            spec,
            initial: VehicleState::new(x, y, 0.0, v).unwrap(),
            entry_tick: 0,
            exit_tick: None,
        }
    }

    #[test]
    fn grid_validation() {
        assert!(ActionGrid::new(vec![-1.0, 0.0, 1.0], vec![0.0]).is_ok());
        assert!(ActionGrid::new(vec![], vec![0.0]).is_err());
        assert!(ActionGrid::new(vec![0.0, 0.0], vec![0.0]).is_err());
        assert!(ActionGrid::new(vec![-1.0, 1.0], vec![0.0]).is_err());
        assert!(ActionGrid::new(vec![0.0], vec![-1.6, 0.0]).is_err());
        let g = ActionGrid::<f64>::default();
        assert_eq!(g.accel_values().len(), 23);
        assert_eq!(g.steer_values().len(), 81);
        assert!(g.accel_values().contains(&0.0));
        assert!(g.steer_values().contains(&0.0));
        assert_eq!(g.len(), 23 * 81);
    }

    #[test]
    fn grid_iteration_is_row_major() {
        let g = ActionGrid::new(vec![-1.0, 0.0], vec![0.0, 0.1]).unwrap();
        let items: Vec<(usize, ActionPair<f64>)> = g.iter().collect();
        assert_eq!(items.len(), 4);
        assert_eq!(items[0], (0, ActionPair::new(-1.0, 0.0).unwrap()));
        assert_eq!(items[1], (1, ActionPair::new(-1.0, 0.1).unwrap()));
        assert_eq!(items[2], (2, ActionPair::new(0.0, 0.0).unwrap()));
    }

    #[test]
    fn noise_none_is_identity() {
        let noise = NoiseModel::<f64>::disabled();
        let s = VehicleState::new(1.0, 2.0, 0.1, 20.0).unwrap();
        let a = ActionPair::new(1.0, 0.05).unwrap();
        let (ps, ra) = apply_noise(&noise, &s, &a, 7, AgentId(3));
        assert_eq!(ps, s);
        assert_eq!(ra, a);
    }

    #[test]
    fn gaussian_zero_sigma_is_identity() {
        let noise = NoiseModel {
            distribution: NoiseDistribution::GaussianIid,
            state_sigma: [0.0; 4],
            action_sigma: [0.0; 2],
            rng_seed: 9,
        };
        let s = VehicleState::new(1.0, 2.0, 0.1, 20.0).unwrap();
        let a = ActionPair::new(1.0, 0.05).unwrap();
        let (ps, ra) = apply_noise(&noise, &s, &a, 7, AgentId(3));
        assert_eq!(ps, s);
        assert_eq!(ra, a);
    }

    #[test]
    fn noise_draws_are_reproducible_and_stream_independent() {
        let noise = NoiseModel {
            distribution: NoiseDistribution::GaussianIid,
            state_sigma: [0.1, 0.1, 0.01, 0.2],
            action_sigma: [0.1, deg_to_rad(0.01)],
            rng_seed: 42,
        };
        let s = VehicleState::new(0.0, 0.0, 0.0, 30.0).unwrap();
        let a = ActionPair::zero();
        let (ps1, ra1) = apply_noise(&noise, &s, &a, 5, AgentId(1));
        let (ps2, ra2) = apply_noise(&noise, &s, &a, 5, AgentId(1));
        assert_eq!(ps1, ps2);
        assert_eq!(ra1, ra2);
        let (ps3, _) = apply_noise(&noise, &s, &a, 6, AgentId(1));
        let (ps4, _) = apply_noise(&noise, &s, &a, 5, AgentId(2));
        assert_ne!(ps1, ps3);
        assert_ne!(ps1, ps4);
    }

    #[test]
    fn noise_regression_pins() {
        // Frozen once from the seeding scheme; guards the stream layout.
        let noise = NoiseModel {
            distribution: NoiseDistribution::GaussianIid,
            state_sigma: [0.0; 4],
            action_sigma: [0.1, 0.01],
            rng_seed: 7,
        };
        let a = ActionPair::zero();
        let r0 = realize_action(&noise, &a, 0, AgentId(0));
        let r1 = realize_action(&noise, &a, 1, AgentId(0));
        assert!((r0.accel() - 0.049900220008294624_f64).abs() < 1e-12, "{:?}", r0.accel());
        assert!((r0.steer() - 0.01158256789307742_f64).abs() < 1e-12, "{:?}", r0.steer());
        assert!((r1.accel() - 0.09264983738504483_f64).abs() < 1e-12, "{:?}", r1.accel());
        assert!((r1.steer() + 0.011025214745644591_f64).abs() < 1e-12, "{:?}", r1.steer());
    }

    #[test]
    fn lone_vehicle_coasts_at_the_limit() {
        let world = two_lane_world(vec![agent(0, -400.0, 1.85, 31.0)], 10);
        let result = simulate(&world, &NoiseModel::disabled()).unwrap();
        let rec = &result.records[0];
        for a in &rec.chosen {
            assert_eq!(a.accel(), 0.0);
            assert_eq!(a.steer(), 0.0);
        }
        assert_eq!(result.calamity_count(), 0);
    }

    #[test]
    fn slow_lone_vehicle_accelerates() {
        let world = two_lane_world(vec![agent(0, -400.0, 1.85, 20.0)], 1);
        let result = simulate(&world, &NoiseModel::disabled()).unwrap();
        assert!(result.records[0].chosen[0].accel() > 0.0);
    }

    #[test]
    fn blocked_vehicle_reacts_at_start() {
        // Coasting straight at the barrier cannot be optimal at tick 0:
        // confirmed against the same grid by construction (optimal_action is
        // exhaustive), so asserting the argmax is not (0,0) is sound.
        let world =
            two_lane_world(vec![agent(0, -90.0, 1.85, 31.0), agent(1, -80.0, -1.85, 31.0)], 1);
        let result = simulate(&world, &NoiseModel::disabled()).unwrap();
        let a = result.record(AgentId(1)).unwrap().chosen[0];
        assert!(
            a.steer() > 0.0 || a.accel() < 0.0,
            "expected evasion, got ({}, {})",
            a.accel(),
            a.steer()
        );
    }

    #[test]
    fn decisions_ignore_other_agents_ordering() {
        let world = two_lane_world(
            vec![agent(0, -90.0, 1.85, 31.0), agent(1, -80.0, -1.85, 31.0), agent(2, -120.0, 1.85, 31.0)],
            1,
        );
        let ctx =
            AnticipationContext::new(world.anticipation, world.lanes.clone(), world.dt).unwrap();
        let views: Vec<AgentView<f64>> = world
            .agents
            .iter()
            .map(|a| AgentView { id: a.id, state: a.initial, geometry: a.spec.geometry })
            .collect();
        let mut shuffled = views.clone();
        shuffled.reverse();
        let run = |vs: &[AgentView<f64>]| {
            optimal_action(
                &world.agents[0].spec,
                &ctx,
                &world.aggregators,
                &world.grid,
                world.barrier.as_ref(),
                world.neighbor_radius,
                vs,
                &ActionPair::zero(),
                AgentId(0),
            )
            .unwrap()
        };
        assert_eq!(run(&views), run(&shuffled));
    }

    #[test]
    fn simulation_is_bit_deterministic() {
        let world =
            two_lane_world(vec![agent(0, -90.0, 1.85, 31.0), agent(1, -80.0, -1.85, 31.0)], 6);
        let r1 = simulate(&world, &NoiseModel::disabled()).unwrap();
        let r2 = simulate(&world, &NoiseModel::disabled()).unwrap();
        for (a, b) in r1.records.iter().zip(&r2.records) {
            assert_eq!(a.trajectory.states(), b.trajectory.states());
            assert_eq!(a.chosen, b.chosen);
            assert_eq!(a.effective_utilities, b.effective_utilities);
        }
        assert_eq!(r1.events, r2.events);
    }

    #[test]
    fn realized_equals_chosen_plus_draw() {
        let noise = NoiseModel {
            distribution: NoiseDistribution::GaussianIid,
            state_sigma: [0.0; 4],
            action_sigma: [0.05, deg_to_rad(0.1)],
            rng_seed: 11,
        };
        let world =
            two_lane_world(vec![agent(0, -90.0, 1.85, 31.0), agent(1, -80.0, -1.85, 31.0)], 5);
        let result = simulate(&world, &noise).unwrap();
        for rec in &result.records {
            for (k, (c, r)) in rec.chosen.iter().zip(&rec.realized).enumerate() {
                let expect = realize_action(&noise, c, rec.entry_tick + k, rec.agent);
                assert_eq!(*r, expect);
            }
        }
    }

    #[test]
    fn agents_can_enter_and_leave() {
        let mut late = agent(1, -150.0, -1.85, 31.0);
        late.entry_tick = 3;
        late.exit_tick = Some(7);
        let world = two_lane_world(vec![agent(0, -400.0, 1.85, 31.0), late], 10);
        let result = simulate(&world, &NoiseModel::disabled()).unwrap();
        let r0 = result.record(AgentId(0)).unwrap();
        let r1 = result.record(AgentId(1)).unwrap();
        assert_eq!(r0.trajectory.len(), 10);
        assert_eq!(r1.trajectory.len(), 4);
        assert_eq!(r1.entry_tick, 3);
        assert!(result.events.contains(&SimEvent::AgentEntered { agent: AgentId(1), tick: 3 }));
        assert!(result.events.contains(&SimEvent::AgentLeft { agent: AgentId(1), tick: 7 }));
    }

    #[test]
    fn crash_at_the_barrier_logs_a_calamity() {
        let world = two_lane_world(vec![agent(0, -2.0, -1.85, 31.0)], 1);
        let result = simulate(&world, &NoiseModel::disabled()).unwrap();
        assert!(result
            .events
            .iter()
            .any(|e| matches!(e, SimEvent::Calamity { feature: Feature::Crash, .. })));
    }

    #[test]
    fn collision_halo_tops_out_below_the_calamity_threshold() {
        // With the default parameters phi8 peaks at (1 - e^-10) S(5)^2 *
        // (1 - e^-36) S(18)^2 = 0.98661 < 0.99, so overlapping vehicles are
        // caught by the separation checks rather than the calamity log.
        let spec = AgentUtilitySpec::<f64>::default();
        assert!(phi8_collision(&spec, 0.0, 0.0) < CALAMITY_THRESHOLD);
        let world =
            two_lane_world(vec![agent(0, -200.0, 1.85, 31.0), agent(1, -199.0, 1.85, 31.0)], 1);
        let result = simulate(&world, &NoiseModel::disabled()).unwrap();
        assert!(!result
            .events
            .iter()
            .any(|e| matches!(e, SimEvent::Calamity { feature: Feature::Collision, .. })));
    }

    #[test]
    fn invalid_worlds_are_rejected() {
        let mut world = two_lane_world(vec![agent(0, 0.0, 1.85, 31.0)], 0);
        assert!(simulate(&world, &NoiseModel::disabled()).is_err());
        world.ticks = 5;
        world.barrier = Some(Barrier { x: 0.0, blocked_lane_y: -3.0 });
        assert!(world.validate().is_err());
    }
}
