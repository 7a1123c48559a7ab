//! Iterated best response over full-horizon action sequences, equilibrium
//! certification by unilateral-deviation probing, and multi-start
//! equilibrium search.
//!
//! Each agent's best response maximizes its cumulative utility over all 2T
//! decision variables while the other agents' sequences stay fixed. The
//! inner optimizer is a derivative-free cyclic coordinate ascent: every
//! coordinate is maximized by a doubling probe ladder (which can jump over
//! utility humps, e.g. the barrier's crash halo) followed by a golden-section
//! polish, with random-restart perturbations accepted only on improvement.
//! Coordinate-wise stationarity is exactly the property the certificate
//! checks afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{rollout, step, ActionPair, Trajectory, VehicleState};
use crate::error::{ModelError, Result};
use crate::scalar::Real;
use crate::seeding::mix_seed;
use crate::utility::{period_utility, AgentUtilitySpec, PeriodContext};
use crate::world::AgentId;

/// Steering is commensurated with acceleration by this factor in all
/// sup-norm convergence and deduplication metrics.
fn steer_scale<T: Real>() -> T {
    T::of(10.0)
}

/// One agent's full-horizon plan.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSequence<T> {
    pub agent: AgentId,
    pub actions: Vec<ActionPair<T>>,
}

impl<T: Real> ActionSequence<T> {
    pub fn zeros(agent: AgentId, horizon: usize) -> Self {
        Self { agent, actions: vec![ActionPair::zero(); horizon] }
    }
}

/// Optimizer budget and search region for one best-response solve.
#[derive(Clone, Debug)]
pub struct BestResponseConfig<T> {
    /// Multi-start count (the first start is the unperturbed incumbent).
    pub restarts: usize,
    /// Uniform perturbation half-width applied to every acceleration
    /// coordinate on a restart (m/s^2).
    pub perturbation_accel: T,
    /// Uniform perturbation half-width applied to every steering coordinate
    /// on a restart (rad).
    pub perturbation_steer: T,
    /// Utility-evaluation budget per local optimization.
    pub local_opt_max_evals: usize,
    pub accel_bounds: (T, T),
    pub steer_bounds: (T, T),
    pub rng_seed: u64,
}

impl<T: Real> Default for BestResponseConfig<T> {
    fn default() -> Self {
        Self {
            restarts: 2,
            perturbation_accel: T::of(0.5),
            perturbation_steer: T::of(2.0f64.to_radians()),
            local_opt_max_evals: 120_000,
            accel_bounds: (T::of(-8.0), T::of(6.0)),
            steer_bounds: (T::of((-15.0f64).to_radians()), T::of(15.0f64.to_radians())),
            rng_seed: 0,
        }
    }
}

impl<T: Real> BestResponseConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(ModelError::OutOfRange {
                field: "restarts",
                value: 0.0,
                constraint: ">= 1",
            });
        }
        if self.accel_bounds.0 >= self.accel_bounds.1 {
            return Err(ModelError::OutOfRange {
                field: "accel_bounds",
                value: self.accel_bounds.0.as_f64(),
                constraint: "lo < hi",
            });
        }
        if self.steer_bounds.0 >= self.steer_bounds.1
            || self.steer_bounds.0.abs() >= T::FRAC_PI_2()
            || self.steer_bounds.1.abs() >= T::FRAC_PI_2()
        {
            return Err(ModelError::OutOfRange {
                field: "steer_bounds",
                value: self.steer_bounds.0.as_f64(),
                constraint: "lo < hi, within (-pi/2, pi/2)",
            });
        }
        if self.perturbation_accel <= T::zero() || self.perturbation_steer <= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "perturbation_scale",
                value: self.perturbation_accel.as_f64(),
                constraint: "> 0",
            });
        }
        Ok(())
    }
}

/// Deviation offsets evaluated per decision coordinate when certifying.
#[derive(Clone, Debug)]
pub struct ProbeDeltas<T> {
    pub accel: Vec<T>,
    pub steer: Vec<T>,
}

impl<T: Real> ProbeDeltas<T> {
    /// `points` offsets spanning the given half-widths symmetrically.
    pub fn symmetric(accel_halfwidth: T, steer_halfwidth: T, points: usize) -> Self {
        let lin = |half: T| -> Vec<T> {
            let n = points.max(2);
            (0..n)
                .map(|i| {
                    let frac = T::of_usize(i) / T::of_usize(n - 1);
                    -half + (half + half) * frac
                })
                .collect()
        };
        Self { accel: lin(accel_halfwidth), steer: lin(steer_halfwidth) }
    }

    pub fn describe(&self) -> String {
        let hw_a = self.accel.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
        let hw_s = self.steer.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
        format!(
            "{} points per accel coordinate spanning +-{:.3} m/s^2, {} points per steer coordinate spanning +-{:.3} deg",
            self.accel.len(),
            hw_a,
            self.steer.len(),
            hw_s.to_degrees()
        )
    }
}

impl<T: Real> Default for ProbeDeltas<T> {
    /// 11 points per coordinate spanning +-1 m/s^2 and +-2 degrees.
    fn default() -> Self {
        Self::symmetric(T::one(), T::of(2.0f64.to_radians()), 11)
    }
}

/// Stopping rules for the best-response dynamics.
#[derive(Clone, Debug)]
pub struct NashOptions<T> {
    /// Maximum best-response sweeps over all agents.
    pub max_iterations: usize,
    /// Sup-norm action-change tolerance (steering scaled by 10).
    pub tol: T,
    /// Maximum unilateral gain accepted by the certificate.
    pub certificate_tol: T,
    pub probe: ProbeDeltas<T>,
    /// Jacobi-style simultaneous updates instead of the default sequential
    /// (Gauss-Seidel) sweep.
    pub parallel_updates: bool,
    /// Scaled sup-norm distance under which two solutions are considered the
    /// same equilibrium when deduplicating multi-start results.
    pub dedup_threshold: T,
}

impl<T: Real> Default for NashOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            tol: T::of(1e-3),
            certificate_tol: T::of(1e-3),
            probe: ProbeDeltas::default(),
            parallel_updates: false,
            dedup_threshold: T::of(0.1),
        }
    }
}

/// One agent of the full-horizon game.
#[derive(Clone, Debug)]
pub struct NashAgent<T> {
    pub id: AgentId,
    pub spec: AgentUtilitySpec<T>,
    pub initial: VehicleState<T>,
}

/// The full-horizon deterministic game: initial states, specs, and timing.
#[derive(Clone, Debug)]
pub struct NashGame<T> {
    dt: T,
    horizon: usize,
    agents: Vec<NashAgent<T>>,
}

impl<T: Real> NashGame<T> {
    pub fn new(dt: T, horizon: usize, agents: Vec<NashAgent<T>>) -> Result<Self> {
        if !dt.is_finite() || dt <= T::zero() {
            return Err(ModelError::OutOfRange { field: "dt", value: dt.as_f64(), constraint: "> 0" });
        }
        if horizon == 0 {
            return Err(ModelError::OutOfRange {
                field: "horizon",
                value: 0.0,
                constraint: ">= 1",
            });
        }
        let mut ids: Vec<usize> = agents.iter().map(|a| a.id.0).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != agents.len() {
            return Err(ModelError::OutOfRange {
                field: "agent ids",
                value: agents.len() as f64,
                constraint: "unique",
            });
        }
        for a in &agents {
            a.spec.validate()?;
        }
        Ok(Self { dt, horizon, agents })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn agents(&self) -> &[NashAgent<T>] {
        &self.agents
    }

    fn index_of(&self, id: AgentId) -> Result<usize> {
        self.agents
            .iter()
            .position(|a| a.id == id)
            .ok_or(ModelError::UnknownAgent { agent: id.0 })
    }

    fn check_sequences(&self, sequences: &[ActionSequence<T>]) -> Result<()> {
        if sequences.len() != self.agents.len() {
            return Err(ModelError::LengthMismatch {
                expected: self.agents.len(),
                got: sequences.len(),
            });
        }
        for (agent, seq) in self.agents.iter().zip(sequences) {
            if seq.agent != agent.id {
                return Err(ModelError::UnknownAgent { agent: seq.agent.0 });
            }
            if seq.actions.len() != self.horizon {
                return Err(ModelError::LengthMismatch {
                    expected: self.horizon,
                    got: seq.actions.len(),
                });
            }
        }
        Ok(())
    }

    /// All-zero initial plans, the default starting point of the dynamics.
    pub fn zero_sequences(&self) -> Vec<ActionSequence<T>> {
        self.agents.iter().map(|a| ActionSequence::zeros(a.id, self.horizon)).collect()
    }
}

/// Unilateral-deviation certificate.
#[derive(Clone, Debug)]
pub struct NashCertificate<T> {
    /// Largest utility improvement any single-coordinate probe achieved.
    pub max_unilateral_gain: T,
    /// Human-readable description of the probe grid.
    pub probe_grid: String,
    pub passed: bool,
}

/// One probe evaluation, reported for deviation-curve plots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviationSample<T> {
    pub agent: AgentId,
    pub time_index: usize,
    /// 0 = acceleration, 1 = steering.
    pub coordinate: usize,
    pub deviation: T,
    pub utility: T,
}

/// Converged (or best-effort) solution of the game.
#[derive(Clone, Debug)]
pub struct EquilibriumSolution<T> {
    pub sequences: Vec<ActionSequence<T>>,
    pub trajectories: Vec<Trajectory<T>>,
    pub iterations_used: usize,
    pub converged: bool,
    pub utilities: Vec<T>,
    pub certificate: NashCertificate<T>,
}

/// Outcome of one best-response solve.
#[derive(Clone, Debug)]
pub struct BestResponseResult<T> {
    pub sequence: ActionSequence<T>,
    pub utility: T,
    /// False when the returned sequence is the (unimproved) incumbent.
    pub improved: bool,
    /// True when any local optimization ran out of its evaluation budget.
    pub budget_exhausted: bool,
}

/// Incremental evaluator of one agent's cumulative utility against fixed
/// opponent trajectories. Changing the action at time `t` only invalidates
/// periods `t..T`, so coordinate probes cost `O(T - t)`.
struct TailEvaluator<'a, T: Real> {
    spec: &'a AgentUtilitySpec<T>,
    dt: T,
    /// `others_at[t]` holds the opponent states of period `t`.
    others_at: &'a [Vec<VehicleState<T>>],
    actions: Vec<ActionPair<T>>,
    states: Vec<VehicleState<T>>,
    per_period: Vec<T>,
    /// `prefix[t]` = sum of `per_period[0..t]`, accumulated left to right.
    prefix: Vec<T>,
    initial_prev: ActionPair<T>,
    evals: usize,
}

impl<'a, T: Real> TailEvaluator<'a, T> {
    fn new(
        spec: &'a AgentUtilitySpec<T>,
        dt: T,
        initial: VehicleState<T>,
        others_at: &'a [Vec<VehicleState<T>>],
        actions: Vec<ActionPair<T>>,
        initial_prev: ActionPair<T>,
    ) -> Self {
        let horizon = actions.len();
        let mut ev = Self {
            spec,
            dt,
            others_at,
            actions,
            states: vec![initial; horizon + 1],
            per_period: vec![T::zero(); horizon],
            prefix: vec![T::zero(); horizon + 1],
            initial_prev,
            evals: 0,
        };
        ev.recompute_from(0);
        ev
    }

    fn horizon(&self) -> usize {
        self.actions.len()
    }

    fn total(&self) -> T {
        self.prefix[self.horizon()]
    }

    fn prev_at(&self, t: usize) -> ActionPair<T> {
        if t == 0 {
            self.initial_prev
        } else {
            self.actions[t - 1]
        }
    }

    fn recompute_from(&mut self, t0: usize) {
        let horizon = self.horizon();
        for t in t0..horizon {
            let state = self.states[t];
            let action = self.actions[t];
            self.states[t + 1] =
                step(&self.spec.geometry, &state, &action, self.dt).expect("in-bounds action");
            let ctx = PeriodContext {
                own_state: state,
                own_action: action,
                prev_action: self.prev_at(t),
                others: &self.others_at[t],
            };
            self.per_period[t] = period_utility(self.spec, &ctx);
        }
        for t in t0..horizon {
            self.prefix[t + 1] = self.prefix[t] + self.per_period[t];
        }
    }

    /// Utility if the coordinate `(t, coord)` were set to `value`; the cached
    /// state is not modified.
    fn probe(&mut self, t: usize, coord: usize, value: T) -> T {
        self.evals += 1;
        let horizon = self.horizon();
        let changed = replace_coord(self.actions[t], coord, value);
        let mut total = self.prefix[t];
        let mut state = self.states[t];
        for k in t..horizon {
            let action = if k == t { changed } else { self.actions[k] };
            let prev = if k == 0 {
                self.initial_prev
            } else if k == t {
                self.prev_at(t)
            } else if k == t + 1 {
                changed
            } else {
                self.actions[k - 1]
            };
            let ctx = PeriodContext {
                own_state: state,
                own_action: action,
                prev_action: prev,
                others: &self.others_at[k],
            };
            total += period_utility(self.spec, &ctx);
            state = step(&self.spec.geometry, &state, &action, self.dt).expect("in-bounds action");
        }
        total
    }

    fn commit(&mut self, t: usize, coord: usize, value: T) {
        self.actions[t] = replace_coord(self.actions[t], coord, value);
        self.recompute_from(t);
    }
}

fn replace_coord<T: Real>(action: ActionPair<T>, coord: usize, value: T) -> ActionPair<T> {
    let (accel, steer) =
        if coord == 0 { (value, action.steer()) } else { (action.accel(), value) };
    ActionPair::new(accel, steer).expect("coordinate values stay within action bounds")
}

/// Maximize a 1-d slice of the utility: a doubling ladder in both directions
/// (so an improvement beyond a local dip is still found), then a
/// golden-section polish of the bracket around the ladder optimum.
fn maximize_coordinate<T: Real>(
    eval: &mut dyn FnMut(T) -> T,
    x0: T,
    lo: T,
    hi: T,
    base_step: T,
    xtol: T,
) -> (T, T) {
    let f0 = eval(x0);
    let mut probes: Vec<(T, T)> = vec![(x0, f0)];
    for dir in [T::one(), -T::one()] {
        let mut stride = base_step;
        loop {
            let x = (x0 + dir * stride).max(lo).min(hi);
            if probes.iter().any(|&(px, _)| px == x) {
                break;
            }
            probes.push((x, eval(x)));
            if x == lo || x == hi {
                break;
            }
            stride = stride + stride;
        }
    }
    probes.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite probe points"));
    let best_idx = probes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).expect("finite utility"))
        .map(|(i, _)| i)
        .expect("nonempty probes");
    let (mut best_x, mut best_f) = probes[best_idx];

    let mut a = if best_idx > 0 { probes[best_idx - 1].0 } else { best_x };
    let mut b = if best_idx + 1 < probes.len() { probes[best_idx + 1].0 } else { best_x };
    let inv_phi = T::of(0.618_033_988_749_894_9);
    if b - a > xtol {
        let mut m1 = b - inv_phi * (b - a);
        let mut m2 = a + inv_phi * (b - a);
        let mut f1 = eval(m1);
        let mut f2 = eval(m2);
        while b - a > xtol {
            if f1 > best_f {
                best_f = f1;
                best_x = m1;
            }
            if f2 > best_f {
                best_f = f2;
                best_x = m2;
            }
            if f1 >= f2 {
                b = m2;
                m2 = m1;
                f2 = f1;
                m1 = b - inv_phi * (b - a);
                f1 = eval(m1);
            } else {
                a = m1;
                m1 = m2;
                f1 = f2;
                m2 = a + inv_phi * (b - a);
                f2 = eval(m2);
            }
        }
    }
    (best_x, best_f)
}

/// Cyclic coordinate ascent until the largest scaled coordinate move in one
/// sweep falls below an internal tolerance or the budget runs out. Returns
/// true when the budget was exhausted.
fn local_optimize<T: Real>(ev: &mut TailEvaluator<'_, T>, cfg: &BestResponseConfig<T>) -> bool {
    let horizon = ev.horizon();
    let base_accel = T::of(0.25);
    let base_steer = T::of(0.5f64.to_radians());
    let xtol_accel = T::of(3e-3);
    let xtol_steer = T::of(2e-4);
    let sweep_tol = T::of(5e-4);
    let commit_margin = T::of(1e-9);
    let max_sweeps = 60;

    for _ in 0..max_sweeps {
        let mut moved = T::zero();
        for t in 0..horizon {
            for coord in 0..2 {
                if ev.evals >= cfg.local_opt_max_evals {
                    return true;
                }
                let (lo, hi, base, xtol, scale) = if coord == 0 {
                    (cfg.accel_bounds.0, cfg.accel_bounds.1, base_accel, xtol_accel, T::one())
                } else {
                    (cfg.steer_bounds.0, cfg.steer_bounds.1, base_steer, xtol_steer, steer_scale())
                };
                let x0 = if coord == 0 { ev.actions[t].accel() } else { ev.actions[t].steer() };
                let current_total = ev.total();
                let mut closure = |x: T| ev.probe(t, coord, x);
                let (x_best, f_best) = maximize_coordinate(&mut closure, x0, lo, hi, base, xtol);
                // commit only meaningful gains; near-flat coordinates must
                // not wander on rounding-level improvements
                if f_best > current_total + commit_margin && x_best != x0 {
                    ev.commit(t, coord, x_best);
                    moved = moved.max((x_best - x0).abs() * scale);
                }
            }
        }
        if moved < sweep_tol {
            break;
        }
    }
    false
}

fn others_period_states<T: Real>(
    game: &NashGame<T>,
    sequences: &[ActionSequence<T>],
    me: usize,
) -> Result<Vec<Vec<VehicleState<T>>>> {
    let mut rolled = Vec::new();
    for (j, agent) in game.agents.iter().enumerate() {
        if j == me {
            continue;
        }
        rolled.push(rollout(&agent.spec.geometry, &agent.initial, &sequences[j].actions, game.dt)?);
    }
    let mut per_t = vec![Vec::with_capacity(rolled.len()); game.horizon];
    for traj in &rolled {
        for (t, row) in per_t.iter_mut().enumerate() {
            row.push(traj.states()[t]);
        }
    }
    Ok(per_t)
}

fn scaled_sup_distance<T: Real>(a: &[ActionPair<T>], b: &[ActionPair<T>]) -> T {
    let mut worst = T::zero();
    for (x, y) in a.iter().zip(b) {
        worst = worst.max((x.accel() - y.accel()).abs());
        worst = worst.max((x.steer() - y.steer()).abs() * steer_scale());
    }
    worst
}

/// Best response of one agent to the fixed plans of everyone else.
///
/// Multi-start local optimization from the incumbent: the first start is the
/// incumbent itself, later starts perturb every coordinate uniformly within
/// the configured scale. A candidate replaces the incumbent only on a strict
/// utility improvement, so the result is never worse than the incumbent.
/// Running out of evaluation budget is reported in the result, not an error.
pub fn best_response<T: Real>(
    game: &NashGame<T>,
    sequences: &[ActionSequence<T>],
    agent_id: AgentId,
    cfg: &BestResponseConfig<T>,
) -> Result<BestResponseResult<T>> {
    cfg.validate()?;
    game.check_sequences(sequences)?;
    let me = game.index_of(agent_id)?;
    let others_at = others_period_states(game, sequences, me)?;
    let agent = &game.agents[me];

    let clamp = |a: T, lo: T, hi: T| a.max(lo).min(hi);
    let incumbent: Vec<ActionPair<T>> = sequences[me]
        .actions
        .iter()
        .map(|a| {
            ActionPair::new(
                clamp(a.accel(), cfg.accel_bounds.0, cfg.accel_bounds.1),
                clamp(a.steer(), cfg.steer_bounds.0, cfg.steer_bounds.1),
            )
            .expect("clamped to bounds")
        })
        .collect();

    let mut ev = TailEvaluator::new(
        &agent.spec,
        game.dt,
        agent.initial,
        &others_at,
        incumbent,
        ActionPair::zero(),
    );
    let incumbent_utility = ev.total();
    let mut budget_exhausted = local_optimize(&mut ev, cfg);
    let mut best_actions = ev.actions.clone();
    let mut best_utility = ev.total();

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.rng_seed, agent_id.0 as u64]));
    for _restart in 1..cfg.restarts {
        let perturbed: Vec<ActionPair<T>> = best_actions
            .iter()
            .map(|a| {
                let da = T::of(rng.gen_range(-1.0..=1.0)) * cfg.perturbation_accel;
                let ds = T::of(rng.gen_range(-1.0..=1.0)) * cfg.perturbation_steer;
                ActionPair::new(
                    clamp(a.accel() + da, cfg.accel_bounds.0, cfg.accel_bounds.1),
                    clamp(a.steer() + ds, cfg.steer_bounds.0, cfg.steer_bounds.1),
                )
                .expect("clamped to bounds")
            })
            .collect();
        let mut ev_r = TailEvaluator::new(
            &agent.spec,
            game.dt,
            agent.initial,
            &others_at,
            perturbed,
            ActionPair::zero(),
        );
        budget_exhausted |= local_optimize(&mut ev_r, cfg);
        // a restart replaces the incumbent only on a clear improvement, so
        // flat-utility coordinates cannot wander between sweeps
        if ev_r.total() > best_utility + T::of(1e-7) {
            best_utility = ev_r.total();
            best_actions = ev_r.actions.clone();
        }
    }

    let improved = best_utility > incumbent_utility;
    let (actions, utility) = if improved {
        (best_actions, best_utility)
    } else {
        (sequences[me].actions.clone(), incumbent_utility)
    };
    Ok(BestResponseResult {
        sequence: ActionSequence { agent: agent_id, actions },
        utility,
        improved,
        budget_exhausted,
    })
}

/// Certify a strategy profile: probe every agent, time index, and decision
/// coordinate at the configured deviation offsets and record the largest
/// unilateral utility gain.
pub fn verify_nash<T: Real>(
    game: &NashGame<T>,
    sequences: &[ActionSequence<T>],
    probe: &ProbeDeltas<T>,
    tol: T,
) -> Result<NashCertificate<T>> {
    verify_nash_detailed(game, sequences, probe, tol).map(|(cert, _)| cert)
}

/// Like [`verify_nash`], additionally returning every probe evaluation for
/// deviation-curve plots.
pub fn verify_nash_detailed<T: Real>(
    game: &NashGame<T>,
    sequences: &[ActionSequence<T>],
    probe: &ProbeDeltas<T>,
    tol: T,
) -> Result<(NashCertificate<T>, Vec<DeviationSample<T>>)> {
    game.check_sequences(sequences)?;
    let mut max_gain = T::neg_infinity();
    let mut samples = Vec::new();
    for (me, agent) in game.agents.iter().enumerate() {
        let others_at = others_period_states(game, sequences, me)?;
        let mut ev = TailEvaluator::new(
            &agent.spec,
            game.dt,
            agent.initial,
            &others_at,
            sequences[me].actions.clone(),
            ActionPair::zero(),
        );
        let base = ev.total();
        for t in 0..game.horizon {
            for (coord, deltas) in [(0usize, &probe.accel), (1usize, &probe.steer)] {
                let x0 = if coord == 0 {
                    sequences[me].actions[t].accel()
                } else {
                    sequences[me].actions[t].steer()
                };
                for &d in deltas {
                    let u = ev.probe(t, coord, x0 + d);
                    samples.push(DeviationSample {
                        agent: agent.id,
                        time_index: t,
                        coordinate: coord,
                        deviation: d,
                        utility: u,
                    });
                    max_gain = max_gain.max(u - base);
                }
            }
        }
    }
    let max_gain = if max_gain == T::neg_infinity() { T::zero() } else { max_gain };
    let cert = NashCertificate {
        max_unilateral_gain: max_gain,
        probe_grid: probe.describe(),
        passed: max_gain <= tol,
    };
    Ok((cert, samples))
}

fn finish_solution<T: Real>(
    game: &NashGame<T>,
    sequences: Vec<ActionSequence<T>>,
    iterations_used: usize,
    converged: bool,
    certificate: NashCertificate<T>,
) -> Result<EquilibriumSolution<T>> {
    let mut trajectories = Vec::with_capacity(game.agents.len());
    for (agent, seq) in game.agents.iter().zip(&sequences) {
        trajectories.push(rollout(&agent.spec.geometry, &agent.initial, &seq.actions, game.dt)?);
    }
    let mut utilities = Vec::with_capacity(game.agents.len());
    for (me, agent) in game.agents.iter().enumerate() {
        let others_at = others_period_states(game, &sequences, me)?;
        let ev = TailEvaluator::new(
            &agent.spec,
            game.dt,
            agent.initial,
            &others_at,
            sequences[me].actions.clone(),
            ActionPair::zero(),
        );
        utilities.push(ev.total());
    }
    Ok(EquilibriumSolution {
        sequences,
        trajectories,
        iterations_used,
        converged,
        utilities,
        certificate,
    })
}

/// Best-response dynamics: cycle agents in fixed id order, replacing each
/// plan with its best response to the latest opponents, until the largest
/// scaled action change over a sweep is below `opts.tol` and the certificate
/// passes, or the sweep budget is spent (in which case `converged = false`).
pub fn solve_nash<T: Real>(
    game: &NashGame<T>,
    initial_sequences: Vec<ActionSequence<T>>,
    cfg: &BestResponseConfig<T>,
    opts: &NashOptions<T>,
) -> Result<EquilibriumSolution<T>> {
    game.check_sequences(&initial_sequences)?;
    cfg.validate()?;
    if opts.max_iterations == 0 {
        return Err(ModelError::OutOfRange {
            field: "max_iterations",
            value: 0.0,
            constraint: ">= 1",
        });
    }
    let mut sequences = initial_sequences;
    let mut last_certificate: Option<NashCertificate<T>> = None;
    for sweep in 1..=opts.max_iterations {
        let reference = sequences.clone();
        // Fresh perturbation seeds every sweep keep restarts exploring even
        // when the dynamics has almost settled.
        let sweep_cfg =
            BestResponseConfig { rng_seed: mix_seed(&[cfg.rng_seed, sweep as u64]), ..cfg.clone() };
        if opts.parallel_updates {
            let mut updated = Vec::with_capacity(sequences.len());
            for agent in &game.agents {
                updated.push(best_response(game, &reference, agent.id, &sweep_cfg)?.sequence);
            }
            sequences = updated;
        } else {
            for agent in &game.agents {
                let response = best_response(game, &sequences, agent.id, &sweep_cfg)?;
                let me = game.index_of(agent.id)?;
                sequences[me] = response.sequence;
            }
        }
        let change = sequences
            .iter()
            .zip(&reference)
            .map(|(a, b)| scaled_sup_distance(&a.actions, &b.actions))
            .fold(T::zero(), T::max);
        if change < opts.tol {
            let cert = verify_nash(game, &sequences, &opts.probe, opts.certificate_tol)?;
            if cert.passed {
                return finish_solution(game, sequences, sweep, true, cert);
            }
            last_certificate = Some(cert);
        }
    }
    let cert = match last_certificate {
        Some(c) => c,
        None => verify_nash(game, &sequences, &opts.probe, opts.certificate_tol)?,
    };
    finish_solution(game, sequences, opts.max_iterations, false, cert)
}

/// The initial plans used by [`probe_equilibria`] for a given start index:
/// start 0 is the all-zero plan, later starts draw every coordinate
/// uniformly within +-2 m/s^2 and +-3 degrees.
pub fn random_start_sequences<T: Real>(
    game: &NashGame<T>,
    rng_seed: u64,
    start: usize,
) -> Vec<ActionSequence<T>> {
    if start == 0 {
        return game.zero_sequences();
    }
    let accel_span = T::of(2.0);
    let steer_span = T::of(3.0f64.to_radians());
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[rng_seed, start as u64]));
    game.agents
        .iter()
        .map(|a| ActionSequence {
            agent: a.id,
            actions: (0..game.horizon)
                .map(|_| {
                    ActionPair::new(
                        T::of(rng.gen_range(-1.0..=1.0)) * accel_span,
                        T::of(rng.gen_range(-1.0..=1.0)) * steer_span,
                    )
                    .expect("spans are within action bounds")
                })
                .collect(),
        })
        .collect()
}

/// The best-response configuration [`probe_equilibria`] uses for a start.
pub fn start_config<T: Real>(
    cfg: &BestResponseConfig<T>,
    rng_seed: u64,
    start: usize,
) -> BestResponseConfig<T> {
    BestResponseConfig { rng_seed: mix_seed(&[cfg.rng_seed, rng_seed, start as u64]), ..cfg.clone() }
}

/// Multi-start equilibrium search. The first start is the all-zero plan (so
/// `n_random_starts = 1` reproduces [`solve_nash`]); later starts use
/// [`random_start_sequences`]. Non-converged runs are dropped; converged
/// solutions within `opts.dedup_threshold` scaled sup-norm of an earlier one
/// are deduplicated.
pub fn probe_equilibria<T: Real>(
    game: &NashGame<T>,
    cfg: &BestResponseConfig<T>,
    opts: &NashOptions<T>,
    n_random_starts: usize,
    rng_seed: u64,
) -> Result<Vec<EquilibriumSolution<T>>> {
    if n_random_starts == 0 {
        return Err(ModelError::OutOfRange {
            field: "n_random_starts",
            value: 0.0,
            constraint: ">= 1",
        });
    }
    let mut solutions: Vec<EquilibriumSolution<T>> = Vec::new();
    for start in 0..n_random_starts {
        let initial = random_start_sequences(game, rng_seed, start);
        let start_cfg = start_config(cfg, rng_seed, start);
        let solution = solve_nash(game, initial, &start_cfg, opts)?;
        if !solution.converged {
            continue;
        }
        let duplicate = solutions.iter().any(|prev| {
            prev.sequences
                .iter()
                .zip(&solution.sequences)
                .map(|(a, b)| scaled_sup_distance(&a.actions, &b.actions))
                .fold(T::zero(), T::max)
                <= opts.dedup_threshold
        });
        if !duplicate {
            solutions.push(solution);
        }
    }
    Ok(solutions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::deg_to_rad;
    use crate::utility::{cumulative_utility, UtilityWeights};

    fn lone_agent_game(horizon: usize) -> NashGame<f64> {
        // w6 = 0 so that the lane center is exactly stationary; with the
        // default weights the off-road sigmoid tail pulls the optimum a few
        // tenths of a meter toward the road middle (phi5 has a double root
        // at the center, so its restoring gradient vanishes there).
        let mut spec = AgentUtilitySpec::<f64>::default();
        let mut w = spec.weights.as_array();
        w[5] = 0.0;
        spec.weights = UtilityWeights::new(w).unwrap();
        NashGame::new(
            0.2,
            horizon,
            vec![NashAgent {
                id: AgentId(0),
                spec,
                initial: VehicleState::new(-300.0, 1.85, 0.0, 31.0).unwrap(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn tail_evaluator_matches_cumulative_utility() {
        let game = lone_agent_game(12);
        let agent = &game.agents()[0];
        let actions: Vec<ActionPair<f64>> = (0..12)
            .map(|i| {
                ActionPair::new(0.3 * f64::from(i % 4) - 0.2, 0.002 * f64::from(i % 3)).unwrap()
            })
            .collect();
        let seqs = [ActionSequence { agent: AgentId(0), actions: actions.clone() }];
        let others_at = others_period_states(&game, &seqs, 0).unwrap();
        let mut ev = TailEvaluator::new(
            &agent.spec,
            0.2,
            agent.initial,
            &others_at,
            actions.clone(),
            ActionPair::zero(),
        );
        let direct = cumulative_utility(&agent.spec, &agent.initial, &actions, &[], 0.2).unwrap();
        assert_eq!(ev.total(), direct);

        let probed = ev.probe(5, 0, 1.23);
        ev.commit(5, 0, 1.23);
        assert_eq!(ev.total(), probed);
        let mut modified = actions;
        modified[5] = ActionPair::new(1.23, modified[5].steer()).unwrap();
        let direct2 =
            cumulative_utility(&agent.spec, &agent.initial, &modified, &[], 0.2).unwrap();
        assert_eq!(ev.total(), direct2);
    }

    #[test]
    fn maximize_coordinate_finds_offset_peak_across_a_dip() {
        // local max at 0, dip, then a higher peak near 2.4
        let mut f = |x: f64| -> f64 {
            let local = -x * x;
            let far = 1.5 - (x - 2.4) * (x - 2.4) * 4.0;
            local.max(far)
        };
        let (x, v) = maximize_coordinate(&mut f, 0.0, -4.0, 4.0, 0.25, 1e-4);
        assert!((x - 2.4).abs() < 1e-3, "x = {x}");
        assert!((v - 1.5).abs() < 1e-6);
    }

    #[test]
    fn single_agent_best_response_stays_near_zero_actions() {
        // Straight empty road at the speed limit: the zero plan is optimal.
        let game = lone_agent_game(3);
        let res = best_response(
            &game,
            &game.zero_sequences(),
            AgentId(0),
            &BestResponseConfig::default(),
        )
        .unwrap();
        for a in &res.sequence.actions {
            assert!(a.accel().abs() <= 0.05, "accel = {}", a.accel());
            assert!(a.steer().abs() <= deg_to_rad(0.2), "steer = {}", a.steer());
        }
    }

    #[test]
    fn zero_plan_is_grid_optimal_for_the_lone_agent() {
        // Independent coarse exhaustive oracle over a T=3 truncation: no
        // grid plan beats all-zero.
        let game = lone_agent_game(3);
        let agent = &game.agents()[0];
        let accel_grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let steer_grid = [-2.0, -1.0, 0.0, 1.0, 2.0].map(deg_to_rad);
        let mut best = f64::NEG_INFINITY;
        let mut best_actions = None;
        for combo in 0..(25usize.pow(3)) {
            let mut idx = combo;
            let mut actions = Vec::with_capacity(3);
            for _ in 0..3 {
                let a = accel_grid[idx % 5];
                let d = steer_grid[(idx / 5) % 5];
                idx /= 25;
                actions.push(ActionPair::new(a, d).unwrap());
            }
            let u = cumulative_utility(&agent.spec, &agent.initial, &actions, &[], 0.2).unwrap();
            if u > best {
                best = u;
                best_actions = Some(actions);
            }
        }
        for a in best_actions.unwrap() {
            assert_eq!(a.accel(), 0.0);
            assert_eq!(a.steer(), 0.0);
        }
    }

    #[test]
    fn best_response_never_worse_than_incumbent() {
        let game = lone_agent_game(6);
        let incumbent = ActionSequence {
            agent: AgentId(0),
            actions: vec![ActionPair::new(2.0, deg_to_rad(3.0)).unwrap(); 6],
        };
        let agent = &game.agents()[0];
        let u_inc =
            cumulative_utility(&agent.spec, &agent.initial, &incumbent.actions, &[], 0.2).unwrap();
        let res =
            best_response(&game, &[incumbent], AgentId(0), &BestResponseConfig::default()).unwrap();
        assert!(res.utility >= u_inc);
        assert!(res.improved);
    }

    #[test]
    fn t1_best_response_matches_dense_grid_scan() {
        // One period, one distant opponent: a 2-variable maximization,
        // compared against a dense grid argmax.
        let me = NashAgent {
            id: AgentId(0),
            spec: AgentUtilitySpec::default(),
            initial: VehicleState::new(0.0, 1.85, 0.0, 26.0).unwrap(),
        };
        let other = NashAgent {
            id: AgentId(1),
            spec: AgentUtilitySpec::default(),
            initial: VehicleState::new(-150.0, -1.85, 0.0, 31.0).unwrap(),
        };
        let game = NashGame::new(0.2, 1, vec![me, other]).unwrap();
        let res = best_response(
            &game,
            &game.zero_sequences(),
            AgentId(0),
            &BestResponseConfig::default(),
        )
        .unwrap();

        let agent = &game.agents()[0];
        let other_traj = rollout(
            &game.agents()[1].spec.geometry,
            &game.agents()[1].initial,
            &[ActionPair::zero()],
            0.2,
        )
        .unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        let n = 240;
        for i in 0..=n {
            let a = -8.0 + 14.0 * f64::from(i) / f64::from(n);
            for j in 0..=n {
                let d = deg_to_rad(-15.0 + 30.0 * f64::from(j) / f64::from(n));
                let u = cumulative_utility(
                    &agent.spec,
                    &agent.initial,
                    &[ActionPair::new(a, d).unwrap()],
                    std::slice::from_ref(&other_traj),
                    0.2,
                )
                .unwrap();
                if u > best.0 {
                    best = (u, a, d);
                }
            }
        }
        let cell_a = 14.0 / f64::from(n);
        let cell_d = deg_to_rad(30.0 / f64::from(n));
        assert!((res.sequence.actions[0].accel() - best.1).abs() <= cell_a, "accel");
        assert!((res.sequence.actions[0].steer() - best.2).abs() <= cell_d, "steer");
        assert!(res.utility >= best.0 - 1e-9);
    }

    fn decoupled_two_agent_game(horizon: usize) -> NashGame<f64> {
        let mut spec = AgentUtilitySpec::<f64>::default();
        let mut w = spec.weights.as_array();
        w[6] = 0.0;
        w[7] = 0.0;
        spec.weights = UtilityWeights::new(w).unwrap();
        NashGame::new(
            0.2,
            horizon,
            vec![
                NashAgent {
                    id: AgentId(0),
                    spec,
                    initial: VehicleState::new(-90.0, 1.85, 0.0, 31.0).unwrap(),
                },
                NashAgent {
                    id: AgentId(1),
                    spec,
                    initial: VehicleState::new(-80.0, -1.85, 0.0, 31.0).unwrap(),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn decoupled_game_converges_in_two_sweeps() {
        let game = decoupled_two_agent_game(5);
        let sol = solve_nash(
            &game,
            game.zero_sequences(),
            &BestResponseConfig { restarts: 1, ..BestResponseConfig::default() },
            &NashOptions::default(),
        )
        .unwrap();
        assert!(sol.converged);
        assert!(sol.iterations_used <= 2, "iterations = {}", sol.iterations_used);
        assert!(sol.certificate.passed);
    }

    #[test]
    fn solver_is_deterministic_under_fixed_seed() {
        let game = decoupled_two_agent_game(5);
        let cfg = BestResponseConfig { rng_seed: 7, ..BestResponseConfig::default() };
        let a = solve_nash(&game, game.zero_sequences(), &cfg, &NashOptions::default()).unwrap();
        let b = solve_nash(&game, game.zero_sequences(), &cfg, &NashOptions::default()).unwrap();
        assert_eq!(a.sequences, b.sequences);
        assert_eq!(a.utilities, b.utilities);
    }

    #[test]
    fn verify_detects_corrupted_coordinate() {
        let game = decoupled_two_agent_game(5);
        let sol = solve_nash(
            &game,
            game.zero_sequences(),
            &BestResponseConfig { restarts: 1, ..BestResponseConfig::default() },
            &NashOptions::default(),
        )
        .unwrap();
        let cert = verify_nash(&game, &sol.sequences, &ProbeDeltas::default(), 1e-3).unwrap();
        assert!(cert.passed);

        let mut corrupted = sol.sequences.clone();
        let a0 = corrupted[1].actions[2];
        corrupted[1].actions[2] = ActionPair::new(a0.accel() + 2.0, a0.steer()).unwrap();
        let cert = verify_nash(&game, &corrupted, &ProbeDeltas::default(), 1e-3).unwrap();
        assert!(!cert.passed);
        assert!(cert.max_unilateral_gain > 0.0);
    }

    #[test]
    fn near_zero_weights_certify_anything() {
        let mut spec = AgentUtilitySpec::<f64>::default();
        spec.weights = UtilityWeights::new([1e-300, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let game = NashGame::new(
            0.2,
            4,
            vec![NashAgent {
                id: AgentId(0),
                spec,
                initial: VehicleState::new(0.0, 1.85, 0.0, 31.0).unwrap(),
            }],
        )
        .unwrap();
        let seq = vec![ActionSequence {
            agent: AgentId(0),
            actions: vec![ActionPair::new(1.0, 0.05).unwrap(); 4],
        }];
        let cert = verify_nash(&game, &seq, &ProbeDeltas::default(), 1e-3).unwrap();
        assert!(cert.passed);
    }

    #[test]
    fn probe_single_start_equals_solve() {
        let game = decoupled_two_agent_game(4);
        let cfg = BestResponseConfig { rng_seed: 3, restarts: 1, ..BestResponseConfig::default() };
        let opts = NashOptions::default();
        let probed = probe_equilibria(&game, &cfg, &opts, 1, 99).unwrap();
        assert_eq!(probed.len(), 1);
        let direct_cfg = start_config(&cfg, 99, 0);
        let direct = solve_nash(&game, game.zero_sequences(), &direct_cfg, &opts).unwrap();
        assert_eq!(probed[0].sequences, direct.sequences);
    }

    #[test]
    fn probe_dedups_identical_solutions() {
        let game = decoupled_two_agent_game(4);
        let cfg = BestResponseConfig { restarts: 1, ..BestResponseConfig::default() };
        // The decoupled game has a unique equilibrium, so all starts collapse.
        let sols = probe_equilibria(&game, &cfg, &NashOptions::default(), 4, 5).unwrap();
        assert_eq!(sols.len(), 1);
    }

    #[test]
    fn sequence_validation_errors() {
        let game = decoupled_two_agent_game(4);
        let mut seqs = game.zero_sequences();
        seqs[0].actions.pop();
        assert!(matches!(
            best_response(&game, &seqs, AgentId(0), &BestResponseConfig::default()).unwrap_err(),
            ModelError::LengthMismatch { .. }
        ));
        let seqs = game.zero_sequences();
        assert!(matches!(
            best_response(&game, &seqs, AgentId(9), &BestResponseConfig::default()).unwrap_err(),
            ModelError::UnknownAgent { agent: 9 }
        ));
    }
}
