//! Scenario files: a human-editable TOML format with explicit units in key
//! names, validated into engine-ready configuration. Unknown keys are
//! rejected; all angles in files are degrees, all internal angles radians.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use traffic_game::adaptive::{
    ActionGrid, NoiseDistribution, NoiseModel, World, WorldAgent,
};
use traffic_game::anticipation::{AggregationRule, Aggregators, AnticipationConfig};
use traffic_game::dynamics::{VehicleGeometry, VehicleState};
use traffic_game::nash::{BestResponseConfig, NashAgent, NashGame, NashOptions, ProbeDeltas};
use traffic_game::scalar::deg_to_rad;
use traffic_game::utility::{AgentUtilitySpec, Feature, UtilityParams, UtilityWeights};
use traffic_game::{AgentId, Barrier, Lanes};

/// Raw scenario file model (exactly what the TOML contains).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub dt_s: f64,
    pub steps: usize,
    pub lanes_y_m: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<BarrierBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anticipation: Option<AnticipationBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defaults: Option<AgentDefaults>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverBlock>,
    pub agents: Vec<AgentBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierBlock {
    pub x_m: f64,
    pub blocked_lane_y_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnticipationBlock {
    #[serde(default = "default_horizon")]
    pub horizon_steps: usize,
    #[serde(default = "default_stanley_gain")]
    pub stanley_gain: f64,
    #[serde(default = "default_persistence_fraction")]
    pub persistence_fraction: f64,
    #[serde(default = "default_crossing_threshold")]
    pub crossing_threshold_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregators: Option<AggregatorBlock>,
}

fn default_horizon() -> usize {
    15
}
fn default_stanley_gain() -> f64 {
    0.15
}
fn default_persistence_fraction() -> f64 {
    1.0 / 15.0
}
fn default_crossing_threshold() -> f64 {
    0.5
}

impl Default for AnticipationBlock {
    fn default() -> Self {
        Self {
            horizon_steps: default_horizon(),
            stanley_gain: default_stanley_gain(),
            persistence_fraction: default_persistence_fraction(),
            crossing_threshold_m: default_crossing_threshold(),
            aggregators: None,
        }
    }
}

/// Optional per-feature aggregation override; values are
/// `"mean-over-h"`, `"first-period"`, or `"max-over-h"`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi3: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi4: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi5: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi6: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi7: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi8: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    /// "none" or "gaussian-iid".
    pub distribution: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sigma_x_m: f64,
    #[serde(default)]
    pub sigma_y_m: f64,
    #[serde(default)]
    pub sigma_psi_deg: f64,
    #[serde(default)]
    pub sigma_v_mps: f64,
    #[serde(default)]
    pub sigma_alpha_mps2: f64,
    #[serde(default)]
    pub sigma_steer_deg: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityBlock {
    pub speed_limit_mps: f64,
    pub accel_max_mps2: f64,
    pub accel_min_mps2: f64,
    pub kappa4: f64,
    pub lane_width_m: f64,
    pub kappa6_per_m: f64,
    pub crash_lx_m: f64,
    pub crash_ly_m: f64,
    pub kappa7x_per_m: f64,
    pub kappa7y_per_m: f64,
    pub coll_lx_m: f64,
    pub coll_ly_m: f64,
    pub kappa8x_per_m: f64,
    pub kappa8y_per_m: f64,
}

impl Default for UtilityBlock {
    fn default() -> Self {
        Self {
            speed_limit_mps: 31.0,
            accel_max_mps2: 4.0,
            accel_min_mps2: -5.0,
            kappa4: 15.0,
            lane_width_m: 3.7,
            kappa6_per_m: 3.0,
            crash_lx_m: 5.0,
            crash_ly_m: 1.0,
            kappa7x_per_m: 2.0,
            kappa7y_per_m: 20.0,
            coll_lx_m: 10.0,
            coll_ly_m: 2.0,
            kappa8x_per_m: 0.5,
            kappa8y_per_m: 9.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsBlock {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
    pub w6: f64,
    pub w7: f64,
    pub w8: f64,
}

impl Default for WeightsBlock {
    fn default() -> Self {
        Self { w1: 1.0, w2: -0.01, w3: -1.5, w4: -1.0, w5: -0.3, w6: -24.0, w7: -20.0, w8: -14.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub wheelbase_m: f64,
    pub cg_to_rear_m: f64,
    pub body_width_m: f64,
    pub body_length_m: f64,
}

impl Default for GeometryBlock {
    fn default() -> Self {
        Self { wheelbase_m: 2.88, cg_to_rear_m: 1.44, body_width_m: 2.0, body_length_m: 4.5 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nash: Option<NashBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NashBlock {
    pub restarts: usize,
    pub perturbation_alpha_mps2: f64,
    pub perturbation_steer_deg: f64,
    pub local_opt_max_evals: usize,
    pub alpha_min_mps2: f64,
    pub alpha_max_mps2: f64,
    pub steer_min_deg: f64,
    pub steer_max_deg: f64,
    pub max_iterations: usize,
    pub tol: f64,
    pub certificate_tol: f64,
    pub probe_points: usize,
    pub probe_alpha_mps2: f64,
    pub probe_steer_deg: f64,
    pub parallel_updates: bool,
    pub dedup_threshold: f64,
    pub seed: u64,
}

impl Default for NashBlock {
    fn default() -> Self {
        Self {
            restarts: 2,
            perturbation_alpha_mps2: 0.5,
            perturbation_steer_deg: 2.0,
            local_opt_max_evals: 120_000,
            alpha_min_mps2: -8.0,
            alpha_max_mps2: 6.0,
            steer_min_deg: -15.0,
            steer_max_deg: 15.0,
            max_iterations: 60,
            tol: 1e-3,
            certificate_tol: 1e-3,
            probe_points: 11,
            probe_alpha_mps2: 1.0,
            probe_steer_deg: 2.0,
            parallel_updates: false,
            dedup_threshold: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveBlock {
    /// Crash-halo reach override for the adaptive solver (risk premium is
    /// enlarged relative to the full-horizon solver).
    pub crash_lx_m: Option<f64>,
    pub neighbor_radius_m: f64,
    pub grid_alpha_min_mps2: f64,
    pub grid_alpha_step_mps2: f64,
    pub grid_alpha_count: usize,
    pub grid_steer_min_deg: f64,
    pub grid_steer_step_deg: f64,
    pub grid_steer_count: usize,
}

impl Default for AdaptiveBlock {
    fn default() -> Self {
        Self {
            crash_lx_m: None,
            neighbor_radius_m: 60.0,
            grid_alpha_min_mps2: -6.0,
            grid_alpha_step_mps2: 0.5,
            grid_alpha_count: 23,
            grid_steer_min_deg: -10.0,
            grid_steer_step_deg: 0.25,
            grid_steer_count: 81,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentBlock {
    pub id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub psi_deg: f64,
    pub v_mps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_tick: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_tick: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryBlock>,
}

/// A fully validated scenario, ready to drive either solver.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub fingerprint: String,
    pub dt: f64,
    pub steps: usize,
    pub lanes: Lanes<f64>,
    pub barrier: Option<Barrier<f64>>,
    pub agent_names: Vec<String>,
    pub anticipation: AnticipationConfig<f64>,
    pub aggregators: Aggregators,
    pub noise: NoiseModel<f64>,
    pub nash_cfg: BestResponseConfig<f64>,
    pub nash_opts: NashOptions<f64>,
    adaptive_block: AdaptiveBlock,
    base_specs: Vec<AgentUtilitySpec<f64>>,
    initial_states: Vec<VehicleState<f64>>,
    entries: Vec<(usize, Option<usize>)>,
}

/// Content fingerprint: SHA-256 over the canonical JSON rendering of the
/// parsed file (object keys sorted), so key order in the TOML cannot change
/// the hash.
pub fn fingerprint(file: &ScenarioFile) -> String {
    let value = serde_json::to_value(file).expect("scenario serializes");
    let canonical = serde_json::to_string(&value).expect("canonical json");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn parse_rule(name: &str, value: &str) -> Result<AggregationRule> {
    match value {
        "mean-over-h" => Ok(AggregationRule::MeanOverHorizon),
        "first-period" => Ok(AggregationRule::FirstPeriod),
        "max-over-h" => Ok(AggregationRule::MaxOverHorizon),
        other => bail!(
            "anticipation.aggregators.{name}: unknown rule {other:?} \
             (expected \"mean-over-h\", \"first-period\", or \"max-over-h\")"
        ),
    }
}

fn build_aggregators(block: Option<&AggregatorBlock>) -> Result<Aggregators> {
    let mut aggs = Aggregators::default();
    let Some(block) = block else { return Ok(aggs) };
    let entries: [(&str, &Option<String>, Feature); 8] = [
        ("phi1", &block.phi1, Feature::Forward),
        ("phi2", &block.phi2, Feature::AccelSmoothness),
        ("phi3", &block.phi3, Feature::SteerSmoothness),
        ("phi4", &block.phi4, Feature::HardAccel),
        ("phi5", &block.phi5, Feature::LaneDeparture),
        ("phi6", &block.phi6, Feature::OffRoad),
        ("phi7", &block.phi7, Feature::Crash),
        ("phi8", &block.phi8, Feature::Collision),
    ];
    for (name, value, feature) in entries {
        if let Some(value) = value {
            aggs = aggs.with_rule(feature, parse_rule(name, value)?);
        }
    }
    Ok(aggs)
}

fn build_spec(
    agent: &AgentBlock,
    defaults: Option<&AgentDefaults>,
    barrier: Option<&BarrierBlock>,
) -> Result<AgentUtilitySpec<f64>> {
    let utility = agent
        .utility
        .clone()
        .or_else(|| defaults.and_then(|d| d.utility.clone()))
        .unwrap_or_default();
    let weights = agent
        .weights
        .clone()
        .or_else(|| defaults.and_then(|d| d.weights.clone()))
        .unwrap_or_default();
    let geometry = agent
        .geometry
        .clone()
        .or_else(|| defaults.and_then(|d| d.geometry.clone()))
        .unwrap_or_default();

    if barrier.is_none() && weights.w7 != 0.0 {
        bail!(
            "agent {:?}: weights.w7 = {} but the scenario has no barrier; set w7 = 0",
            agent.id,
            weights.w7
        );
    }

    let params = UtilityParams {
        speed_limit: utility.speed_limit_mps,
        accel_max: utility.accel_max_mps2,
        accel_min: utility.accel_min_mps2,
        kappa4: utility.kappa4,
        lane_width: utility.lane_width_m,
        kappa6: utility.kappa6_per_m,
        crash_lx: utility.crash_lx_m,
        crash_ly: utility.crash_ly_m,
        kappa7x: utility.kappa7x_per_m,
        kappa7y: utility.kappa7y_per_m,
        coll_lx: utility.coll_lx_m,
        coll_ly: utility.coll_ly_m,
        kappa8x: utility.kappa8x_per_m,
        kappa8y: utility.kappa8y_per_m,
        barrier_x: barrier.map(|b| b.x_m).unwrap_or(0.0),
    };
    params.validate().map_err(|e| anyhow!("agent {:?}: utility params: {e}", agent.id))?;
    let weights = UtilityWeights::new([
        weights.w1, weights.w2, weights.w3, weights.w4, weights.w5, weights.w6, weights.w7,
        weights.w8,
    ])
    .map_err(|e| anyhow!("agent {:?}: weights: {e}", agent.id))?;
    let geometry = VehicleGeometry::new(
        geometry.wheelbase_m,
        geometry.cg_to_rear_m,
        geometry.body_width_m,
        geometry.body_length_m,
    )
    .map_err(|e| anyhow!("agent {:?}: geometry: {e}", agent.id))?;
    Ok(AgentUtilitySpec { params, weights, geometry })
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        if file.steps == 0 {
            bail!("steps must be >= 1");
        }
        if !(file.dt_s.is_finite() && file.dt_s > 0.0) {
            bail!("dt_s must be > 0");
        }
        if file.agents.is_empty() {
            bail!("at least one agent is required");
        }
        let mut seen = BTreeSet::new();
        for a in &file.agents {
            if !seen.insert(a.id.clone()) {
                bail!("duplicate agent id {:?}", a.id);
            }
        }
        let lanes = Lanes::new(file.lanes_y_m.clone())
            .map_err(|e| anyhow!("lanes_y_m: {e}"))?;
        let barrier = match &file.barrier {
            None => None,
            Some(b) => {
                if !file.lanes_y_m.iter().any(|c| (c - b.blocked_lane_y_m).abs() < 1e-9) {
                    bail!(
                        "barrier.blocked_lane_y_m = {} does not match any lane center",
                        b.blocked_lane_y_m
                    );
                }
                if (b.blocked_lane_y_m - lanes.bottom()).abs() > 1e-9 {
                    bail!(
                        "barrier.blocked_lane_y_m = {}: the crash halo's lateral form only \
                         supports blocking the bottom lane ({})",
                        b.blocked_lane_y_m,
                        lanes.bottom()
                    );
                }
                Some(Barrier { x: b.x_m, blocked_lane_y: b.blocked_lane_y_m })
            }
        };

        let ab = file.anticipation.clone().unwrap_or_default();
        let anticipation = AnticipationConfig {
            horizon: ab.horizon_steps,
            stanley_gain: ab.stanley_gain,
            persistence_fraction: ab.persistence_fraction,
            crossing_threshold: ab.crossing_threshold_m,
        };
        anticipation.validate().map_err(|e| anyhow!("anticipation: {e}"))?;
        let aggregators = build_aggregators(ab.aggregators.as_ref())?;

        let noise = match &file.noise {
            None => NoiseModel::disabled(),
            Some(n) => {
                let distribution = match n.distribution.as_str() {
                    "none" => NoiseDistribution::None,
                    "gaussian-iid" => NoiseDistribution::GaussianIid,
                    other => bail!(
                        "noise.distribution: unknown value {other:?} \
                         (expected \"none\" or \"gaussian-iid\")"
                    ),
                };
                let model = NoiseModel {
                    distribution,
                    state_sigma: [
                        n.sigma_x_m,
                        n.sigma_y_m,
                        deg_to_rad(n.sigma_psi_deg),
                        n.sigma_v_mps,
                    ],
                    action_sigma: [n.sigma_alpha_mps2, deg_to_rad(n.sigma_steer_deg)],
                    rng_seed: n.seed,
                };
                model.validate().map_err(|e| anyhow!("noise: {e}"))?;
                model
            }
        };

        let solver = file.solver.clone().unwrap_or_default();
        let nb = solver.nash.unwrap_or_default();
        let nash_cfg = BestResponseConfig {
            restarts: nb.restarts,
            perturbation_accel: nb.perturbation_alpha_mps2,
            perturbation_steer: deg_to_rad(nb.perturbation_steer_deg),
            local_opt_max_evals: nb.local_opt_max_evals,
            accel_bounds: (nb.alpha_min_mps2, nb.alpha_max_mps2),
            steer_bounds: (deg_to_rad(nb.steer_min_deg), deg_to_rad(nb.steer_max_deg)),
            rng_seed: nb.seed,
        };
        nash_cfg.validate().map_err(|e| anyhow!("solver.nash: {e}"))?;
        let nash_opts = NashOptions {
            max_iterations: nb.max_iterations,
            tol: nb.tol,
            certificate_tol: nb.certificate_tol,
            probe: ProbeDeltas::symmetric(
                nb.probe_alpha_mps2,
                deg_to_rad(nb.probe_steer_deg),
                nb.probe_points,
            ),
            parallel_updates: nb.parallel_updates,
            dedup_threshold: nb.dedup_threshold,
        };
        let adaptive_block = solver.adaptive.unwrap_or_default();

        let mut base_specs = Vec::with_capacity(file.agents.len());
        let mut initial_states = Vec::with_capacity(file.agents.len());
        let mut entries = Vec::with_capacity(file.agents.len());
        let mut agent_names = Vec::with_capacity(file.agents.len());
        for a in &file.agents {
            base_specs.push(build_spec(a, file.defaults.as_ref(), file.barrier.as_ref())?);
            initial_states.push(
                VehicleState::new(a.x_m, a.y_m, deg_to_rad(a.psi_deg), a.v_mps)
                    .map_err(|e| anyhow!("agent {:?}: initial state: {e}", a.id))?,
            );
            let entry = a.entry_tick.unwrap_or(0);
            if let Some(exit) = a.exit_tick {
                if exit <= entry || exit > file.steps {
                    bail!("agent {:?}: exit_tick must satisfy entry < exit <= steps", a.id);
                }
            }
            if entry >= file.steps {
                bail!("agent {:?}: entry_tick must be < steps", a.id);
            }
            entries.push((entry, a.exit_tick));
            agent_names.push(a.id.clone());
        }

        let fingerprint = fingerprint(&file);
        Ok(Self {
            dt: file.dt_s,
            steps: file.steps,
            lanes,
            barrier,
            agent_names,
            anticipation,
            aggregators,
            noise,
            nash_cfg,
            nash_opts,
            adaptive_block,
            base_specs,
            initial_states,
            entries,
            fingerprint,
            file,
        })
    }

    pub fn agent_id_of(&self, name: &str) -> Option<AgentId> {
        self.agent_names.iter().position(|n| n == name).map(AgentId)
    }

    /// Initial state of one agent (internal radians).
    pub fn initial_state(&self, index: usize) -> VehicleState<f64> {
        self.initial_states[index]
    }

    pub fn base_spec(&self, index: usize) -> &AgentUtilitySpec<f64> {
        &self.base_specs[index]
    }

    /// The full-horizon game. Requires every agent present over the whole
    /// horizon (the agent count is fixed in the game formulation).
    pub fn nash_game(&self) -> Result<NashGame<f64>> {
        for (name, (entry, exit)) in self.agent_names.iter().zip(&self.entries) {
            if *entry != 0 || exit.map(|e| e != self.steps).unwrap_or(false) {
                bail!(
                    "agent {name:?} enters or leaves mid-run; the full-horizon solver needs \
                     every agent present for the whole run"
                );
            }
        }
        let agents = self
            .agent_names
            .iter()
            .enumerate()
            .map(|(i, _)| NashAgent {
                id: AgentId(i),
                spec: self.base_specs[i],
                initial: self.initial_states[i],
            })
            .collect();
        NashGame::new(self.dt, self.steps, agents).map_err(|e| anyhow!("nash game: {e}"))
    }

    /// The closed-loop world for the adaptive solver, with the adaptive
    /// crash-halo override applied.
    pub fn adaptive_world(&self) -> Result<World<f64>> {
        let ab = &self.adaptive_block;
        let grid = ActionGrid::new(
            (0..ab.grid_alpha_count)
                .map(|i| ab.grid_alpha_min_mps2 + ab.grid_alpha_step_mps2 * i as f64)
                .collect(),
            (0..ab.grid_steer_count)
                .map(|i| deg_to_rad(ab.grid_steer_min_deg + ab.grid_steer_step_deg * i as f64))
                .collect(),
        )
        .map_err(|e| anyhow!("solver.adaptive grid: {e}"))?;
        let agents = self
            .agent_names
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let mut spec = self.base_specs[i];
                if let Some(lx) = ab.crash_lx_m {
                    spec.params.crash_lx = lx;
                }
                WorldAgent {
                    id: AgentId(i),
                    spec,
                    initial: self.initial_states[i],
                    entry_tick: self.entries[i].0,
                    exit_tick: self.entries[i].1,
                }
            })
            .collect();
        let world = World {
            dt: self.dt,
            ticks: self.steps,
            lanes: self.lanes.clone(),
            barrier: self.barrier,
            anticipation: self.anticipation,
            aggregators: self.aggregators,
            grid,
            neighbor_radius: ab.neighbor_radius_m,
            agents,
        };
        world.validate().map_err(|e| anyhow!("adaptive world: {e}"))?;
        Ok(world)
    }
}

/// Parse and validate a scenario from TOML text.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| anyhow!("{origin}: parse error: {e}"))?;
    Scenario::from_file(file).with_context(|| format!("{origin}: invalid scenario"))
}

/// Bundled scenarios shipped with the binary.
pub const BUNDLED: [(&str, &str); 3] = [
    ("ic1", include_str!("../scenarios/ic1.toml")),
    ("ic2", include_str!("../scenarios/ic2.toml")),
    ("smoke", include_str!("../scenarios/smoke.toml")),
];

/// Load a scenario from a bundled name (`ic1`, `ic2`, `smoke`) or a path.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    for (name, text) in BUNDLED {
        if name == name_or_path {
            return parse_scenario(text, &format!("bundled scenario {name:?}"));
        }
    }
    let path = Path::new(name_or_path);
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario file {}", path.display()))?;
    parse_scenario(&text, &path.display().to_string())
}

/// Canonical TOML rendering of the parsed scenario (used by the exporter;
/// reloading it reproduces an identical scenario and fingerprint).
pub fn render_scenario(file: &ScenarioFile) -> String {
    toml::to_string_pretty(file).expect("scenario file serializes to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, _) in BUNDLED {
            let sc = load_scenario(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(sc.steps >= 1);
            sc.adaptive_world().unwrap();
        }
    }

    #[test]
    fn ic1_matches_published_numbers() {
        let sc = load_scenario("ic1").unwrap();
        assert_eq!(sc.dt, 0.2);
        assert_eq!(sc.steps, 40);
        let open = sc.agent_id_of("open").unwrap();
        let blocked = sc.agent_id_of("blocked").unwrap();
        let s_open = sc.initial_state(open.0);
        let s_blocked = sc.initial_state(blocked.0);
        assert_eq!((s_open.x(), s_open.y(), s_open.speed()), (-90.0, 1.85, 31.0));
        assert_eq!((s_blocked.x(), s_blocked.y(), s_blocked.speed()), (-80.0, -1.85, 31.0));
        assert_eq!(sc.anticipation.horizon, 15);
        // adaptive crash-halo override
        let world = sc.adaptive_world().unwrap();
        assert_eq!(world.agents[0].spec.params.crash_lx, 10.0);
        assert_eq!(sc.base_spec(0).params.crash_lx, 5.0);
    }

    #[test]
    fn ic2_puts_both_vehicles_at_same_x() {
        let sc = load_scenario("ic2").unwrap();
        assert_eq!(sc.initial_state(0).x(), -80.0);
        assert_eq!(sc.initial_state(1).x(), -80.0);
    }

    #[test]
    fn zero_steps_rejected() {
        let text = "dt_s = 0.2\nsteps = 0\nlanes_y_m = [1.85, -1.85]\n\n[[agents]]\nid = \"a\"\nx_m = 0.0\ny_m = 1.85\npsi_deg = 0.0\nv_mps = 31.0\n";
        // w7 defaults nonzero with no barrier is also rejected; steps first.
        let err = parse_scenario(text, "test").unwrap_err();
        assert!(format!("{err:#}").contains("steps"), "{err:#}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "dt_s = 0.2\nsteps = 4\nlanes_y_m = [1.85, -1.85]\nbogus = 1\n\n[[agents]]\nid = \"a\"\nx_m = 0.0\ny_m = 1.85\npsi_deg = 0.0\nv_mps = 31.0\n";
        let err = parse_scenario(text, "test").unwrap_err();
        assert!(format!("{err:#}").contains("bogus"), "{err:#}");
    }

    #[test]
    fn missing_barrier_requires_zero_w7() {
        let text = "dt_s = 0.2\nsteps = 4\nlanes_y_m = [1.85, -1.85]\n\n[[agents]]\nid = \"a\"\nx_m = 0.0\ny_m = 1.85\npsi_deg = 0.0\nv_mps = 31.0\n";
        let err = parse_scenario(text, "test").unwrap_err();
        assert!(format!("{err:#}").contains("w7"), "{err:#}");
    }

    #[test]
    fn fingerprint_is_stable_under_key_reordering() {
        let a = "dt_s = 0.2\nsteps = 4\nlanes_y_m = [1.85, -1.85]\n\n[barrier]\nx_m = 0.0\nblocked_lane_y_m = -1.85\n\n[[agents]]\nid = \"a\"\nx_m = 0.0\ny_m = 1.85\npsi_deg = 0.0\nv_mps = 31.0\n";
        let b = "steps = 4\nlanes_y_m = [1.85, -1.85]\ndt_s = 0.2\n\n[barrier]\nblocked_lane_y_m = -1.85\nx_m = 0.0\n\n[[agents]]\nv_mps = 31.0\nid = \"a\"\ny_m = 1.85\nx_m = 0.0\npsi_deg = 0.0\n";
        let sa = parse_scenario(a, "a").unwrap();
        let sb = parse_scenario(b, "b").unwrap();
        assert_eq!(sa.fingerprint, sb.fingerprint);
        assert_eq!(sa.fingerprint.len(), 64);
    }

    #[test]
    fn render_round_trips_with_equal_fingerprint() {
        let sc = load_scenario("ic1").unwrap();
        let rendered = render_scenario(&sc.file);
        let reloaded = parse_scenario(&rendered, "rendered").unwrap();
        assert_eq!(sc.file, reloaded.file);
        assert_eq!(sc.fingerprint, reloaded.fingerprint);
    }

    #[test]
    fn aggregator_overrides_parse() {
        let text = "dt_s = 0.2\nsteps = 4\nlanes_y_m = [1.85, -1.85]\n\n[barrier]\nx_m = 0.0\nblocked_lane_y_m = -1.85\n\n[anticipation]\n[anticipation.aggregators]\nphi4 = \"mean-over-h\"\nphi6 = \"first-period\"\n\n[[agents]]\nid = \"a\"\nx_m = 0.0\ny_m = 1.85\npsi_deg = 0.0\nv_mps = 31.0\n";
        let sc = parse_scenario(text, "test").unwrap();
        assert_eq!(sc.aggregators.rule(Feature::HardAccel), AggregationRule::MeanOverHorizon);
        assert_eq!(sc.aggregators.rule(Feature::OffRoad), AggregationRule::FirstPeriod);
        let bad = text.replace("mean-over-h", "sometimes");
        assert!(parse_scenario(&bad, "test").is_err());
    }

    #[test]
    fn mid_run_agents_refuse_the_full_horizon_solver() {
        let text = "dt_s = 0.2\nsteps = 10\nlanes_y_m = [1.85, -1.85]\n\n[barrier]\nx_m = 0.0\nblocked_lane_y_m = -1.85\n\n[[agents]]\nid = \"a\"\nx_m = 0.0\ny_m = 1.85\npsi_deg = 0.0\nv_mps = 31.0\nentry_tick = 2\n";
        let sc = parse_scenario(text, "test").unwrap();
        assert!(sc.nash_game().is_err());
        assert!(sc.adaptive_world().is_ok());
    }
}
