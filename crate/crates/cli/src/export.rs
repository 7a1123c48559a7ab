//! Result export and re-loading: CSV tables, machine-precision run metadata,
//! plot data, and static SVG renderings.
//!
//! The CSV tables use degree angles (file convention); `run.json` carries the
//! exact binary-faithful radian action sequences, so a re-rollout of an
//! exported run reproduces the trajectory table bit for bit.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use traffic_game::adaptive::{SimEvent, SimulationResult};
use traffic_game::dynamics::{rollout, ActionPair, Trajectory, VehicleState};
use traffic_game::nash::{DeviationSample, EquilibriumSolution};
use traffic_game::scalar::rad_to_deg;
use traffic_game::utility::Feature;

use crate::plot;
use crate::scenario::{render_scenario, Scenario};

/// The fixed header of the trajectory table.
pub const TRAJECTORY_HEADER: [&str; 9] =
    ["tick", "time_s", "agent", "x_m", "y_m", "psi_deg", "v_mps", "alpha_mps2", "delta_deg"];

/// Run metadata: everything needed to reproduce, verify, and compare a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    /// "nash" or "adaptive".
    pub solver: String,
    pub scenario_fingerprint: String,
    pub wall_time_s: f64,
    pub seed: u64,
    pub dt_s: f64,
    pub steps: usize,
    pub agents: Vec<AgentMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nash: Option<NashMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveMeta>,
}

/// Exact (radian) per-agent record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentMeta {
    pub name: String,
    pub index: usize,
    pub entry_tick: usize,
    pub exit_tick: usize,
    /// x, y, heading (rad), speed at entry.
    pub initial: [f64; 4],
    /// Realized (accel, steer-rad) sequence driving the trajectory.
    pub actions: Vec<[f64; 2]>,
    /// Pre-noise grid optima (adaptive runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_actions: Option<Vec<[f64; 2]>>,
    /// Cumulative utility at the solution (full-horizon runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NashMeta {
    pub converged: bool,
    pub iterations_used: usize,
    pub tol: f64,
    pub certificate_tol: f64,
    pub certificate_passed: bool,
    pub max_unilateral_gain: f64,
    pub probe_grid: String,
    pub probe_points: usize,
    pub probe_alpha_mps2: f64,
    pub probe_steer_deg: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaptiveMeta {
    pub event_count: usize,
    pub calamity_count: usize,
}

fn fmt(v: f64) -> String {
    // shortest round-trip decimal; exact on reparse
    format!("{v}")
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

struct AgentExport<'a> {
    name: &'a str,
    entry_tick: usize,
    trajectory: &'a Trajectory<f64>,
    realized: &'a [ActionPair<f64>],
}

fn trajectory_rows(dt: f64, agents: &[AgentExport<'_>]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for a in agents {
        for (k, s) in a.trajectory.states().iter().enumerate() {
            let tick = a.entry_tick + k;
            let (alpha, delta) = match a.realized.get(k) {
                Some(act) => (fmt(act.accel()), fmt(rad_to_deg(act.steer()))),
                None => (String::new(), String::new()),
            };
            rows.push(vec![
                tick.to_string(),
                fmt(tick as f64 * dt),
                a.name.to_string(),
                fmt(s.x()),
                fmt(s.y()),
                fmt(rad_to_deg(s.heading())),
                fmt(s.speed()),
                alpha,
                delta,
            ]);
        }
    }
    rows
}

fn action_rows(dt: f64, agents: &[AgentExport<'_>]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for a in agents {
        for (k, act) in a.realized.iter().enumerate() {
            let tick = a.entry_tick + k;
            rows.push(vec![
                tick.to_string(),
                fmt(tick as f64 * dt),
                a.name.to_string(),
                fmt(act.accel()),
                fmt(rad_to_deg(act.steer())),
            ]);
        }
    }
    rows
}

fn write_common(
    out_dir: &Path,
    scenario: &Scenario,
    meta: &RunMeta,
    agents: &[AgentExport<'_>],
) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    fs::create_dir_all(out_dir.join("plots"))?;
    fs::write(out_dir.join("scenario.toml"), render_scenario(&scenario.file))?;
    fs::write(out_dir.join("run.json"), serde_json::to_string_pretty(meta)?)?;
    write_csv(
        &out_dir.join("trajectories.csv"),
        &TRAJECTORY_HEADER,
        &trajectory_rows(scenario.dt, agents),
    )?;
    write_csv(
        &out_dir.join("actions.csv"),
        &["tick", "time_s", "agent", "alpha_mps2", "delta_deg"],
        &action_rows(scenario.dt, agents),
    )?;
    let traj_plot: Vec<plot::AgentPath> = agents
        .iter()
        .map(|a| plot::AgentPath {
            name: a.name.to_string(),
            states: a.trajectory.states().to_vec(),
        })
        .collect();
    fs::write(
        out_dir.join("plots").join("trajectories.svg"),
        plot::trajectories_svg(&traj_plot, scenario.lanes.centers(), scenario.barrier.as_ref(), scenario.dt),
    )?;
    let action_plot: Vec<plot::AgentActions> = agents
        .iter()
        .map(|a| plot::AgentActions {
            name: a.name.to_string(),
            entry_tick: a.entry_tick,
            actions: a.realized.to_vec(),
        })
        .collect();
    fs::write(
        out_dir.join("plots").join("actions.svg"),
        plot::actions_svg(&action_plot, scenario.dt),
    )?;
    Ok(())
}

/// Export a full-horizon equilibrium run.
pub fn export_nash_run(
    out_dir: &Path,
    scenario: &Scenario,
    solution: &EquilibriumSolution<f64>,
    samples: &[DeviationSample<f64>],
    wall_time_s: f64,
    seed: u64,
) -> Result<()> {
    let nb = scenario.file.solver.clone().unwrap_or_default().nash.unwrap_or_default();
    let meta = RunMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        solver: "nash".to_string(),
        scenario_fingerprint: scenario.fingerprint.clone(),
        wall_time_s,
        seed,
        dt_s: scenario.dt,
        steps: scenario.steps,
        agents: scenario
            .agent_names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let s0 = scenario.initial_state(i);
                AgentMeta {
                    name: name.clone(),
                    index: i,
                    entry_tick: 0,
                    exit_tick: scenario.steps,
                    initial: [s0.x(), s0.y(), s0.heading(), s0.speed()],
                    actions: solution.sequences[i]
                        .actions
                        .iter()
                        .map(|a| [a.accel(), a.steer()])
                        .collect(),
                    chosen_actions: None,
                    utility: Some(solution.utilities[i]),
                }
            })
            .collect(),
        nash: Some(NashMeta {
            converged: solution.converged,
            iterations_used: solution.iterations_used,
            tol: scenario.nash_opts.tol,
            certificate_tol: scenario.nash_opts.certificate_tol,
            certificate_passed: solution.certificate.passed,
            max_unilateral_gain: solution.certificate.max_unilateral_gain,
            probe_grid: solution.certificate.probe_grid.clone(),
            probe_points: nb.probe_points,
            probe_alpha_mps2: nb.probe_alpha_mps2,
            probe_steer_deg: nb.probe_steer_deg,
        }),
        adaptive: None,
    };
    let agents: Vec<AgentExport<'_>> = scenario
        .agent_names
        .iter()
        .enumerate()
        .map(|(i, name)| AgentExport {
            name,
            entry_tick: 0,
            trajectory: &solution.trajectories[i],
            realized: &solution.sequences[i].actions,
        })
        .collect();
    write_common(out_dir, scenario, &meta, &agents)?;
    write_deviation_curves(out_dir, scenario, samples)?;
    Ok(())
}

fn write_deviation_curves(
    out_dir: &Path,
    scenario: &Scenario,
    samples: &[DeviationSample<f64>],
) -> Result<()> {
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            let (coord, dev) = if s.coordinate == 0 {
                ("alpha_mps2", fmt(s.deviation))
            } else {
                ("delta_deg", fmt(rad_to_deg(s.deviation)))
            };
            vec![
                scenario.agent_names[s.agent.0].clone(),
                s.time_index.to_string(),
                coord.to_string(),
                dev,
                fmt(s.utility),
            ]
        })
        .collect();
    write_csv(
        &out_dir.join("deviation_curves.csv"),
        &["agent", "time_index", "coordinate", "deviation", "utility"],
        &rows,
    )?;
    fs::write(
        out_dir.join("plots").join("deviation_curves.svg"),
        plot::deviation_svg(samples, scenario.steps),
    )?;
    Ok(())
}

fn event_label(e: &SimEvent<f64>) -> (usize, String, String, String) {
    match e {
        SimEvent::SpeedClamped { agent, tick } => {
            (*tick, agent.0.to_string(), "speed-clamped".into(), String::new())
        }
        SimEvent::Calamity { agent, tick, feature, value } => {
            let f = match feature {
                Feature::Crash => "crash",
                Feature::Collision => "collision",
                _ => "other",
            };
            (*tick, agent.0.to_string(), "calamity".into(), format!("{f}:{value}"))
        }
        SimEvent::ScenarioShift { observer, other, tick, lane_change_considered } => (
            *tick,
            observer.0.to_string(),
            "scenario-shift".into(),
            format!("other={} lane_change={}", other.0, lane_change_considered),
        ),
        SimEvent::AgentEntered { agent, tick } => {
            (*tick, agent.0.to_string(), "entered".into(), String::new())
        }
        SimEvent::AgentLeft { agent, tick } => {
            (*tick, agent.0.to_string(), "left".into(), String::new())
        }
    }
}

/// Export a closed-loop adaptive run.
pub fn export_adaptive_run(
    out_dir: &Path,
    scenario: &Scenario,
    result: &SimulationResult<f64>,
    wall_time_s: f64,
    seed: u64,
) -> Result<()> {
    let meta = RunMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        solver: "adaptive".to_string(),
        scenario_fingerprint: scenario.fingerprint.clone(),
        wall_time_s,
        seed,
        dt_s: scenario.dt,
        steps: scenario.steps,
        agents: result
            .records
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let s0 = rec.trajectory.initial_state();
                AgentMeta {
                    name: scenario.agent_names[rec.agent.0].clone(),
                    index: i,
                    entry_tick: rec.entry_tick,
                    exit_tick: rec.entry_tick + rec.trajectory.len(),
                    initial: [s0.x(), s0.y(), s0.heading(), s0.speed()],
                    actions: rec.realized.iter().map(|a| [a.accel(), a.steer()]).collect(),
                    chosen_actions: Some(
                        rec.chosen.iter().map(|a| [a.accel(), a.steer()]).collect(),
                    ),
                    utility: None,
                }
            })
            .collect(),
        nash: None,
        adaptive: Some(AdaptiveMeta {
            event_count: result.events.len(),
            calamity_count: result.calamity_count(),
        }),
    };
    let agents: Vec<AgentExport<'_>> = result
        .records
        .iter()
        .map(|rec| AgentExport {
            name: &scenario.agent_names[rec.agent.0],
            entry_tick: rec.entry_tick,
            trajectory: &rec.trajectory,
            realized: &rec.realized,
        })
        .collect();
    write_common(out_dir, scenario, &meta, &agents)?;

    let mut utility_rows = Vec::new();
    for rec in &result.records {
        for (k, u) in rec.effective_utilities.iter().enumerate() {
            let tick = rec.entry_tick + k;
            utility_rows.push(vec![
                tick.to_string(),
                fmt(tick as f64 * scenario.dt),
                scenario.agent_names[rec.agent.0].clone(),
                fmt(*u),
            ]);
        }
    }
    write_csv(
        &out_dir.join("per_tick_utility.csv"),
        &["tick", "time_s", "agent", "effective_utility"],
        &utility_rows,
    )?;

    let event_rows: Vec<Vec<String>> = result
        .events
        .iter()
        .map(|e| {
            let (tick, agent, kind, detail) = event_label(e);
            let name = agent
                .parse::<usize>()
                .ok()
                .and_then(|i| scenario.agent_names.get(i).cloned())
                .unwrap_or(agent);
            vec![tick.to_string(), name, kind, detail]
        })
        .collect();
    write_csv(&out_dir.join("events.csv"), &["tick", "agent", "kind", "detail"], &event_rows)?;
    Ok(())
}

/// A run directory loaded back for verification or comparison.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub scenario: Scenario,
    pub meta: RunMeta,
}

impl LoadedRun {
    /// Exact action sequences (radians) per agent, in file order.
    pub fn action_sequences(&self) -> Result<Vec<Vec<ActionPair<f64>>>> {
        self.meta
            .agents
            .iter()
            .map(|a| {
                a.actions
                    .iter()
                    .map(|&[accel, steer]| {
                        ActionPair::new(accel, steer).map_err(|e| anyhow!("{}: {e}", a.name))
                    })
                    .collect()
            })
            .collect()
    }

    /// Re-roll every agent's trajectory from the exact exported actions.
    pub fn rebuilt_trajectories(&self) -> Result<Vec<Trajectory<f64>>> {
        let seqs = self.action_sequences()?;
        self.meta
            .agents
            .iter()
            .zip(seqs)
            .map(|(a, actions)| {
                let geom = self.scenario.base_spec(a.index).geometry;
                let s0 = VehicleState::new(a.initial[0], a.initial[1], a.initial[2], a.initial[3])
                    .map_err(|e| anyhow!("{}: {e}", a.name))?;
                rollout(&geom, &s0, &actions, self.meta.dt_s).map_err(|e| anyhow!("{}: {e}", a.name))
            })
            .collect()
    }
}

/// Load a run directory written by the exporter.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let scenario_text = fs::read_to_string(dir.join("scenario.toml"))
        .with_context(|| format!("cannot read {}/scenario.toml", dir.display()))?;
    let scenario = crate::scenario::parse_scenario(&scenario_text, "scenario.toml")?;
    let meta_text = fs::read_to_string(dir.join("run.json"))
        .with_context(|| format!("cannot read {}/run.json", dir.display()))?;
    let meta: RunMeta = serde_json::from_str(&meta_text).context("run.json")?;
    if meta.scenario_fingerprint != scenario.fingerprint {
        bail!(
            "run.json fingerprint {} does not match scenario.toml ({})",
            meta.scenario_fingerprint,
            scenario.fingerprint
        );
    }
    Ok(LoadedRun { scenario, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;
    use traffic_game::adaptive::{simulate, NoiseModel};

    #[test]
    fn adaptive_export_round_trips_exactly() {
        let scenario = load_scenario("smoke").unwrap();
        let world = scenario.adaptive_world().unwrap();
        let result = simulate(&world, &NoiseModel::disabled()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_adaptive_run(dir.path(), &scenario, &result, 0.1, 0).unwrap();

        let loaded = load_run(dir.path()).unwrap();
        assert_eq!(loaded.scenario.fingerprint, scenario.fingerprint);
        let rebuilt = loaded.rebuilt_trajectories().unwrap();
        assert_eq!(rebuilt[0].states(), result.records[0].trajectory.states());

        // byte-identical re-export
        let dir2 = tempfile::tempdir().unwrap();
        export_adaptive_run(dir2.path(), &scenario, &result, 0.1, 0).unwrap();
        for f in ["scenario.toml", "run.json", "trajectories.csv", "actions.csv"] {
            let a = fs::read(dir.path().join(f)).unwrap();
            let b = fs::read(dir2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} differs between exports");
        }
    }

    #[test]
    fn trajectory_table_shape() {
        let scenario = load_scenario("smoke").unwrap();
        let world = scenario.adaptive_world().unwrap();
        let result = simulate(&world, &NoiseModel::disabled()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_adaptive_run(dir.path(), &scenario, &result, 0.0, 0).unwrap();
        let text = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "tick,time_s,agent,x_m,y_m,psi_deg,v_mps,alpha_mps2,delta_deg"
        );
        // smoke: 1 agent, 20 steps -> 21 state rows
        assert_eq!(lines.count(), 21);
        let actions = fs::read_to_string(dir.path().join("actions.csv")).unwrap();
        assert_eq!(actions.lines().count(), 1 + 20);
    }
}
