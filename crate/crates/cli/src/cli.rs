//! Command-line surface.
//!
//! Exit codes: 0 success, 1 solver non-convergence (or a failed
//! certificate on `verify`), 2 input error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand, ValueEnum};

use traffic_game::adaptive::simulate;
use traffic_game::nash::{
    probe_equilibria, solve_nash, verify_nash_detailed, ActionSequence, ProbeDeltas,
};
use traffic_game::scalar::{deg_to_rad, rad_to_deg};
use traffic_game::AgentId;

use crate::export::{export_adaptive_run, export_nash_run, load_run};
use crate::scenario::load_scenario;

/// Environment variable naming the default parent directory for run output.
pub const OUT_DIR_ENV: &str = "TRAFFIC_GAME_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "traffic-game",
    version,
    about = "Coupled micro path planning on a multi-lane road: full-horizon equilibrium search and per-tick adaptive look-ahead optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Nash,
    Adaptive,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a scenario and export trajectories, actions, metadata and plots.
    Simulate {
        #[arg(long, value_enum)]
        solver: SolverKind,
        /// Bundled name (ic1, ic2, smoke) or a path to a scenario file.
        #[arg(long)]
        scenario: String,
        /// Output directory (default: $TRAFFIC_GAME_OUT_DIR/<scenario>-<solver>
        /// or runs/<scenario>-<solver>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's solver/noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the maximum best-response sweeps (nash only).
        #[arg(long)]
        max_iter: Option<usize>,
        /// Override the convergence tolerance (nash only).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Re-run the equilibrium certification of an exported nash run.
    Verify {
        /// Run directory written by `simulate --solver nash`.
        #[arg(long)]
        result: PathBuf,
    },
    /// Multi-start equilibrium search.
    Probe {
        #[arg(long)]
        scenario: String,
        /// Number of starts (start 0 is the all-zero plan).
        #[arg(long)]
        starts: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Export each distinct solution under this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print per-tick action and trajectory deltas between two runs.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message; usage problems are input errors
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate { solver, scenario, out, seed, max_iter, tol } => {
            cmd_simulate(solver, &scenario, out, seed, max_iter, tol)
        }
        Command::Verify { result } => cmd_verify(&result),
        Command::Probe { scenario, starts, seed, out } => cmd_probe(&scenario, starts, seed, out),
        Command::Compare { a, b } => cmd_compare(&a, &b),
    }
}

fn default_out_dir(scenario: &str, solver: &str) -> PathBuf {
    let stem = Path::new(scenario)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| scenario.to_string());
    let parent = std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    parent.join(format!("{stem}-{solver}"))
}

fn cmd_simulate(
    solver: SolverKind,
    scenario_ref: &str,
    out: Option<PathBuf>,
    seed: Option<u64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
) -> Result<i32> {
    let mut scenario = load_scenario(scenario_ref)?;
    if let Some(seed) = seed {
        scenario.nash_cfg.rng_seed = seed;
        scenario.noise.rng_seed = seed;
    }
    if let Some(n) = max_iter {
        scenario.nash_opts.max_iterations = n;
    }
    if let Some(t) = tol {
        scenario.nash_opts.tol = t;
    }
    let solver_name = match solver {
        SolverKind::Nash => "nash",
        SolverKind::Adaptive => "adaptive",
    };
    let out_dir = out.unwrap_or_else(|| default_out_dir(scenario_ref, solver_name));
    let seed_used = seed.unwrap_or(match solver {
        SolverKind::Nash => scenario.nash_cfg.rng_seed,
        SolverKind::Adaptive => scenario.noise.rng_seed,
    });

    match solver {
        SolverKind::Adaptive => {
            let world = scenario.adaptive_world()?;
            let t0 = Instant::now();
            let result = simulate(&world, &scenario.noise).map_err(|e| anyhow!("simulate: {e}"))?;
            let wall = t0.elapsed().as_secs_f64();
            export_adaptive_run(&out_dir, &scenario, &result, wall, seed_used)?;
            println!("solver: adaptive");
            println!("scenario: {} ({})", scenario_ref, &scenario.fingerprint[..12]);
            println!("ticks: {}  wall time: {wall:.2}s", scenario.steps);
            println!("events: {} ({} calamities)", result.events.len(), result.calamity_count());
            for rec in &result.records {
                let s = rec.trajectory.final_state();
                println!(
                    "  {}: final x={:.2} m, y={:.2} m, v={:.2} m/s",
                    scenario.agent_names[rec.agent.0],
                    s.x(),
                    s.y(),
                    s.speed()
                );
            }
            println!("wrote {}", out_dir.display());
            Ok(0)
        }
        SolverKind::Nash => {
            let game = scenario.nash_game()?;
            let t0 = Instant::now();
            let solution = solve_nash(&game, game.zero_sequences(), &scenario.nash_cfg, &scenario.nash_opts)
                .map_err(|e| anyhow!("solve: {e}"))?;
            let wall = t0.elapsed().as_secs_f64();
            let (_, samples) = verify_nash_detailed(
                &game,
                &solution.sequences,
                &scenario.nash_opts.probe,
                scenario.nash_opts.certificate_tol,
            )
            .map_err(|e| anyhow!("verify: {e}"))?;
            export_nash_run(&out_dir, &scenario, &solution, &samples, wall, seed_used)?;
            println!("solver: nash");
            println!("scenario: {} ({})", scenario_ref, &scenario.fingerprint[..12]);
            println!(
                "converged: {} after {} sweeps  wall time: {wall:.2}s",
                solution.converged, solution.iterations_used
            );
            println!(
                "certificate: max unilateral gain {:.3e} ({})",
                solution.certificate.max_unilateral_gain,
                if solution.certificate.passed { "passed" } else { "failed" }
            );
            for (i, traj) in solution.trajectories.iter().enumerate() {
                let s = traj.final_state();
                println!(
                    "  {}: final x={:.2} m, y={:.2} m, v={:.2} m/s, utility {:.4}",
                    scenario.agent_names[i],
                    s.x(),
                    s.y(),
                    s.speed(),
                    solution.utilities[i]
                );
            }
            println!("wrote {}", out_dir.display());
            Ok(if solution.converged { 0 } else { 1 })
        }
    }
}

fn cmd_verify(dir: &Path) -> Result<i32> {
    let run = load_run(dir)?;
    let nash_meta = run
        .meta
        .nash
        .as_ref()
        .ok_or_else(|| anyhow!("{} is not a nash run; nothing to certify", dir.display()))?;
    let game = run.scenario.nash_game()?;
    let sequences: Vec<ActionSequence<f64>> = run
        .action_sequences()?
        .into_iter()
        .enumerate()
        .map(|(i, actions)| ActionSequence { agent: AgentId(i), actions })
        .collect();
    let probe = ProbeDeltas::symmetric(
        nash_meta.probe_alpha_mps2,
        deg_to_rad(nash_meta.probe_steer_deg),
        nash_meta.probe_points,
    );
    let (cert, _) = verify_nash_detailed(&game, &sequences, &probe, nash_meta.certificate_tol)
        .map_err(|e| anyhow!("verify: {e}"))?;
    println!("probe grid: {}", cert.probe_grid);
    println!("max unilateral gain: {:.6e}", cert.max_unilateral_gain);
    println!("tolerance: {:.6e}", nash_meta.certificate_tol);
    println!("certificate: {}", if cert.passed { "passed" } else { "failed" });
    Ok(if cert.passed { 0 } else { 1 })
}

fn cmd_probe(
    scenario_ref: &str,
    starts: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<i32> {
    let scenario = load_scenario(scenario_ref)?;
    let game = scenario.nash_game()?;
    let seed_used = seed.unwrap_or(scenario.nash_cfg.rng_seed);
    let t0 = Instant::now();
    let solutions = probe_equilibria(&game, &scenario.nash_cfg, &scenario.nash_opts, starts, seed_used)
        .map_err(|e| anyhow!("probe: {e}"))?;
    let wall = t0.elapsed().as_secs_f64();
    println!(
        "{} distinct converged equilibria from {starts} starts (seed {seed_used}) in {wall:.1}s",
        solutions.len()
    );
    for (k, sol) in solutions.iter().enumerate() {
        println!(
            "solution {k}: {} sweeps, max gain {:.2e}",
            sol.iterations_used, sol.certificate.max_unilateral_gain
        );
        for (i, traj) in sol.trajectories.iter().enumerate() {
            let s = traj.final_state();
            println!(
                "  {}: final x={:.2} m, y={:.2} m, v={:.2} m/s",
                scenario.agent_names[i],
                s.x(),
                s.y(),
                s.speed()
            );
        }
    }
    if let Some(out) = out {
        for (k, sol) in solutions.iter().enumerate() {
            let (_, samples) = verify_nash_detailed(
                &game,
                &sol.sequences,
                &scenario.nash_opts.probe,
                scenario.nash_opts.certificate_tol,
            )?;
            export_nash_run(
                &out.join(format!("solution_{k}")),
                &scenario,
                sol,
                &samples,
                wall,
                seed_used,
            )?;
        }
        println!("wrote {} solution(s) under {}", solutions.len(), out.display());
    }
    Ok(if solutions.is_empty() { 1 } else { 0 })
}

/// Action settle time: the end of the last tick where any agent's action
/// exceeds (0.1 m/s^2, 0.2 degrees).
fn settle_time_s(run: &crate::export::LoadedRun) -> f64 {
    let mut last = 0usize;
    for a in &run.meta.agents {
        for (k, &[accel, steer]) in a.actions.iter().enumerate() {
            if accel.abs() > 0.1 || steer.abs() > deg_to_rad(0.2) {
                last = last.max(a.entry_tick + k + 1);
            }
        }
    }
    last as f64 * run.meta.dt_s
}

fn cmd_compare(dir_a: &Path, dir_b: &Path) -> Result<i32> {
    let a = load_run(dir_a)?;
    let b = load_run(dir_b)?;
    if a.meta.scenario_fingerprint != b.meta.scenario_fingerprint {
        eprintln!(
            "note: the runs use different scenarios ({} vs {})",
            &a.meta.scenario_fingerprint[..12],
            &b.meta.scenario_fingerprint[..12]
        );
    }
    let ta = a.rebuilt_trajectories()?;
    let tb = b.rebuilt_trajectories()?;

    let index =
        |run: &crate::export::LoadedRun| -> BTreeMap<String, usize> {
            run.meta.agents.iter().map(|ag| (ag.name.clone(), ag.index)).collect()
        };
    let ia = index(&a);
    let ib = index(&b);

    println!(
        "comparing {} ({}) vs {} ({})",
        dir_a.display(),
        a.meta.solver,
        dir_b.display(),
        b.meta.solver
    );
    println!("tick time_s agent   |dx|_m  |dy|_m  |dalpha|_mps2  |ddelta|_deg");
    let mut max_dx = 0.0f64;
    let mut max_dy = 0.0f64;
    let mut max_da = 0.0f64;
    let mut max_dd = 0.0f64;
    for (name, &i) in &ia {
        let Some(&j) = ib.get(name) else {
            println!("  (agent {name} only in {})", dir_a.display());
            continue;
        };
        let (ma, mb) = (&a.meta.agents[i], &b.meta.agents[j]);
        let ticks = ma.actions.len().min(mb.actions.len());
        for k in 0..ticks {
            let tick = ma.entry_tick + k;
            if tick < mb.entry_tick {
                continue;
            }
            let kb = tick - mb.entry_tick;
            if kb >= mb.actions.len() {
                break;
            }
            let sa = ta[i].states()[k];
            let sb = tb[j].states()[kb];
            let dx = (sa.x() - sb.x()).abs();
            let dy = (sa.y() - sb.y()).abs();
            let da = (ma.actions[k][0] - mb.actions[kb][0]).abs();
            let dd = rad_to_deg((ma.actions[k][1] - mb.actions[kb][1]).abs());
            max_dx = max_dx.max(dx);
            max_dy = max_dy.max(dy);
            max_da = max_da.max(da);
            max_dd = max_dd.max(dd);
            println!(
                "{tick:4} {:6.1} {name:7} {dx:7.3} {dy:7.3} {da:13.3} {dd:12.3}",
                tick as f64 * a.meta.dt_s
            );
        }
    }
    println!(
        "max deltas: |dx| {max_dx:.3} m, |dy| {max_dy:.3} m, |dalpha| {max_da:.3} m/s^2, |ddelta| {max_dd:.3} deg"
    );
    println!(
        "action settle times: {} {:.1}s vs {} {:.1}s",
        a.meta.solver,
        settle_time_s(&a),
        b.meta.solver,
        settle_time_s(&b)
    );
    Ok(0)
}
