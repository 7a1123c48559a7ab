// Scratch validation of the statistical behaviors (multi-start equilibria,
// noise robustness). Not part of the deliverable test suite.
use std::time::Instant;

use traffic_game::adaptive::{
    simulate, ActionGrid, NoiseDistribution, NoiseModel, World, WorldAgent,
};
use traffic_game::anticipation::{Aggregators, AnticipationConfig};
use traffic_game::dynamics::VehicleState;
use traffic_game::nash::{
    random_start_sequences, solve_nash, start_config, BestResponseConfig, NashAgent, NashGame,
    NashOptions,
};
use traffic_game::utility::AgentUtilitySpec;
use traffic_game::{AgentId, Barrier, Lanes};

fn main() {
    let lane = 1.85;
    // criterion 9 shape: 20 noisy adaptive IC1 runs
    let mut spec = AgentUtilitySpec::<f64>::default();
    spec.params.crash_lx = 10.0;
    let world = World {
        dt: 0.2,
        ticks: 40,
        lanes: Lanes::new(vec![lane, -lane]).unwrap(),
        barrier: Some(Barrier { x: 0.0, blocked_lane_y: -lane }),
        anticipation: AnticipationConfig::default(),
        aggregators: Aggregators::default(),
        grid: ActionGrid::default(),
        neighbor_radius: 60.0,
        agents: vec![
            WorldAgent {
                id: AgentId(0),
                spec,
                initial: VehicleState::new(-90.0, lane, 0.0, 31.0).unwrap(),
                entry_tick: 0,
                exit_tick: None,
            },
            WorldAgent {
                id: AgentId(1),
                spec,
                initial: VehicleState::new(-80.0, -lane, 0.0, 31.0).unwrap(),
                entry_tick: 0,
                exit_tick: None,
            },
        ],
    };
    let t0 = Instant::now();
    let mut fronts = 0;
    let mut calamities = 0;
    for seed in 1..=20u64 {
        let noise = NoiseModel {
            distribution: NoiseDistribution::GaussianIid,
            state_sigma: [0.0; 4],
            action_sigma: [0.05, 0.1f64.to_radians()],
            rng_seed: seed,
        };
        let r = simulate(&world, &noise).unwrap();
        let open = r.record(AgentId(0)).unwrap().trajectory.states();
        let blocked = r.record(AgentId(1)).unwrap().trajectory.states();
        let merged = (blocked.last().unwrap().y() - lane).abs() < 0.3;
        let front = blocked.last().unwrap().x() > open.last().unwrap().x();
        calamities += r.calamity_count();
        if merged && front {
            fronts += 1;
        } else {
            println!(
                "seed {seed}: merged={merged} front={front} final_y={:.3}",
                blocked.last().unwrap().y()
            );
        }
    }
    println!("noise robustness: {fronts}/20 front merges, {calamities} calamities [{:.1}s]",
        t0.elapsed().as_secs_f64());

    // criterion 7 shape: 20-start equilibrium probe on IC1
    let game = NashGame::new(
        0.2,
        40,
        vec![
            NashAgent {
                id: AgentId(0),
                spec: AgentUtilitySpec::default(),
                initial: VehicleState::new(-90.0, lane, 0.0, 31.0).unwrap(),
            },
            NashAgent {
                id: AgentId(1),
                spec: AgentUtilitySpec::default(),
                initial: VehicleState::new(-80.0, -lane, 0.0, 31.0).unwrap(),
            },
        ],
    )
    .unwrap();
    let t0 = Instant::now();
    let cfg = BestResponseConfig::default();
    let opts = NashOptions::default();
    let mut front = 0;
    let mut rear = 0;
    let mut other = 0;
    for start in 0..20 {
        let t1 = Instant::now();
        let initial = random_start_sequences(&game, 2026, start);
        let sol = solve_nash(&game, initial, &start_config(&cfg, 2026, start), &opts).unwrap();
        let y = sol.trajectories[1].final_state().y();
        let merged = (y - lane).abs() < 0.3;
        let is_front = sol.trajectories[1].final_state().x() > sol.trajectories[0].final_state().x();
        let label = if !sol.converged || !merged {
            other += 1;
            "other"
        } else if is_front {
            front += 1;
            "front"
        } else {
            rear += 1;
            "rear"
        };
        println!(
            "  start {start}: {label} converged={} iters={} final_y={y:.3} [{:.1}s]",
            sol.converged,
            sol.iterations_used,
            t1.elapsed().as_secs_f64()
        );
    }
    println!(
        "probe modality: front={front} rear={rear} other={other} [{:.1}s]",
        t0.elapsed().as_secs_f64()
    );
}
