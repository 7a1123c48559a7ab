// Scratch: settle-band scan for IC1/IC2 under the current anticipation.
use traffic_game::adaptive::{simulate, ActionGrid, NoiseDistribution, NoiseModel, World, WorldAgent};
use traffic_game::anticipation::{Aggregators, AnticipationConfig};
use traffic_game::dynamics::VehicleState;
use traffic_game::utility::AgentUtilitySpec;
use traffic_game::{AgentId, Barrier, Lanes};

fn world(open_x: f64, blocked_x: f64) -> World<f64> {
    let lane = 1.85;
    let mut spec = AgentUtilitySpec::<f64>::default();
    spec.params.crash_lx = 10.0;
    World {
        dt: 0.2,
        ticks: 40,
        lanes: Lanes::new(vec![lane, -lane]).unwrap(),
        barrier: Some(Barrier { x: 0.0, blocked_lane_y: -lane }),
        anticipation: AnticipationConfig::default(),
        aggregators: Aggregators::default(),
        grid: ActionGrid::default(),
        neighbor_radius: 60.0,
        agents: vec![
            WorldAgent { id: AgentId(0), spec, initial: VehicleState::new(open_x, lane, 0.0, 31.0).unwrap(), entry_tick: 0, exit_tick: None },
            WorldAgent { id: AgentId(1), spec, initial: VehicleState::new(blocked_x, -lane, 0.0, 31.0).unwrap(), entry_tick: 0, exit_tick: None },
        ],
    }
}

fn report(name: &str, w: &World<f64>, noise: &NoiseModel<f64>) -> (f64, f64, usize) {
    let r = simulate(w, noise).unwrap();
    let b = r.record(AgentId(1)).unwrap().trajectory.states().to_vec();
    let o = r.record(AgentId(0)).unwrap().trajectory.states().to_vec();
    let final_err = (b.last().unwrap().y() - 1.85).abs();
    let late_max = b[28..].iter().map(|s| (s.y() - 1.85).abs()).fold(0.0f64, f64::max);
    let min_gap = b
        .iter()
        .zip(&o)
        .filter(|(bb, oo)| (bb.y() - oo.y()).abs() < 2.0)
        .map(|(bb, oo)| (bb.x() - oo.x()).abs())
        .fold(f64::INFINITY, f64::min);
    let front = b.last().unwrap().x() > o.last().unwrap().x();
    println!(
        "{name}: final_err={final_err:.3} late_max={late_max:.3} min_gap={min_gap:.2} front={front} calamities={}",
        r.calamity_count()
    );
    (final_err, late_max, r.calamity_count())
}

fn main() {
    let none = NoiseModel::disabled();
    report("IC1", &world(-90.0, -80.0), &none);
    report("IC2", &world(-80.0, -80.0), &none);
    // noise robustness sample
    let mut ok = 0;
    for seed in 1..=20u64 {
        let noise = NoiseModel {
            distribution: NoiseDistribution::GaussianIid,
            state_sigma: [0.0; 4],
            action_sigma: [0.05, 0.1f64.to_radians()],
            rng_seed: seed,
        };
        let w = world(-90.0, -80.0);
        let r = simulate(&w, &noise).unwrap();
        let b = r.record(AgentId(1)).unwrap().trajectory.states().to_vec();
        let o = r.record(AgentId(0)).unwrap().trajectory.states().to_vec();
        let merged = (b.last().unwrap().y() - 1.85).abs() < 0.3;
        let front = b.last().unwrap().x() > o.last().unwrap().x();
        if merged && front && r.calamity_count() == 0 {
            ok += 1;
        } else {
            println!("  seed {seed}: final_y={:.3} front={front} cal={}", b.last().unwrap().y(), r.calamity_count());
        }
    }
    println!("noise: {ok}/20 clean front merges");
}
