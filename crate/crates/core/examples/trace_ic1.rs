// Scratch: per-tick trace of the adaptive IC1 run with candidate diagnostics.
use traffic_game::adaptive::{
    optimal_action, simulate, ActionGrid, AgentView, NoiseModel, World, WorldAgent,
};
use traffic_game::anticipation::{Aggregators, AnticipationConfig, AnticipationContext};
use traffic_game::dynamics::{ActionPair, VehicleState};
use traffic_game::utility::AgentUtilitySpec;
use traffic_game::{AgentId, Barrier, Lanes};

fn main() {
    let lane = 1.85;
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
    let r = simulate(&world, &NoiseModel::disabled()).unwrap();
    let b = r.record(AgentId(1)).unwrap();
    let o = r.record(AgentId(0)).unwrap();
    println!("tick | blocked y psi(deg) v | chosen (a, d_deg) | open y a");
    for t in 0..40 {
        let s = &b.trajectory.states()[t];
        let a = &b.chosen[t];
        println!(
            "{t:3} | {:+7.3} {:+6.2} {:5.1} | ({:+4.1},{:+5.1}) | {:+6.2} {:+4.1}",
            s.y(),
            s.heading().to_degrees(),
            s.speed(),
            a.accel(),
            a.steer().to_degrees(),
            o.trajectory.states()[t].y(),
            o.chosen[t].accel(),
        );
    }

    // candidate diagnostics at the parked state (around tick 26)
    let t = 26;
    let ctx = AnticipationContext::new(world.anticipation, world.lanes.clone(), world.dt).unwrap();
    let views: Vec<AgentView<f64>> = vec![
        AgentView { id: AgentId(0), state: o.trajectory.states()[t], geometry: spec.geometry },
        AgentView { id: AgentId(1), state: b.trajectory.states()[t], geometry: spec.geometry },
    ];
    let prev = b.realized[t - 1];
    println!("\nstate at t={t}: y={:.3} psi={:.3}deg", views[1].state.y(), views[1].state.heading().to_degrees());
    let (best, bu) = optimal_action(
        &spec, &ctx, &world.aggregators, &world.grid, world.barrier.as_ref(), 60.0, &views, &prev, AgentId(1),
    )
    .unwrap();
    println!("argmax: ({:+.1},{:+.2}deg) u={bu:+.4}", best.accel(), best.steer().to_degrees());
    for d_deg in [-2.0f64, -1.0, -0.5, 0.0, 0.5] {
        for a in [0.0f64] {
            let cand = ActionPair::new(a, d_deg.to_radians()).unwrap();
            let path = ctx.anticipate_self(&spec.geometry, AgentId(1), &views[1].state, &cand);
            let u = ctx
                .effective_utility(
                    &spec,
                    &world.aggregators,
                    AgentId(1),
                    &views[1].state,
                    &prev,
                    &cand,
                    &[],
                )
                .unwrap();
            let ys: Vec<f64> = path.states.iter().map(|s| (s.y() * 100.0).round() / 100.0).collect();
            println!("cand ({a:+.1},{d_deg:+.1}deg): u={u:+.4} ys={ys:?}");
        }
    }
}
