mod common;

use std::collections::HashMap;
use std::sync::Arc;

use cmpp_core::dynamics::{step_fluid, ArrivalProcess, ControlAction, QueueState, TokenSimulator};
use cmpp_core::network::{build_grid, GridConfig, LinkKind, TurnValues};
use common::{random_grid, FluidOracle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Pipelined links included: the fluid step agrees bit for bit with the
    /// spec-level transcription.
    #[test]
    fn fluid_step_matches_transcription(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, net) = random_grid(&mut rng, 3, 2);
        let mut oracle = FluidOracle::new(&spec);
        let index: Vec<usize> = oracle
            .names()
            .iter()
            .map(|n| net.movements().iter().position(|m| &m.name == n).unwrap())
            .collect();
        let mut state = QueueState::empty(&net, 0);
        for _ in 0..30 {
            let phases: Vec<usize> =
                net.intersections().iter().map(|i| rng.random_range(0..i.phase_count())).collect();
            let arrivals: Vec<f64> = net
                .links()
                .iter()
                .map(|l| if l.kind == LinkKind::Entry { rng.random_range(0.0..6.0) } else { 0.0 })
                .collect();
            let by_link: HashMap<String, f64> =
                net.links().iter().zip(&arrivals).map(|(l, &a)| (l.name.clone(), a)).collect();
            oracle.step(&phases, &by_link);
            state = step_fluid(&net, &state, &ControlAction::new(phases), &arrivals).unwrap();
            for (k, &m) in index.iter().enumerate() {
                prop_assert_eq!(state.queues[m].to_bits(), oracle.queues[k].to_bits());
            }
        }
    }

    /// Fluid mass balance: what entered is either inside or gone.
    #[test]
    fn fluid_conserves_mass(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, net) = random_grid(&mut rng, 3, 2);
        let mut state = QueueState::empty(&net, 0);
        for _ in 0..40 {
            let phases = net.intersections().iter().map(|i| rng.random_range(0..i.phase_count())).collect();
            let arrivals: Vec<f64> = net
                .links()
                .iter()
                .map(|l| if l.kind == LinkKind::Entry { rng.random_range(0.0..4.0) } else { 0.0 })
                .collect();
            state = step_fluid(&net, &state, &ControlAction::new(phases), &arrivals).unwrap();
            prop_assert!(state.queues.iter().all(|&q| q >= 0.0));
            let balance = state.entered - state.exited - state.vehicles_in_network();
            prop_assert!(balance.abs() <= 1e-9 * state.entered.max(1.0));
        }
    }
}

/// With integer capacities, unit turning ratios and integer deterministic
/// arrivals, vehicle tokens and fluid queues coincide exactly.
#[test]
fn tokens_and_fluid_coincide_on_integer_networks() {
    let config = GridConfig {
        capacity: TurnValues { left: 2.0, through: 5.0, right: 3.0 },
        turning_ratios: TurnValues { left: 0.0, through: 1.0, right: 0.0 },
        ..GridConfig::default()
    };
    let net = Arc::new(build_grid(3, 2, &config).unwrap());
    let rates: Vec<f64> = net
        .links()
        .iter()
        .map(|l| if l.kind == LinkKind::Entry { 3.0 } else { 0.0 })
        .collect();
    let mut sim = TokenSimulator::new(net.clone(), ArrivalProcess::Deterministic, None, 0).unwrap();
    let mut fluid = QueueState::empty(&net, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..200 {
        let phases: Vec<usize> = net.intersections().iter().map(|i| rng.random_range(0..i.phase_count())).collect();
        let action = ControlAction::new(phases);
        sim.step(&action, &rates).unwrap();
        fluid = step_fluid(&net, &fluid, &action, &rates).unwrap();
        let tokens = sim.observe();
        assert_eq!(tokens.queues, fluid.queues, "step {t}");
        assert_eq!(tokens.exited, fluid.exited, "step {t}");
    }
}
