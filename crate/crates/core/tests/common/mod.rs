//! Shared helpers for the integration tests: random small grids and a
//! fluid-queue transcription written directly against the network spec.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use cmpp_core::network::{build_grid_spec, GridConfig, Network, NetworkSpec, Side, TurnValues};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn random_grid_config(rng: &mut impl Rng, max_delay: u32) -> GridConfig {
    let sides = [Side::North, Side::East, Side::South, Side::West];
    let mut open: Vec<Side> = sides.iter().copied().filter(|_| rng.random_bool(0.6)).collect();
    if open.is_empty() {
        open.push(*sides.choose(rng).unwrap());
    }
    let (a, b, c) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
    let sum = a + b + c;
    GridConfig {
        capacity: TurnValues {
            left: rng.random_range(0.5..6.0),
            through: rng.random_range(1.0..10.0),
            right: rng.random_range(0.5..6.0),
        },
        turning_ratios: TurnValues { left: a / sum, through: b / sum, right: c / sum },
        queue_threshold: rng.random_range(5.0..30.0),
        entry_delay: rng.random_range(0..=max_delay),
        internal_delay: rng.random_range(0..=max_delay),
        exit_delay: rng.random_range(0..=max_delay),
        open_sides: open,
    }
}

/// A random grid of at most `max_dim × max_dim` intersections. Layouts
/// whose closed sides leave a dead-end link are redrawn.
pub fn random_grid(rng: &mut impl Rng, max_dim: usize, max_delay: u32) -> (NetworkSpec, Network) {
    loop {
        let rows = rng.random_range(1..=max_dim);
        let cols = rng.random_range(1..=max_dim);
        let config = random_grid_config(rng, max_delay);
        let spec = build_grid_spec(rows, cols, &config).expect("valid grid config");
        if let Ok(net) = Network::from_spec(&spec) {
            return (spec, net);
        }
    }
}

/// Fluid queues advanced straight from the spec: a movement loses
/// `min(q, c)` when green and gains its ratio of whatever enters its
/// incoming link, after the link's traversal delay.
pub struct FluidOracle {
    names: Vec<String>,
    from: Vec<String>,
    to: Vec<String>,
    capacity: Vec<f64>,
    ratio: Vec<f64>,
    /// Per intersection, per phase, the movements it turns green.
    phases: Vec<Vec<HashSet<String>>>,
    delay: HashMap<String, usize>,
    link_order: Vec<String>,
    pipes: HashMap<String, Vec<f64>>,
    pub queues: Vec<f64>,
}

impl FluidOracle {
    pub fn new(spec: &NetworkSpec) -> Self {
        let names: Vec<String> = spec.movements.iter().map(|m| m.resolved_id()).collect();
        let delay: HashMap<String, usize> = spec.links.iter().map(|l| (l.id.clone(), l.delay as usize)).collect();
        FluidOracle {
            from: spec.movements.iter().map(|m| m.from.clone()).collect(),
            to: spec.movements.iter().map(|m| m.to.clone()).collect(),
            capacity: spec.movements.iter().map(|m| m.capacity).collect(),
            ratio: spec.movements.iter().map(|m| m.ratio).collect(),
            phases: spec
                .intersections
                .iter()
                .map(|i| i.phases.iter().map(|p| p.iter().cloned().collect()).collect())
                .collect(),
            pipes: spec.links.iter().map(|l| (l.id.clone(), vec![0.0; l.delay as usize])).collect(),
            link_order: spec.links.iter().map(|l| l.id.clone()).collect(),
            delay,
            queues: vec![0.0; names.len()],
            names,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `phase_choice[i]` indexes the phases of spec intersection `i`;
    /// `arrivals` is keyed by link id.
    pub fn step(&mut self, phase_choice: &[usize], arrivals: &HashMap<String, f64>) {
        let green: HashSet<&String> = self
            .phases
            .iter()
            .zip(phase_choice)
            .flat_map(|(ph, &k)| ph[k].iter())
            .collect();
        let n = self.names.len();
        let mut moved = vec![0.0; n];
        for m in 0..n {
            let s = if green.contains(&self.names[m]) { 1.0 } else { 0.0 };
            moved[m] = self.queues[m].min(self.capacity[m]) * s;
        }
        // Flow entering each link this step: upstream service plus demand.
        let mut entering: HashMap<String, f64> = HashMap::new();
        for link in &self.link_order {
            let mut total = 0.0;
            for k in 0..n {
                if &self.to[k] == link {
                    total += moved[k];
                }
            }
            entering.insert(link.clone(), total + arrivals.get(link).copied().unwrap_or(0.0));
        }
        // Flow reaching the end of each link this step.
        let mut reaching: HashMap<String, f64> = HashMap::new();
        for link in &self.link_order {
            let value = if self.delay[link] == 0 {
                entering[link]
            } else {
                let pipe = self.pipes.get_mut(link).unwrap();
                let front = pipe.remove(0);
                pipe.push(entering[link]);
                front
            };
            reaching.insert(link.clone(), value);
        }
        for m in 0..n {
            self.queues[m] = (self.queues[m] - moved[m]) + reaching[&self.from[m]] * self.ratio[m];
        }
    }
}
