//! Per-step signal controllers.

pub mod objective;
pub mod penalty;
pub mod pressure;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use objective::{LocalObjective, LocalOptimum};
pub use penalty::{bound_from_counts, penalty, penalty_upper_bound, CmppParams};
pub use pressure::{
    all_phase_pressures, argmax, improves, movement_weight, movement_weights, mp_select, phase_pressure,
    phase_pressures_from, TIE_TOLERANCE,
};

use crate::consensus::{self, ConsensusConfig, ConsensusError, ConsensusProblem, SolverReport};
use crate::dynamics::{ControlAction, QueueState};
use crate::network::{IntersectionId, Network};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    FixedTime,
    Mp,
    Cabp,
    Cmpp,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::FixedTime => "fixed_time",
            ControllerKind::Mp => "mp",
            ControllerKind::Cabp => "cabp",
            ControllerKind::Cmpp => "cmpp",
        }
    }
}

/// When CA-BP drops a movement from the pressure sum.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CabpGate {
    /// Every downstream movement would exceed its threshold.
    #[default]
    AllDownstream,
    /// At least one downstream movement would exceed its threshold.
    AnyDownstream,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Run directory name; defaults to the kind, plus the algorithm for CMPP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Cyclic phase durations in steps, shared by all intersections. One step
    /// per phase when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations: Option<Vec<u32>>,
    #[serde(default)]
    pub gate: CabpGate,
    #[serde(default)]
    pub penalty: CmppParams,
    #[serde(default)]
    pub consensus: ConsensusConfig,
    /// Ignore neighborhoods: every intersection optimizes alone.
    #[serde(default)]
    pub isolated: bool,
}

impl ControllerConfig {
    pub fn new(kind: ControllerKind) -> Self {
        ControllerConfig {
            kind,
            label: None,
            durations: None,
            gate: CabpGate::default(),
            penalty: CmppParams::default(),
            consensus: ConsensusConfig::default(),
            isolated: false,
        }
    }

    pub fn cmpp(algorithm: consensus::Algorithm) -> Self {
        let mut c = ControllerConfig::new(ControllerKind::Cmpp);
        c.consensus.algorithm = algorithm;
        c
    }

    pub fn label(&self) -> String {
        match (&self.label, self.kind) {
            (Some(l), _) => l.clone(),
            (None, ControllerKind::Cmpp) => format!("cmpp-{}", self.consensus.algorithm.name()),
            (None, kind) => kind.name().to_string(),
        }
    }

    pub fn validate(&self, net: &Network) -> Vec<String> {
        let mut problems = Vec::new();
        if let Some(d) = &self.durations {
            if d.is_empty() || d.contains(&0) {
                problems.push("fixed-time durations must be positive".to_string());
            }
            for inter in net.intersections() {
                if inter.phases.len() != d.len() {
                    problems.push(format!(
                        "fixed-time plan has {} durations but `{}` has {} phases",
                        d.len(),
                        inter.name,
                        inter.phases.len()
                    ));
                }
            }
        }
        if self.kind == ControllerKind::Cmpp {
            let p = &self.penalty;
            if !(p.v > 0.0 && p.v.is_finite()) {
                problems.push(format!("penalty weight v must be positive, got {}", p.v));
            }
            if p.alpha.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                problems.push(format!("penalty weights must be non-negative, got {:?}", p.alpha));
            }
            problems.extend(self.consensus.validate());
        }
        problems
    }

    /// History length the simulator must keep for this controller.
    pub fn history_needed(&self) -> usize {
        match self.kind {
            ControllerKind::Cmpp => self.penalty.history,
            _ => 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid controller configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

pub struct Observation<'a> {
    pub net: &'a Network,
    pub state: &'a QueueState,
    /// Expected arrivals on every link this step.
    pub arrivals: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct Decision {
    pub action: ControlAction,
    pub solver: Option<SolverReport>,
}

pub trait Controller: Send {
    fn decide(&mut self, obs: &Observation) -> Result<Decision, ControllerError>;
}

/// Phase of `i` at step `t` under a cyclic plan.
pub fn fixed_time_select(t: usize, durations: &[u32]) -> usize {
    let cycle: u64 = durations.iter().map(|&d| d as u64).sum();
    let mut pos = t as u64 % cycle;
    for (k, &d) in durations.iter().enumerate() {
        if pos < d as u64 {
            return k;
        }
        pos -= d as u64;
    }
    unreachable!("position inside the cycle")
}

/// Max pressure with movements gated out when their downstream space is
/// exhausted. Falls back to [`mp_select`] when every phase is fully gated.
pub fn cabp_select(net: &Network, state: &QueueState, i: IntersectionId, gate: CabpGate) -> usize {
    let inter = net.intersection(i);
    let gated = |m| {
        let mv = net.movement(m);
        let down = net.downstream_of(mv.to_link);
        if down.is_empty() {
            return false;
        }
        let y = state.outflow_bound(net, m);
        let full = |&p: &crate::network::MovementId| {
            state.queue(p) + y > net.movement(p).queue_threshold
        };
        match gate {
            CabpGate::AllDownstream => down.iter().all(full),
            CabpGate::AnyDownstream => down.iter().any(full),
        }
    };
    let mut best: Option<(usize, f64)> = None;
    for (k, phase) in inter.phases.iter().enumerate() {
        let open: Vec<_> = phase.movements.iter().filter(|&&m| !gated(m)).collect();
        if open.is_empty() {
            continue;
        }
        let value: f64 = open
            .iter()
            .map(|&&m| net.movement(m).capacity * movement_weight(net, state, m))
            .sum();
        if best.is_none_or(|(_, b)| improves(value, b)) {
            best = Some((k, value));
        }
    }
    best.map_or_else(|| mp_select(net, state, i), |(k, _)| k)
}

pub struct FixedTime {
    durations: Option<Vec<u32>>,
}

impl Controller for FixedTime {
    fn decide(&mut self, obs: &Observation) -> Result<Decision, ControllerError> {
        let phases = obs
            .net
            .intersections()
            .iter()
            .map(|inter| match &self.durations {
                Some(d) => fixed_time_select(obs.state.t, d),
                None => obs.state.t % inter.phases.len(),
            })
            .collect();
        Ok(Decision { action: ControlAction::new(phases), solver: None })
    }
}

pub struct MaxPressure;

impl Controller for MaxPressure {
    fn decide(&mut self, obs: &Observation) -> Result<Decision, ControllerError> {
        let weights = movement_weights(obs.net, obs.state);
        let phases = (0..obs.net.intersection_count())
            .map(|i| argmax(&phase_pressures_from(obs.net, &weights, IntersectionId(i))))
            .collect();
        Ok(Decision { action: ControlAction::new(phases), solver: None })
    }
}

pub struct CapacityAwareBackpressure {
    gate: CabpGate,
}

impl Controller for CapacityAwareBackpressure {
    fn decide(&mut self, obs: &Observation) -> Result<Decision, ControllerError> {
        let phases = (0..obs.net.intersection_count())
            .map(|i| cabp_select(obs.net, obs.state, IntersectionId(i), self.gate))
            .collect();
        Ok(Decision { action: ControlAction::new(phases), solver: None })
    }
}

pub struct Cmpp {
    params: CmppParams,
    consensus: ConsensusConfig,
    isolated: bool,
    isolated_net: Option<Arc<Network>>,
}

impl Cmpp {
    pub fn new(params: CmppParams, consensus: ConsensusConfig, isolated: bool) -> Self {
        Cmpp { params, consensus, isolated, isolated_net: None }
    }
}

impl Controller for Cmpp {
    fn decide(&mut self, obs: &Observation) -> Result<Decision, ControllerError> {
        let net: &Network = if self.isolated {
            self.isolated_net.get_or_insert_with(|| Arc::new(obs.net.isolated()))
        } else {
            obs.net
        };
        let problem = ConsensusProblem::build(net, obs.state, obs.arrivals, &self.params);
        let solution = consensus::solve(&problem, &self.consensus)?;
        Ok(Decision {
            action: ControlAction::new(solution.phases),
            solver: Some(solution.report),
        })
    }
}

pub fn make_controller(config: &ControllerConfig, net: &Network) -> Result<Box<dyn Controller>, ControllerError> {
    let problems = config.validate(net);
    if !problems.is_empty() {
        return Err(ControllerError::Config(problems));
    }
    Ok(match config.kind {
        ControllerKind::FixedTime => Box::new(FixedTime { durations: config.durations.clone() }),
        ControllerKind::Mp => Box::new(MaxPressure),
        ControllerKind::Cabp => Box::new(CapacityAwareBackpressure { gate: config.gate }),
        ControllerKind::Cmpp => Box::new(Cmpp::new(
            config.penalty.clone(),
            config.consensus.clone(),
            config.isolated,
        )),
    })
}

/// `p_i` of the applied action at every intersection.
pub fn realized_penalties(
    net: &Network,
    state: &QueueState,
    arrivals: &[f64],
    params: &CmppParams,
    action: &ControlAction,
) -> Vec<f64> {
    (0..net.intersection_count())
        .map(|i| {
            let id = IntersectionId(i);
            let local: Vec<usize> = net
                .neighborhood(id)
                .members()
                .iter()
                .map(|&j| action.phase(j))
                .collect();
            penalty(net, state, arrivals, params, id, &local)
        })
        .collect()
}
