//! Network-wide phase assignment from the local objectives.
//!
//! The problem is `max Σ_i f_i(x_i)` subject to every local copy `x_i`
//! agreeing with the global assignment `z` on the members of `i`'s
//! neighborhood. Three solvers share the same [`ConsensusProblem`]:
//! [`admm`], [`greedy`] and the brute-force [`exhaustive`] oracle.

pub mod admm;
pub mod exhaustive;
pub mod greedy;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use admm::{solve_admm, z_block_update};
pub use exhaustive::solve_exhaustive;
pub use greedy::solve_greedy;

use crate::controllers::objective::{LocalObjective, LocalOptimum};
use crate::controllers::{all_phase_pressures, CmppParams};
use crate::dynamics::QueueState;
use crate::network::{IntersectionId, Network};

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Admm,
    #[default]
    Greedy,
    Exhaustive,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Admm => "admm",
            Algorithm::Greedy => "greedy",
            Algorithm::Exhaustive => "exhaustive",
        }
    }
}

/// How local maximizations are carried out. Both give the same maximizer.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XUpdate {
    /// Every combination of member phases.
    #[default]
    Enumerate,
    /// Per-neighbor maximization for each center phase.
    Decomposed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    pub algorithm: Algorithm,
    pub rho: f64,
    pub max_iters: usize,
    /// Largest global search space the exhaustive solver accepts.
    pub oracle_limit: u64,
    pub x_update: XUpdate,
    /// Evaluate per-intersection subproblems on the rayon pool.
    pub parallel: bool,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            algorithm: Algorithm::Greedy,
            rho: 1.0,
            max_iters: 10,
            oracle_limit: 1_000_000,
            x_update: XUpdate::Enumerate,
            parallel: false,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            problems.push(format!("rho must be positive, got {}", self.rho));
        }
        if self.max_iters == 0 {
            problems.push("max_iters must be at least 1".to_string());
        }
        problems
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("search space of {size} assignments exceeds the oracle limit of {limit}")]
    OracleLimit { size: u128, limit: u64 },
    #[error("invalid consensus configuration: {}", .0.join("; "))]
    Config(Vec<String>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolverReport {
    pub algorithm: Option<Algorithm>,
    /// ADMM iterations or greedy outer iterations.
    pub iterations: usize,
    pub converged: bool,
    /// Primal residual `‖x - Mz‖` after each ADMM iteration.
    pub residuals: Vec<f64>,
    /// Global objective of `z` after each iteration.
    pub objectives: Vec<f64>,
    /// Greedy majority votes cast.
    pub votes: usize,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub phases: Vec<usize>,
    pub report: SolverReport,
}

pub struct ConsensusProblem {
    objectives: Vec<LocalObjective>,
    counts: Vec<usize>,
}

impl ConsensusProblem {
    pub fn build(net: &Network, state: &QueueState, arrivals: &[f64], params: &CmppParams) -> Self {
        let pressures = all_phase_pressures(net, state);
        let objectives = (0..net.intersection_count())
            .map(|i| LocalObjective::build(net, state, arrivals, params, &pressures, IntersectionId(i)))
            .collect();
        ConsensusProblem::from_objectives(objectives)
    }

    pub fn from_objectives(objectives: Vec<LocalObjective>) -> Self {
        let counts = objectives.iter().map(|f| f.phase_counts()[0]).collect();
        ConsensusProblem { objectives, counts }
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn phase_counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn local(&self, i: usize) -> &LocalObjective {
        &self.objectives[i]
    }

    /// `M_i z`: the phases of `i`'s neighborhood members.
    pub fn view(&self, i: usize, z: &[usize]) -> Vec<usize> {
        self.objectives[i].members().iter().map(|j| z[j.0]).collect()
    }

    /// `Σ_i f_i(M_i z)`.
    pub fn objective(&self, z: &[usize]) -> f64 {
        (0..self.len()).map(|i| self.objectives[i].evaluate(&self.view(i, z))).sum()
    }

    pub(crate) fn maximize_local(
        &self,
        i: usize,
        bonus: Option<&[Vec<f64>]>,
        fixed: &[Option<usize>],
        mode: XUpdate,
    ) -> LocalOptimum {
        match mode {
            XUpdate::Decomposed => self.objectives[i].maximize(bonus, fixed),
            XUpdate::Enumerate => self.objectives[i].maximize_enumerate(bonus, fixed),
        }
    }

    /// Runs `f` for every intersection, on the rayon pool when asked. Results
    /// come back in intersection order either way.
    pub(crate) fn map_intersections<T: Send>(
        &self,
        parallel: bool,
        f: impl Fn(usize) -> T + Sync + Send,
    ) -> Vec<T> {
        if parallel {
            (0..self.len()).into_par_iter().map(f).collect()
        } else {
            (0..self.len()).map(f).collect()
        }
    }
}

pub fn solve(problem: &ConsensusProblem, config: &ConsensusConfig) -> Result<Solution, ConsensusError> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(ConsensusError::Config(problems));
    }
    match config.algorithm {
        Algorithm::Admm => Ok(solve_admm(problem, config)),
        Algorithm::Greedy => Ok(solve_greedy(problem, config)),
        Algorithm::Exhaustive => solve_exhaustive(problem, config.oracle_limit),
    }
}
