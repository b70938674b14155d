//! Greedy consensus with majority voting.
//!
//! Each outer iteration every intersection re-solves its local problem with
//! already determined phases pinned. Neighborhoods whose proposals agree are
//! determined as a whole; then every undetermined intersection whose `f*` is
//! smallest among its undetermined neighbors (ties by id) takes the majority
//! of its neighbors' proposals for its own phase.

use super::{Algorithm, ConsensusConfig, ConsensusProblem, Solution, SolverReport};
use crate::controllers::improves;

pub fn solve_greedy(problem: &ConsensusProblem, config: &ConsensusConfig) -> Solution {
    let n = problem.len();
    let mut determined: Vec<Option<usize>> = vec![None; n];
    let mut report = SolverReport { algorithm: Some(Algorithm::Greedy), ..SolverReport::default() };

    while determined.iter().any(Option::is_none) {
        report.iterations += 1;
        let proposals = problem.map_intersections(config.parallel, |i| {
            let fixed: Vec<Option<usize>> =
                problem.local(i).members().iter().map(|j| determined[j.0]).collect();
            problem.maximize_local(i, None, &fixed, config.x_update)
        });
        // (x_j)_i: what j proposes for member i.
        let proposal_for = |j: usize, i: usize| -> usize {
            let pos = problem.local(j).members().iter().position(|m| m.0 == i).expect("neighbor");
            proposals[j].phases[pos]
        };

        for i in 0..n {
            if determined[i].is_some() {
                continue;
            }
            let members = problem.local(i).members();
            let agrees = members[1..].iter().all(|j| {
                proposal_for(j.0, i) == proposals[i].phases[0]
                    && proposal_for(i, j.0) == proposals[j.0].phases[0]
            });
            if agrees {
                for j in members {
                    determined[j.0].get_or_insert(proposals[j.0].phases[0]);
                }
            }
        }

        let undetermined: Vec<bool> = determined.iter().map(Option::is_none).collect();
        // Strict order on (f*, id), with near-equal values tied.
        let before = |i: usize, j: usize| {
            let (a, b) = (proposals[i].value, proposals[j].value);
            improves(b, a) || (!improves(a, b) && i < j)
        };
        for i in 0..n {
            if !undetermined[i] {
                continue;
            }
            let neighbors = &problem.local(i).members()[1..];
            let is_local_min = neighbors
                .iter()
                .filter(|j| undetermined[j.0])
                .all(|j| before(i, j.0));
            if !is_local_min {
                continue;
            }
            let phase = if neighbors.is_empty() {
                proposals[i].phases[0]
            } else {
                let mut votes = vec![0usize; problem.phase_counts()[i]];
                for j in neighbors {
                    votes[proposal_for(j.0, i)] += 1;
                }
                let top = *votes.iter().max().expect("phases");
                votes.iter().position(|&v| v == top).expect("maximum present")
            };
            determined[i] = Some(phase);
            report.votes += 1;
        }
    }

    let phases: Vec<usize> = determined.into_iter().map(|p| p.expect("all determined")).collect();
    report.converged = true;
    report.objective = problem.objective(&phases);
    report.objectives.push(report.objective);
    Solution { phases, report }
}
