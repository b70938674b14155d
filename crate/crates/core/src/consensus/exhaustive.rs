//! Brute-force maximization of the global objective.

use super::{Algorithm, ConsensusError, ConsensusProblem, Solution, SolverReport};
use crate::controllers::improves;

/// Enumerates every global assignment, intersection 0 most significant, and
/// keeps the first maximizer found (so ties resolve lexicographically).
/// Values within [`crate::controllers::TIE_TOLERANCE`] count as ties.
pub fn solve_exhaustive(problem: &ConsensusProblem, limit: u64) -> Result<Solution, ConsensusError> {
    let size = problem
        .phase_counts()
        .iter()
        .try_fold(1u128, |acc, &k| acc.checked_mul(k as u128))
        .unwrap_or(u128::MAX);
    if size > limit as u128 {
        return Err(ConsensusError::OracleLimit { size, limit });
    }
    let counts = problem.phase_counts();
    let mut z = vec![0usize; counts.len()];
    let mut best = (f64::NEG_INFINITY, z.clone());
    loop {
        let value = problem.objective(&z);
        if best.0 == f64::NEG_INFINITY || improves(value, best.0) {
            best = (value, z.clone());
        }
        let mut n = z.len();
        loop {
            if n == 0 {
                return Ok(Solution {
                    phases: best.1,
                    report: SolverReport {
                        algorithm: Some(Algorithm::Exhaustive),
                        iterations: size as usize,
                        converged: true,
                        objectives: vec![best.0],
                        objective: best.0,
                        ..SolverReport::default()
                    },
                });
            }
            n -= 1;
            z[n] += 1;
            if z[n] < counts[n] {
                break;
            }
            z[n] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::random_problem;
    use super::*;
    use crate::controllers::CmppParams;

    #[test]
    fn single_intersection_is_local_argmax() {
        let params = CmppParams::default();
        for seed in 0..10 {
            let p = random_problem(1, 1, seed, &params);
            let oracle = solve_exhaustive(&p, 1_000_000).unwrap();
            let local = p.local(0).maximize_enumerate(None, &[None]);
            assert_eq!(oracle.phases, local.phases);
            assert_eq!(oracle.report.iterations, 8);
        }
    }

    #[test]
    fn two_by_two_visits_4096_assignments() {
        let p = random_problem(2, 2, 1, &CmppParams::default());
        let oracle = solve_exhaustive(&p, 1_000_000).unwrap();
        assert_eq!(oracle.report.iterations, 4096);
        // Nothing beats the returned assignment.
        let best = oracle.report.objective;
        for flip in 0..4 {
            for k in 0..8 {
                let mut z = oracle.phases.clone();
                z[flip] = k;
                assert!(p.objective(&z) <= best);
            }
        }
    }

    #[test]
    fn oversized_search_is_refused() {
        let p = random_problem(3, 3, 0, &CmppParams::default());
        assert_eq!(
            solve_exhaustive(&p, 1_000_000).unwrap_err(),
            ConsensusError::OracleLimit { size: 8u128.pow(9), limit: 1_000_000 }
        );
    }
}
