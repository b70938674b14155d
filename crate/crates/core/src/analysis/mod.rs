//! Stability diagnostics and experiment metrics.

pub mod load;
pub mod stability;
pub mod summary;

use serde::Serialize;
use thiserror::Error;

pub use load::{entry_rate_for_load, expected_movement_flows, intersection_utilization};
pub use stability::{stability_report, StabilityReport};
pub use summary::{summarize, Summary};

use crate::dynamics::{CompletedVehicle, ControlAction, QueueState};
use crate::network::{MovementId, Network};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("log has {0} rows; at least 2 are needed")]
    TooShort(usize),
}

/// `(½ Σ q², ½ Σ κ q²)` over movement queues.
pub fn lyapunov(net: &Network, state: &QueueState) -> (f64, f64) {
    lyapunov_of(&state.queues, |m| net.kappa(MovementId(m)) as f64)
}

pub fn lyapunov_of(queues: &[f64], kappa: impl Fn(usize) -> f64) -> (f64, f64) {
    let mut plain = 0.0;
    let mut weighted = 0.0;
    for (m, &q) in queues.iter().enumerate() {
        plain += q * q;
        weighted += kappa(m) * q * q;
    }
    (0.5 * plain, 0.5 * weighted)
}

/// Vehicles actually served per movement: `min(q, c)` when green, with the
/// capacity rounded down for whole vehicles.
pub fn service(net: &Network, state: &QueueState, action: &ControlAction, whole_vehicles: bool) -> Vec<f64> {
    let signals = action.signals(net);
    net.movements()
        .iter()
        .enumerate()
        .map(|(m, mv)| {
            if !signals[m] {
                return 0.0;
            }
            let cap = if whole_vehicles { (mv.capacity + 1e-9).floor() } else { mv.capacity };
            state.queues[m].min(cap)
        })
        .collect()
}

/// One row per simulated step.
///
/// Row `t` describes the state at the start of step `t`; the decision
/// columns describe the action taken during that step and are empty on the
/// final row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub total_queue: f64,
    pub vehicles_in_network: f64,
    pub entered: f64,
    pub exited: f64,
    pub lyapunov: f64,
    pub lyapunov_weighted: f64,
    pub penalty_total: Option<f64>,
    pub penalty_max: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub steps: Vec<StepRecord>,
    /// Controller wall time per decision, seconds.
    pub solver_seconds: Vec<f64>,
    pub vehicles: Vec<CompletedVehicle>,
    pub token_mode: bool,
    /// Running sums of `c·s` and of realized inflow, per movement.
    pub offered_service: Vec<f64>,
    pub realized_inflow: Vec<f64>,
    pub decisions: usize,
}

impl MetricsLog {
    pub fn new(net: &Network, token_mode: bool) -> Self {
        MetricsLog {
            token_mode,
            offered_service: vec![0.0; net.movements().len()],
            realized_inflow: vec![0.0; net.movements().len()],
            ..MetricsLog::default()
        }
    }

    /// Appends the row for `state`. Decision columns are filled later by
    /// [`MetricsLog::record_decision`].
    pub fn record_state(&mut self, net: &Network, state: &QueueState) {
        let (plain, weighted) = lyapunov(net, state);
        self.steps.push(StepRecord {
            t: state.t,
            total_queue: state.total_queue(),
            vehicles_in_network: state.vehicles_in_network(),
            entered: state.entered,
            exited: state.exited,
            lyapunov: plain,
            lyapunov_weighted: weighted,
            penalty_total: None,
            penalty_max: None,
            iterations: None,
            converged: None,
        });
    }

    /// Attaches the decision taken from the last recorded state and the
    /// transition it produced.
    #[allow(clippy::too_many_arguments)]
    pub fn record_decision(
        &mut self,
        net: &Network,
        action: &ControlAction,
        before: &QueueState,
        after: &QueueState,
        served: &[f64],
        penalties: Option<&[f64]>,
        solver: Option<(usize, bool)>,
        seconds: f64,
    ) {
        let row = self.steps.last_mut().expect("state recorded before decision");
        if let Some(p) = penalties {
            row.penalty_total = Some(p.iter().sum());
            row.penalty_max = Some(p.iter().copied().fold(0.0, f64::max));
        }
        if let Some((iterations, converged)) = solver {
            row.iterations = Some(iterations);
            row.converged = Some(converged);
        }
        self.solver_seconds.push(seconds);
        self.decisions += 1;
        let signals = action.signals(net);
        for (m, mv) in net.movements().iter().enumerate() {
            if signals[m] {
                self.offered_service[m] += mv.capacity;
            }
            self.realized_inflow[m] += after.queues[m] - before.queues[m] + served[m];
        }
    }

    pub fn record_vehicles(&mut self, done: &[CompletedVehicle]) {
        self.vehicles.extend_from_slice(done);
    }

    pub fn lyapunov_series(&self) -> Vec<(f64, f64)> {
        self.steps.iter().map(|r| (r.lyapunov, r.lyapunov_weighted)).collect()
    }
}

/// One-step differences `L(t+1) - L(t)` of the plain and weighted values.
pub fn drift_series(log: &MetricsLog) -> Result<Vec<(f64, f64)>, AnalysisError> {
    drift_of(&log.lyapunov_series())
}

pub fn drift_of(values: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if values.len() < 2 {
        return Err(AnalysisError::TooShort(values.len()));
    }
    Ok(values.windows(2).map(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1)).collect())
}

/// Mean of `values[from..to]`, 0 for an empty range.
pub(crate) fn window_mean(values: &[f64], from: usize, to: usize) -> f64 {
    let slice = &values[from.min(values.len())..to.min(values.len())];
    if slice.is_empty() {
        0.0
    } else {
        slice.iter().sum::<f64>() / slice.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_grid, GridConfig};
    use proptest::prelude::*;

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov_of(&[3.0, 4.0], |_| 1.0), (12.5, 12.5));
        assert_eq!(lyapunov_of(&[0.0, 0.0], |_| 2.0), (0.0, 0.0));
        assert_eq!(lyapunov_of(&[2.0], |_| 3.0), (2.0, 6.0));
    }

    #[test]
    fn grid_kappa_weights() {
        let net = build_grid(1, 2, &GridConfig::default()).unwrap();
        let mut s = QueueState::empty(&net, 0);
        s.queues[0] = 2.0;
        // Both intersections have one neighbor: κ = 2.
        assert_eq!(lyapunov(&net, &s), (2.0, 4.0));
    }

    #[test]
    fn drift_examples() {
        assert_eq!(drift_of(&[(0.0, 0.0), (12.5, 12.5)]).unwrap(), vec![(12.5, 12.5)]);
        assert_eq!(drift_of(&[(3.0, 3.0); 4]).unwrap(), vec![(0.0, 0.0); 3]);
        let falling = drift_of(&[(9.0, 9.0), (5.0, 6.0), (1.0, 2.0)]).unwrap();
        assert!(falling.iter().all(|d| d.0 < 0.0 && d.1 < 0.0));
        assert_eq!(drift_of(&[(1.0, 1.0)]), Err(AnalysisError::TooShort(1)));
    }

    proptest! {
        #[test]
        fn weighted_dominates_plain(
            queues in prop::collection::vec(0.0f64..100.0, 1..20),
            extra in prop::collection::vec(0u32..5, 20),
        ) {
            let (plain, weighted) = lyapunov_of(&queues, |m| 1.0 + extra[m] as f64);
            prop_assert!(weighted >= plain);
        }

        #[test]
        fn drift_telescopes(values in prop::collection::vec(0u32..1000, 2..50)) {
            let series: Vec<(f64, f64)> = values.iter().map(|&v| (v as f64, 2.0 * v as f64)).collect();
            let d = drift_of(&series).unwrap();
            let sum: f64 = d.iter().map(|x| x.0).sum();
            prop_assert_eq!(sum, series.last().unwrap().0 - series[0].0);
        }
    }
}
