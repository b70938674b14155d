//! Per-run summary metrics.

use serde::{Deserialize, Serialize};

use super::{window_mean, MetricsLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub decisions: usize,
    pub token_mode: bool,
    pub vehicles_completed: usize,
    /// Absent for fluid runs and for runs in which no vehicle finished.
    pub mean_travel_seconds: Option<f64>,
    pub median_travel_seconds: Option<f64>,
    pub mean_waiting_seconds: Option<f64>,
    pub peak_vehicles: f64,
    pub mean_vehicles: f64,
    pub final_vehicles: f64,
    pub mean_solver_seconds: f64,
    pub max_solver_seconds: f64,
    pub mean_iterations: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn summarize(log: &MetricsLog, step_seconds: f64) -> Summary {
    let mut notes = Vec::new();
    let (mean_travel, median_travel, mean_wait) = if !log.token_mode {
        notes.push("fluid run: per-vehicle travel and waiting times are not defined".to_string());
        (None, None, None)
    } else if log.vehicles.is_empty() {
        (None, None, None)
    } else {
        let mut travel: Vec<usize> = log.vehicles.iter().map(|v| v.travel_steps()).collect();
        travel.sort_unstable();
        let n = travel.len();
        let mean = travel.iter().sum::<usize>() as f64 / n as f64;
        let median = if n % 2 == 1 {
            travel[n / 2] as f64
        } else {
            (travel[n / 2 - 1] + travel[n / 2]) as f64 / 2.0
        };
        let wait = log.vehicles.iter().map(|v| v.waiting_steps as f64).sum::<f64>() / n as f64;
        (Some(mean * step_seconds), Some(median * step_seconds), Some(wait * step_seconds))
    };

    let vehicles: Vec<f64> = log.steps.iter().map(|r| r.vehicles_in_network).collect();
    let iterations: Vec<f64> = log.steps.iter().filter_map(|r| r.iterations.map(|i| i as f64)).collect();
    Summary {
        decisions: log.decisions,
        token_mode: log.token_mode,
        vehicles_completed: log.vehicles.len(),
        mean_travel_seconds: mean_travel,
        median_travel_seconds: median_travel,
        mean_waiting_seconds: mean_wait,
        peak_vehicles: vehicles.iter().copied().fold(0.0, f64::max),
        mean_vehicles: window_mean(&vehicles, 0, vehicles.len()),
        final_vehicles: vehicles.last().copied().unwrap_or(0.0),
        mean_solver_seconds: window_mean(&log.solver_seconds, 0, log.solver_seconds.len()),
        max_solver_seconds: log.solver_seconds.iter().copied().fold(0.0, f64::max),
        mean_iterations: (!iterations.is_empty()).then(|| window_mean(&iterations, 0, iterations.len())),
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::CompletedVehicle;

    fn token_log(vehicles: Vec<CompletedVehicle>) -> MetricsLog {
        MetricsLog { token_mode: true, vehicles, ..MetricsLog::default() }
    }

    #[test]
    fn single_free_vehicle() {
        let log = token_log(vec![CompletedVehicle { id: 0, entry_step: 4, exit_step: 7, waiting_steps: 0 }]);
        let s = summarize(&log, 20.0);
        assert_eq!(s.mean_travel_seconds, Some(60.0));
        assert_eq!(s.median_travel_seconds, Some(60.0));
        assert_eq!(s.mean_waiting_seconds, Some(0.0));
    }

    #[test]
    fn median_of_even_count() {
        let v = |travel: usize, wait: u32| CompletedVehicle { id: 0, entry_step: 0, exit_step: travel, waiting_steps: wait };
        let s = summarize(&token_log(vec![v(2, 0), v(4, 2), v(3, 1), v(9, 4)]), 1.0);
        assert_eq!(s.median_travel_seconds, Some(3.5));
        assert_eq!(s.mean_travel_seconds, Some(4.5));
        assert_eq!(s.mean_waiting_seconds, Some(1.75));
    }

    #[test]
    fn empty_and_fluid_logs() {
        let s = summarize(&token_log(vec![]), 20.0);
        assert_eq!(s.vehicles_completed, 0);
        assert_eq!(s.mean_travel_seconds, None);
        assert!(s.notes.is_empty());
        let fluid = summarize(&MetricsLog::default(), 20.0);
        assert_eq!(fluid.mean_travel_seconds, None);
        assert_eq!(fluid.notes.len(), 1);
    }
}
