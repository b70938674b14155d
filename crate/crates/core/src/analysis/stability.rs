//! Empirical stability report of one run.

use serde::Serialize;

use super::{window_mean, MetricsLog};
use crate::controllers::{penalty_upper_bound, CmppParams};
use crate::network::{MovementId, Network};

/// Relative tolerance of the quarter-over-quarter stationarity check.
pub const STATIONARITY_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub decisions: usize,
    pub average_total_queue: f64,
    pub v: Option<f64>,
    pub p_max: f64,
    pub kappa_min: u32,
    pub kappa_max: u32,
    /// `min_m` of the time-averaged `c·s - a` over movements that received
    /// traffic; `None` when nothing moved.
    pub epsilon_hat: Option<f64>,
    pub epsilon_prime_min_kappa: Option<f64>,
    pub epsilon_prime_max_kappa: Option<f64>,
    /// Movement attaining `epsilon_hat`.
    pub tightest_movement: Option<String>,
    pub infeasible: bool,
    pub third_quarter_vehicles: f64,
    pub last_quarter_vehicles: f64,
    pub stationary: bool,
    pub max_realized_penalty: Option<f64>,
    pub penalty_within_bound: Option<bool>,
}

pub fn stability_report(log: &MetricsLog, params: Option<&CmppParams>, net: &Network) -> StabilityReport {
    let n = log.decisions.max(1) as f64;
    let mut epsilon: Option<(f64, usize)> = None;
    for m in 0..net.movements().len() {
        if log.realized_inflow[m] <= 0.0 {
            continue;
        }
        let margin = (log.offered_service[m] - log.realized_inflow[m]) / n;
        if epsilon.is_none_or(|(e, _)| margin < e) {
            epsilon = Some((margin, m));
        }
    }
    let kappas: Vec<u32> = (0..net.movements().len()).map(|m| net.kappa(MovementId(m))).collect();
    let kappa_min = kappas.iter().copied().min().unwrap_or(1);
    let kappa_max = kappas.iter().copied().max().unwrap_or(1);

    let totals: Vec<f64> = log.steps.iter().map(|r| r.total_queue).collect();
    let vehicles: Vec<f64> = log.steps.iter().map(|r| r.vehicles_in_network).collect();
    let len = vehicles.len();
    let third = window_mean(&vehicles, len / 2, 3 * len / 4);
    let last = window_mean(&vehicles, 3 * len / 4, len);
    let stationary = (last - third).abs() <= STATIONARITY_TOLERANCE * third.abs() || (last == 0.0 && third == 0.0);

    let p_max = params.map_or(0.0, |p| penalty_upper_bound(net, p));
    let max_penalty = log
        .steps
        .iter()
        .filter_map(|r| r.penalty_max)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))));

    StabilityReport {
        decisions: log.decisions,
        average_total_queue: window_mean(&totals, 0, totals.len()),
        v: params.map(|p| p.v),
        p_max,
        kappa_min,
        kappa_max,
        epsilon_hat: epsilon.map(|e| e.0),
        epsilon_prime_min_kappa: epsilon.map(|e| e.0 * kappa_min as f64),
        epsilon_prime_max_kappa: epsilon.map(|e| e.0 * kappa_max as f64),
        tightest_movement: epsilon.map(|(_, m)| net.movement(MovementId(m)).name.clone()),
        infeasible: epsilon.is_some_and(|e| e.0 <= 0.0),
        third_quarter_vehicles: third,
        last_quarter_vehicles: last,
        stationary,
        max_realized_penalty: max_penalty,
        penalty_within_bound: max_penalty.map(|p| p <= p_max),
    }
}
