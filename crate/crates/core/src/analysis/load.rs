//! Expected flows and intersection utilization under a demand level.
//!
//! Utilization of an intersection is the least total green time fraction
//! `Σ_k θ_k` such that every movement's expected flow is served:
//! `Σ_{k ∋ m} θ_k c_m ≥ f_m`. A value above 1 means no phase split can keep
//! up.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::network::{IntersectionId, LinkKind, Network};

/// Long-run movement flows when every entry link receives `rate` vehicles
/// per step.
pub fn expected_movement_flows(net: &Network, rate: f64) -> Vec<f64> {
    let links = net.links();
    let mut link_rate: Vec<f64> = links
        .iter()
        .map(|l| if l.kind == LinkKind::Entry { rate } else { 0.0 })
        .collect();
    for _ in 0..10_000 {
        let mut next: Vec<f64> = links
            .iter()
            .map(|l| if l.kind == LinkKind::Entry { rate } else { 0.0 })
            .collect();
        for mv in net.movements() {
            next[mv.to_link.0] += mv.turning_ratio * link_rate[mv.from_link.0];
        }
        let change = next.iter().zip(&link_rate).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        link_rate = next;
        if change < 1e-12 {
            break;
        }
    }
    net.movements()
        .iter()
        .map(|mv| mv.turning_ratio * link_rate[mv.from_link.0])
        .collect()
}

pub fn intersection_utilization(net: &Network, flows: &[f64], i: IntersectionId) -> f64 {
    let inter = net.intersection(i);
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let theta: Vec<_> = inter.phases.iter().map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for &m in &inter.movements {
        let c = net.movement(m).capacity;
        let terms: Vec<_> = net.phases_containing(m).iter().map(|&k| (theta[k], c)).collect();
        if flows[m.0] > 0.0 {
            lp.add_constraint(&terms[..], ComparisonOp::Ge, flows[m.0]);
        }
    }
    match lp.solve() {
        Ok(solution) => solution.objective(),
        // A movement in no phase cannot be served at all.
        Err(_) => f64::INFINITY,
    }
}

/// Entry rate giving a peak intersection utilization of `load`.
pub fn entry_rate_for_load(net: &Network, load: f64) -> f64 {
    let flows = expected_movement_flows(net, 1.0);
    let peak = (0..net.intersection_count())
        .map(|i| intersection_utilization(net, &flows, IntersectionId(i)))
        .fold(0.0, f64::max);
    if peak > 0.0 {
        load / peak
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_grid, GridConfig};

    #[test]
    fn flows_conserve_vehicles_through_a_single_intersection() {
        let net = build_grid(1, 1, &GridConfig::default()).unwrap();
        let flows = expected_movement_flows(&net, 1.0);
        let total: f64 = flows.iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn utilization_is_linear_in_demand() {
        let net = build_grid(2, 2, &GridConfig::default()).unwrap();
        let rate = entry_rate_for_load(&net, 0.8);
        let flows = expected_movement_flows(&net, rate);
        let peak = (0..4)
            .map(|i| intersection_utilization(&net, &flows, IntersectionId(i)))
            .fold(0.0, f64::max);
        assert!((peak - 0.8).abs() < 1e-6);
    }

    #[test]
    fn single_approach_utilization_by_hand() {
        // Only west/east open: two through movements (c = 8, r = 1) sharing
        // the EW-through phase. Rate 4 needs half the time.
        let config = GridConfig { open_sides: vec![crate::network::Side::West, crate::network::Side::East], ..GridConfig::default() };
        let net = build_grid(1, 1, &config).unwrap();
        let flows = expected_movement_flows(&net, 4.0);
        assert!((intersection_utilization(&net, &flows, IntersectionId(0)) - 0.5).abs() < 1e-9);
    }
}
