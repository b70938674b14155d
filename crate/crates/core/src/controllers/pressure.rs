//! Movement weights and phase pressures.

use crate::dynamics::QueueState;
use crate::network::{IntersectionId, MovementId, Network};

/// `w(l,m) = q(l,m) - Σ_{p ∈ D_m} r(m,p) q(m,p)`; the sum is empty for
/// movements into exit links.
pub fn movement_weight(net: &Network, state: &QueueState, m: MovementId) -> f64 {
    let mv = net.movement(m);
    let downstream: f64 = net
        .downstream_of(mv.to_link)
        .iter()
        .map(|&p| net.movement(p).turning_ratio * state.queue(p))
        .sum();
    state.queue(m) - downstream
}

pub fn movement_weights(net: &Network, state: &QueueState) -> Vec<f64> {
    (0..net.movements().len())
        .map(|m| movement_weight(net, state, MovementId(m)))
        .collect()
}

/// `γ(i,k) = Σ_{(l,m) ∈ k} c(l,m) w(l,m)`.
pub fn phase_pressure(net: &Network, state: &QueueState, i: IntersectionId, phase: usize) -> f64 {
    net.intersection(i).phases[phase]
        .movements
        .iter()
        .map(|&m| net.movement(m).capacity * movement_weight(net, state, m))
        .sum()
}

/// All phase pressures of `i` from precomputed weights.
pub fn phase_pressures_from(net: &Network, weights: &[f64], i: IntersectionId) -> Vec<f64> {
    net.intersection(i)
        .phases
        .iter()
        .map(|p| {
            p.movements
                .iter()
                .map(|&m| net.movement(m).capacity * weights[m.0])
                .sum()
        })
        .collect()
}

/// Pressures of every phase of every intersection.
pub fn all_phase_pressures(net: &Network, state: &QueueState) -> Vec<Vec<f64>> {
    let weights = movement_weights(net, state);
    (0..net.intersection_count())
        .map(|i| phase_pressures_from(net, &weights, IntersectionId(i)))
        .collect()
}

/// Relative gap below which two objective values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// `candidate` beats `incumbent` by more than rounding noise.
pub fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIE_TOLERANCE * incumbent.abs().max(1.0)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if improves(v, values[best]) {
            best = k;
        }
    }
    best
}

/// Max-pressure phase of `i`.
pub fn mp_select(net: &Network, state: &QueueState, i: IntersectionId) -> usize {
    let pressures: Vec<f64> = (0..net.intersection(i).phases.len())
        .map(|k| phase_pressure(net, state, i, k))
        .collect();
    argmax(&pressures)
}
