//! Local objective `f_i(x_i)` of the coordinated controller.
//!
//! `f_i` is the total pressure of the phases assigned to the neighborhood
//! minus `V·p_i`. Every penalty term couples the center's phase with at most
//! one other member (the upstream intersection of an incoming link with no
//! traversal delay, or the downstream intersection of an outgoing link), so
//! `f_i` is stored as one table per member plus one center×member table per
//! neighbor:
//!
//! ```text
//! f_i(x) = U_0[x_0] + Σ_{n ≥ 1} (U_n[x_n] + P_n[x_0][x_n])
//! ```
//!
//! This makes exact maximization cost `K_0 · Σ_n K_n` instead of `Π_n K_n`.

use super::pressure::improves;
use super::penalty::{
    downstream_overflow, expected_joining, green_run, green_term, own_overflow, CmppParams,
};
use crate::dynamics::QueueState;
use crate::network::{IntersectionId, MovementId, Network};

#[derive(Debug, Clone)]
pub struct LocalObjective {
    center: IntersectionId,
    members: Vec<IntersectionId>,
    counts: Vec<usize>,
    unary: Vec<Vec<f64>>,
    /// `pair[n][x_0 * counts[n] + x_n]`; `pair[0]` is unused.
    pair: Vec<Vec<f64>>,
}

/// A maximizer and its value.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOptimum {
    pub phases: Vec<usize>,
    pub value: f64,
}

impl LocalObjective {
    /// `pressures[j][k]` must hold `γ(j,k)` for every intersection.
    pub fn build(
        net: &Network,
        state: &QueueState,
        arrivals: &[f64],
        params: &CmppParams,
        pressures: &[Vec<f64>],
        i: IntersectionId,
    ) -> Self {
        let members = net.neighborhood(i).members().to_vec();
        let counts: Vec<usize> = members
            .iter()
            .map(|&j| net.intersection(j).phases.len())
            .collect();
        let position = |j: IntersectionId| members.iter().position(|&m| m == j);
        let k0 = counts[0];
        let v = params.v;
        let [a1, a2, a3] = params.alpha;

        let mut unary: Vec<Vec<f64>> = members.iter().map(|&j| pressures[j.0].clone()).collect();
        let mut pair: Vec<Vec<f64>> = counts
            .iter()
            .enumerate()
            .map(|(n, &kn)| if n == 0 { Vec::new() } else { vec![0.0; k0 * kn] })
            .collect();

        let inter = net.intersection(i);
        let in_phase = |m: MovementId, k: usize| net.phases_containing(m).contains(&k);
        for x0 in 0..k0 {
            let mut own_only = 0.0;
            let mut h3_total = 0usize;
            for &m in &inter.movements {
                let mv = net.movement(m);
                let own_green = in_phase(m, x0);

                // h1: coupling through the upstream intersection of l when
                // arrivals join without delay.
                let from = net.link(mv.from_link);
                let upstream_pos = from
                    .from
                    .filter(|&u| u != i && from.traversal_delay == 0)
                    .and_then(position);
                match upstream_pos {
                    Some(n) => {
                        let u = members[n];
                        for xn in 0..counts[n] {
                            let joining = expected_joining(net, state, arrivals, mv.from_link, |k| {
                                net.movement(k).intersection == u && in_phase(k, xn)
                            });
                            if own_overflow(net, state, m, own_green, joining) {
                                pair[n][x0 * counts[n] + xn] -= v * a1;
                            }
                        }
                    }
                    None => {
                        let joining = expected_joining(net, state, arrivals, mv.from_link, |k| {
                            net.movement(k).intersection == i && in_phase(k, x0)
                        });
                        if own_overflow(net, state, m, own_green, joining) {
                            own_only += a1;
                        }
                    }
                }

                // h2: coupling through the downstream intersection of m.
                for &p in net.downstream_of(mv.to_link) {
                    let owner = net.movement(p).intersection;
                    match position(owner).filter(|&n| n != 0) {
                        Some(n) => {
                            for xn in 0..counts[n] {
                                if downstream_overflow(net, state, m, own_green, p, in_phase(p, xn)) {
                                    pair[n][x0 * counts[n] + xn] -= v * a2;
                                }
                            }
                        }
                        None => {
                            let down_green = owner == i && in_phase(p, x0);
                            if downstream_overflow(net, state, m, own_green, p, down_green) {
                                own_only += a2;
                            }
                        }
                    }
                }

                if own_green {
                    h3_total += green_run(state, i, x0, params.history);
                }
            }
            own_only += a3 * green_term(params, h3_total, inter.movements.len());
            unary[0][x0] -= v * own_only;
        }

        LocalObjective {
            center: i,
            members,
            counts,
            unary,
            pair,
        }
    }

    pub fn center(&self) -> IntersectionId {
        self.center
    }

    pub fn members(&self) -> &[IntersectionId] {
        &self.members
    }

    pub fn phase_counts(&self) -> &[usize] {
        &self.counts
    }

    /// `f_i(x)` for one phase per member.
    pub fn evaluate(&self, phases: &[usize]) -> f64 {
        let x0 = phases[0];
        let mut total = self.unary[0][x0];
        for n in 1..self.members.len() {
            let xn = phases[n];
            total += self.unary[n][xn] + self.pair[n][x0 * self.counts[n] + xn];
        }
        total
    }

    fn domain(&self, n: usize, fixed: &[Option<usize>]) -> std::ops::Range<usize> {
        match fixed.get(n).copied().flatten() {
            Some(k) => k..k + 1,
            None => 0..self.counts[n],
        }
    }

    /// Exact maximizer of `f_i(x) + Σ_n bonus[n][x_n]` with some members
    /// pinned. Among ties, the lexicographically smallest assignment.
    pub fn maximize(&self, bonus: Option<&[Vec<f64>]>, fixed: &[Option<usize>]) -> LocalOptimum {
        let b = |n: usize, k: usize| bonus.map_or(0.0, |b| b[n][k]);
        let mut best: Option<LocalOptimum> = None;
        let mut choice = vec![0; self.members.len()];
        for x0 in self.domain(0, fixed) {
            choice[0] = x0;
            let mut total = self.unary[0][x0] + b(0, x0);
            for n in 1..self.members.len() {
                let mut best_n: Option<(usize, f64)> = None;
                for xn in self.domain(n, fixed) {
                    let val = self.unary[n][xn] + self.pair[n][x0 * self.counts[n] + xn] + b(n, xn);
                    if best_n.is_none_or(|(_, bv)| improves(val, bv)) {
                        best_n = Some((xn, val));
                    }
                }
                let (xn, val) = best_n.expect("non-empty domain");
                choice[n] = xn;
                total += val;
            }
            if best.as_ref().is_none_or(|b| improves(total, b.value)) {
                best = Some(LocalOptimum {
                    phases: choice.clone(),
                    value: total,
                });
            }
        }
        best.expect("non-empty domain")
    }

    /// Brute-force counterpart of [`LocalObjective::maximize`], visiting all
    /// `Π_n K_n` assignments. Partial sums over members `0..n` are kept per
    /// level so each assignment costs one term, added in the same order as
    /// [`LocalObjective::evaluate`].
    pub fn maximize_enumerate(
        &self,
        bonus: Option<&[Vec<f64>]>,
        fixed: &[Option<usize>],
    ) -> LocalOptimum {
        let len = self.members.len();
        let domains: Vec<_> = (0..len).map(|n| self.domain(n, fixed)).collect();
        let term = |n: usize, x0: usize, xn: usize| -> f64 {
            let b = bonus.map_or(0.0, |b| b[n][xn]);
            if n == 0 {
                self.unary[0][x0] + b
            } else {
                self.unary[n][xn] + self.pair[n][x0 * self.counts[n] + xn] + b
            }
        };
        let mut current: Vec<usize> = domains.iter().map(|d| d.start).collect();
        let mut partial = vec![0.0; len];
        let mut best_value = f64::NEG_INFINITY;
        let mut best_phases = current.clone();
        let mut dirty = 0;
        loop {
            for n in dirty..len {
                let before = if n == 0 { 0.0 } else { partial[n - 1] };
                let t = term(n, current[0], current[n]);
                partial[n] = if n == 0 { t } else { before + t };
            }
            let val = partial[len - 1];
            if best_value == f64::NEG_INFINITY || improves(val, best_value) {
                best_value = val;
                best_phases.copy_from_slice(&current);
            }
            // Odometer with member 0 most significant.
            let mut n = len;
            loop {
                if n == 0 {
                    return LocalOptimum { phases: best_phases, value: best_value };
                }
                n -= 1;
                current[n] += 1;
                if current[n] < domains[n].end {
                    break;
                }
                current[n] = domains[n].start;
            }
            dirty = n;
        }
    }
}
