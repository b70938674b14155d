//! Overflow and continuous-green penalty of one intersection.
//!
//! For a neighborhood assignment `x_i` the penalty sums, over the movements
//! of the center intersection,
//!
//! * `α1` if the predicted own queue exceeds its threshold,
//! * `α2` for each downstream movement whose inflow-bound prediction exceeds
//!   its threshold (downstream signals come from `x_i` when the downstream
//!   intersection is a neighbor, red otherwise),
//! * `α3` times the number of steps in the window `t-H ..= t` during which the
//!   currently chosen phase (containing the movement) was green.
//!
//! The `α3` part summed over the intersection is capped at `H·|Λ_i|` unless
//! [`CmppParams::cap_green_term`] is off; with the cap the penalty never
//! exceeds [`penalty_upper_bound`].

use serde::{Deserialize, Serialize};

use crate::dynamics::QueueState;
use crate::network::{IntersectionId, MovementId, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmppParams {
    /// `[α1, α2, α3]`: own overflow, downstream overflow, continuous green.
    pub alpha: [f64; 3],
    /// History horizon `H` in steps.
    pub history: usize,
    /// Penalty weight `V`.
    pub v: f64,
    pub cap_green_term: bool,
}

impl Default for CmppParams {
    fn default() -> Self {
        CmppParams {
            alpha: [4.0, 2.0, 0.1],
            history: 3,
            v: 1.0,
            cap_green_term: true,
        }
    }
}

/// Where a signal value inside the penalty comes from.
pub(crate) struct SignalSource<'a> {
    pub net: &'a Network,
    pub members: &'a [IntersectionId],
    pub phases: &'a [usize],
}

impl SignalSource<'_> {
    fn phase_of(&self, j: IntersectionId) -> Option<usize> {
        self.members
            .iter()
            .position(|&m| m == j)
            .map(|pos| self.phases[pos])
    }

    /// Green iff the owner is in the neighborhood and its assigned phase
    /// contains `m`.
    pub fn green(&self, m: MovementId) -> bool {
        let owner = self.net.movement(m).intersection;
        self.phase_of(owner)
            .is_some_and(|k| self.net.phases_containing(m).contains(&k))
    }
}

/// Vehicles joining the queues of link `l` next step, given upstream signals.
pub(crate) fn expected_joining(
    net: &Network,
    state: &QueueState,
    arrivals: &[f64],
    l: crate::network::LinkId,
    green: impl Fn(MovementId) -> bool,
) -> f64 {
    let link = net.link(l);
    if link.traversal_delay > 0 {
        return state.transit[l.0].front().copied().unwrap_or(0.0);
    }
    let upstream: f64 = net
        .upstream_of(l)
        .iter()
        .map(|&k| if green(k) { state.outflow_bound(net, k) } else { 0.0 })
        .sum();
    upstream + arrivals[l.0]
}

/// `h1`: own predicted queue strictly above threshold.
pub(crate) fn own_overflow(net: &Network, state: &QueueState, m: MovementId, own_green: bool, joining: f64) -> bool {
    let mv = net.movement(m);
    let served = if own_green { state.outflow_bound(net, m) } else { 0.0 };
    (state.queue(m) - served) + joining * mv.turning_ratio > mv.queue_threshold
}

/// `h2`: downstream bound `q(m,p) - y(m,p) s(m,p) + y(l,m) s(l,m)` strictly
/// above the threshold of `(m,p)`.
pub(crate) fn downstream_overflow(
    net: &Network,
    state: &QueueState,
    m: MovementId,
    own_green: bool,
    p: MovementId,
    down_green: bool,
) -> bool {
    let served_p = if down_green { state.outflow_bound(net, p) } else { 0.0 };
    let served_m = if own_green { state.outflow_bound(net, m) } else { 0.0 };
    (state.queue(p) - served_p) + served_m > net.movement(p).queue_threshold
}

/// Steps in `t-H ..= t` during which `phase` was green at `i`, counting the
/// current step.
pub(crate) fn green_run(state: &QueueState, i: IntersectionId, phase: usize, horizon: usize) -> usize {
    1 + state.history.count_recent(i, phase, horizon)
}

/// `p_i(x_i)`; `phases` lists one phase per neighborhood member of `i`
/// (center first, see [`crate::network::Neighborhood::members`]).
pub fn penalty(
    net: &Network,
    state: &QueueState,
    arrivals: &[f64],
    params: &CmppParams,
    i: IntersectionId,
    phases: &[usize],
) -> f64 {
    let members = net.neighborhood(i).members();
    assert_eq!(phases.len(), members.len(), "one phase per neighborhood member");
    let signals = SignalSource {
        net,
        members,
        phases,
    };
    let chosen = phases[0];
    let [a1, a2, a3] = params.alpha;

    let mut h1_total = 0.0;
    let mut h2_total = 0.0;
    let mut h3_total = 0usize;
    let inter = net.intersection(i);
    for &m in &inter.movements {
        let mv = net.movement(m);
        let own_green = signals.green(m);
        let joining = expected_joining(net, state, arrivals, mv.from_link, |k| signals.green(k));
        if own_overflow(net, state, m, own_green, joining) {
            h1_total += 1.0;
        }
        for &p in net.downstream_of(mv.to_link) {
            if downstream_overflow(net, state, m, own_green, p, signals.green(p)) {
                h2_total += 1.0;
            }
        }
        if net.phases_containing(m).contains(&chosen) {
            h3_total += green_run(state, i, chosen, params.history);
        }
    }
    a1 * h1_total + a2 * h2_total + a3 * green_term(params, h3_total, inter.movements.len())
}

pub(crate) fn green_term(params: &CmppParams, h3_total: usize, movements: usize) -> f64 {
    if params.cap_green_term {
        h3_total.min(params.history * movements) as f64
    } else {
        h3_total as f64
    }
}

/// `p_max = M_max (α1 + D_max α2 + α3 H)`.
pub fn penalty_upper_bound(net: &Network, params: &CmppParams) -> f64 {
    bound_from_counts(net.max_movements(), net.max_downstream(), params)
}

pub fn bound_from_counts(max_movements: usize, max_downstream: usize, params: &CmppParams) -> f64 {
    let [a1, a2, a3] = params.alpha;
    max_movements as f64 * (a1 + max_downstream as f64 * a2 + a3 * params.history as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ControlAction;
    use crate::network::{build_grid, GridConfig, IntersectionId};

    fn grid1() -> Network {
        let config = GridConfig {
            entry_delay: 0,
            internal_delay: 0,
            exit_delay: 0,
            ..GridConfig::default()
        };
        build_grid(1, 1, &config).unwrap()
    }

    #[test]
    fn bound_examples() {
        let p = CmppParams::default();
        assert!((bound_from_counts(12, 3, &p) - 123.6).abs() < 1e-12);
        let zero = CmppParams { alpha: [0.0; 3], ..p.clone() };
        assert_eq!(bound_from_counts(12, 3, &zero), 0.0);
        let ones = CmppParams { alpha: [1.0; 3], history: 1, ..p };
        assert_eq!(bound_from_counts(1, 1, &ones), 3.0);
    }

    #[test]
    fn quiet_network_only_pays_the_current_green_step() {
        let net = grid1();
        let state = QueueState::empty(&net, 4);
        let arrivals = vec![0.0; net.links().len()];
        let params = CmppParams::default();
        let phase = 0;
        let in_phase = net.intersection(IntersectionId(0)).phases[phase].movements.len();
        let p = penalty(&net, &state, &arrivals, &params, IntersectionId(0), &[phase]);
        assert!((p - 0.1 * in_phase as f64).abs() < 1e-12);
    }

    #[test]
    fn threshold_is_strict() {
        let net = grid1();
        let mut state = QueueState::empty(&net, 0);
        let m = net.intersection(IntersectionId(0)).movements[0];
        let arrivals = vec![0.0; net.links().len()];
        // Red movement holding exactly q̄ vehicles: no own overflow.
        state.queues[m.0] = net.movement(m).queue_threshold;
        let params = CmppParams { alpha: [1.0, 0.0, 0.0], ..CmppParams::default() };
        let red_phase = (0..8)
            .find(|&k| !net.phases_containing(m).contains(&k))
            .unwrap();
        assert_eq!(penalty(&net, &state, &arrivals, &params, IntersectionId(0), &[red_phase]), 0.0);
        state.queues[m.0] += 0.5;
        assert_eq!(penalty(&net, &state, &arrivals, &params, IntersectionId(0), &[red_phase]), 1.0);
    }

    #[test]
    fn sustained_green_counts_the_whole_window() {
        let net = grid1();
        let mut state = QueueState::empty(&net, 4);
        for _ in 0..3 {
            state.history.record(&ControlAction::new(vec![2]));
        }
        let arrivals = vec![0.0; net.links().len()];
        let params = CmppParams { alpha: [0.0, 0.0, 1.0], ..CmppParams::default() };
        let in_phase = net.intersection(IntersectionId(0)).phases[2].movements.len();
        let p = penalty(&net, &state, &arrivals, &params, IntersectionId(0), &[2]);
        assert_eq!(p, 4.0 * in_phase as f64);
        // Older activity beyond H is ignored.
        let p = penalty(&net, &state, &arrivals, &CmppParams { history: 1, ..params.clone() }, IntersectionId(0), &[2]);
        assert_eq!(p, 2.0 * in_phase as f64);
        // Short history: window is truncated to what exists.
        let fresh = QueueState::empty(&net, 4);
        assert_eq!(penalty(&net, &fresh, &arrivals, &params, IntersectionId(0), &[2]), in_phase as f64);
    }

    #[test]
    fn green_cap_binds_only_when_the_window_would_break_the_bound() {
        let params = CmppParams::default();
        assert_eq!(green_term(&params, 24, 12), 24.0);
        assert_eq!(green_term(&params, 48, 12), 36.0);
        let literal = CmppParams { cap_green_term: false, ..params };
        assert_eq!(green_term(&literal, 48, 12), 48.0);
    }
}
