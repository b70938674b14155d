//! Synthetic rectangular street grids.
//!
//! Every intersection is a 4-way crossing with one queue per (approach, turn)
//! movement. Boundary sides that are open get one entry and one exit link per
//! boundary intersection. Phases follow the usual eight-phase layout: the four
//! paired phases (opposing through, opposing left for each axis) and the four
//! single-approach phases (through + left of one approach). Right turns are
//! green in every phase.

use serde::{Deserialize, Serialize};

use super::{
    IntersectionSpec, LinkKind, LinkSpec, MovementSpec, Network, NetworkError, NetworkSpec, Turn,
};

/// Travel heading, and by extension the side of an intersection a heading
/// points to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    North,
    East,
    South,
    West,
}

impl Side {
    const ALL: [Side; 4] = [Side::North, Side::East, Side::South, Side::West];

    fn index(self) -> usize {
        self as usize
    }

    fn opposite(self) -> Side {
        Side::ALL[(self.index() + 2) % 4]
    }

    /// Heading after taking `turn` while traveling along `self`.
    fn after(self, turn: Turn) -> Side {
        match turn {
            Turn::Through => self,
            Turn::Right => Side::ALL[(self.index() + 1) % 4],
            Turn::Left => Side::ALL[(self.index() + 3) % 4],
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Side::North => "n",
            Side::East => "e",
            Side::South => "s",
            Side::West => "w",
        }
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Side::North => (-1, 0),
            Side::East => (0, 1),
            Side::South => (1, 0),
            Side::West => (0, -1),
        }
    }
}

/// Per-turn values (capacities, turning ratios).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnValues {
    pub left: f64,
    pub through: f64,
    pub right: f64,
}

impl TurnValues {
    fn get(&self, turn: Turn) -> f64 {
        match turn {
            Turn::Left => self.left,
            Turn::Through => self.through,
            Turn::Right => self.right,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Vehicles served per green step.
    pub capacity: TurnValues,
    /// Turning ratios; renormalized over the turns that exist at boundaries.
    pub turning_ratios: TurnValues,
    pub queue_threshold: f64,
    pub entry_delay: u32,
    pub internal_delay: u32,
    pub exit_delay: u32,
    /// Boundary sides carrying entry and exit links.
    pub open_sides: Vec<Side>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            capacity: TurnValues {
                left: 4.0,
                through: 8.0,
                right: 4.0,
            },
            turning_ratios: TurnValues {
                left: 0.2,
                through: 0.6,
                right: 0.2,
            },
            queue_threshold: 20.0,
            entry_delay: 1,
            internal_delay: 1,
            exit_delay: 1,
            open_sides: Side::ALL.to_vec(),
        }
    }
}

impl GridConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for turn in [Turn::Left, Turn::Through, Turn::Right] {
            let c = self.capacity.get(turn);
            if !(c > 0.0 && c.is_finite()) {
                out.push(format!("capacity for {turn:?} turns must be positive, got {c}"));
            }
            let r = self.turning_ratios.get(turn);
            if !(0.0..=1.0).contains(&r) {
                out.push(format!("turning ratio for {turn:?} turns outside [0, 1]: {r}"));
            }
        }
        let sum = self.turning_ratios.left + self.turning_ratios.through + self.turning_ratios.right;
        if (sum - 1.0).abs() > super::RATIO_TOLERANCE {
            out.push(format!("turning ratios sum to {sum} (expected 1)"));
        }
        if !(self.queue_threshold > 0.0 && self.queue_threshold.is_finite()) {
            out.push(format!(
                "queue threshold must be positive, got {}",
                self.queue_threshold
            ));
        }
        if self.open_sides.is_empty() {
            out.push("at least one boundary side must be open".into());
        }
        out
    }
}

const TURNS: [Turn; 3] = [Turn::Left, Turn::Through, Turn::Right];

/// Paired and single-approach phases, keyed by arrival heading.
fn phase_templates() -> Vec<Vec<(Side, Turn)>> {
    use Side::*;
    use Turn::*;
    vec![
        vec![(South, Through), (North, Through)],
        vec![(South, Left), (North, Left)],
        vec![(East, Through), (West, Through)],
        vec![(East, Left), (West, Left)],
        vec![(South, Through), (South, Left)],
        vec![(North, Through), (North, Left)],
        vec![(West, Through), (West, Left)],
        vec![(East, Through), (East, Left)],
    ]
}

fn compatible(a: (Side, Turn), b: (Side, Turn)) -> bool {
    a.1 == Turn::Right
        || b.1 == Turn::Right
        || a.0 == b.0
        || (a.0 == b.0.opposite() && a.1 == b.1)
}

pub fn build_grid(rows: usize, cols: usize, config: &GridConfig) -> Result<Network, NetworkError> {
    Network::from_spec(&build_grid_spec(rows, cols, config)?)
}

/// Generates the serializable description of a `rows × cols` grid.
pub fn build_grid_spec(
    rows: usize,
    cols: usize,
    config: &GridConfig,
) -> Result<NetworkSpec, NetworkError> {
    let mut problems = config.violations();
    if rows == 0 || cols == 0 {
        problems.push(format!("grid dimensions must be at least 1x1, got {rows}x{cols}"));
    }
    if !problems.is_empty() {
        return Err(NetworkError::InvalidGrid(problems));
    }

    let name = |r: usize, c: usize| format!("i{r}_{c}");
    let neighbor = |r: usize, c: usize, side: Side| {
        let (dr, dc) = side.offset();
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols)
            .then_some((nr as usize, nc as usize))
    };
    let open = |side: Side| config.open_sides.contains(&side);

    // Outgoing link from (r, c) heading `side`, if one exists.
    let outgoing = |r: usize, c: usize, side: Side| -> Option<(String, LinkKind)> {
        match neighbor(r, c, side) {
            Some((nr, nc)) => Some((format!("{}-{}", name(r, c), name(nr, nc)), LinkKind::Internal)),
            None if open(side) => Some((format!("x{}_{r}_{c}", side.tag()), LinkKind::Exit)),
            None => None,
        }
    };
    // Incoming link into (r, c) traveling along `heading`.
    let incoming = |r: usize, c: usize, heading: Side| -> Option<(String, LinkKind)> {
        let from_side = heading.opposite();
        match neighbor(r, c, from_side) {
            Some((nr, nc)) => Some((format!("{}-{}", name(nr, nc), name(r, c)), LinkKind::Internal)),
            None if open(from_side) => {
                Some((format!("e{}_{r}_{c}", from_side.tag()), LinkKind::Entry))
            }
            None => None,
        }
    };

    let mut spec = NetworkSpec::default();
    let mut used_entries = Vec::new();

    for r in 0..rows {
        for c in 0..cols {
            let here = name(r, c);
            let mut movement_keys: Vec<((Side, Turn), String)> = Vec::new();

            for heading in Side::ALL {
                let Some((in_link, in_kind)) = incoming(r, c, heading) else {
                    continue;
                };
                let targets: Vec<(Turn, String)> = TURNS
                    .iter()
                    .filter_map(|&t| outgoing(r, c, heading.after(t)).map(|(l, _)| (t, l)))
                    .collect();
                let total: f64 = targets.iter().map(|(t, _)| config.turning_ratios.get(*t)).sum();
                if targets.is_empty() || total <= 0.0 {
                    continue;
                }
                if in_kind == LinkKind::Entry {
                    used_entries.push((in_link.clone(), here.clone()));
                }
                for (turn, out_link) in targets {
                    let id = format!("{in_link}>{out_link}");
                    spec.movements.push(MovementSpec {
                        id: Some(id.clone()),
                        from: in_link.clone(),
                        to: out_link,
                        capacity: config.capacity.get(turn),
                        ratio: config.turning_ratios.get(turn) / total,
                        threshold: config.queue_threshold,
                        turn: Some(turn),
                    });
                    movement_keys.push(((heading, turn), id));
                }
            }

            let rights: Vec<String> = movement_keys
                .iter()
                .filter(|((_, t), _)| *t == Turn::Right)
                .map(|(_, id)| id.clone())
                .collect();
            let mut phases: Vec<Vec<String>> = Vec::new();
            for template in phase_templates() {
                let mut members: Vec<String> = template
                    .iter()
                    .filter_map(|key| {
                        movement_keys
                            .iter()
                            .find(|(k, _)| k == key)
                            .map(|(_, id)| id.clone())
                    })
                    .collect();
                if members.is_empty() {
                    continue;
                }
                members.extend(rights.iter().cloned());
                if !phases.contains(&members) {
                    phases.push(members);
                }
            }
            if phases.is_empty() {
                phases.push(rights.clone());
            }

            let mut conflicts = Vec::new();
            for (a_idx, (a, a_id)) in movement_keys.iter().enumerate() {
                for (b, b_id) in &movement_keys[a_idx + 1..] {
                    if !compatible(*a, *b) {
                        conflicts.push([a_id.clone(), b_id.clone()]);
                    }
                }
            }

            let neighbors = Side::ALL
                .iter()
                .filter_map(|&s| neighbor(r, c, s).map(|(nr, nc)| name(nr, nc)))
                .collect();

            spec.intersections.push(IntersectionSpec {
                id: here,
                phases,
                neighbors,
                conflicts,
            });
        }
    }

    // Links: entries that feed at least one movement, internal links, exits.
    for (id, to) in used_entries {
        spec.links.push(LinkSpec {
            id,
            kind: LinkKind::Entry,
            delay: config.entry_delay,
            from: None,
            to: Some(to),
        });
    }
    for r in 0..rows {
        for c in 0..cols {
            for side in Side::ALL {
                let Some((id, kind)) = outgoing(r, c, side) else {
                    continue;
                };
                let (delay, to) = match kind {
                    LinkKind::Internal => {
                        let (nr, nc) = neighbor(r, c, side).expect("internal link has a head");
                        (config.internal_delay, Some(name(nr, nc)))
                    }
                    _ => (config.exit_delay, None),
                };
                spec.links.push(LinkSpec {
                    id,
                    kind,
                    delay,
                    from: Some(name(r, c)),
                    to,
                });
            }
        }
    }
    Ok(spec)
}
