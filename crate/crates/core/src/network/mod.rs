//! Road network topology.
//!
//! A [`Network`] is built once from a [`NetworkSpec`] and is immutable
//! afterwards. Besides the raw links, movements and intersections it carries
//! the derived structure every other module relies on:
//!
//! * upstream/downstream movement lists per link,
//! * phase membership per movement,
//! * the neighborhood of every intersection together with the index maps that
//!   slice the global control vector into neighborhood blocks,
//! * the queue multiplicities `kappa` of the neighborhood-summed Lyapunov
//!   function and the constants `M_max` / `D_max` of the penalty bound.

mod grid;
mod spec;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{build_grid, build_grid_spec, GridConfig, Side, TurnValues};
pub use spec::{IntersectionSpec, LinkSpec, MovementSpec, NetworkSpec};

/// Tolerance on the sum of turning ratios leaving a link.
pub const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MovementId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntersectionId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Entry,
    Internal,
    Exit,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Left,
    Through,
    Right,
}

#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    pub kind: LinkKind,
    pub traversal_delay: u32,
    pub from: Option<IntersectionId>,
    pub to: Option<IntersectionId>,
}

#[derive(Debug, Clone)]
pub struct Movement {
    pub name: String,
    pub from_link: LinkId,
    pub to_link: LinkId,
    pub intersection: IntersectionId,
    pub capacity: f64,
    pub turning_ratio: f64,
    pub queue_threshold: f64,
    pub turn: Option<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub movements: Vec<MovementId>,
}

#[derive(Debug, Clone)]
pub struct Intersection {
    pub name: String,
    pub phases: Vec<Phase>,
    pub movements: Vec<MovementId>,
    pub neighbors: Vec<IntersectionId>,
    pub conflicts: Vec<(MovementId, MovementId)>,
}

impl Intersection {
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }
}

/// Neighborhood `N_i ∪ {i}` of one intersection, plus the index maps that
/// play the role of the incidence matrix: the neighborhood control vector is
/// the concatenation of the members' one-hot blocks, center first.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    members: Vec<IntersectionId>,
    offsets: Vec<usize>,
    dimension: usize,
}

impl Neighborhood {
    /// Center first, then neighbors in ascending id order.
    pub fn members(&self) -> &[IntersectionId] {
        &self.members
    }

    /// Offset of each member's block inside the neighborhood vector.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn position(&self, j: IntersectionId) -> Option<usize> {
        self.members.iter().position(|&m| m == j)
    }
}

/// A rule broken by a network description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("unknown {kind} `{name}` referenced by {by}")]
    UnknownReference {
        kind: &'static str,
        name: String,
        by: String,
    },
    #[error("duplicate {kind} id `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("invalid network:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid grid config:\n{}", .0.join("\n"))]
    InvalidGrid(Vec<String>),
    #[error("unknown intersection id {0}")]
    UnknownIntersection(usize),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone)]
pub struct Network {
    links: Vec<Link>,
    movements: Vec<Movement>,
    intersections: Vec<Intersection>,
    upstream: Vec<Vec<MovementId>>,
    downstream: Vec<Vec<MovementId>>,
    phase_membership: Vec<Vec<usize>>,
    neighborhoods: Vec<Neighborhood>,
    control_offsets: Vec<usize>,
    control_dimension: usize,
}

impl Network {
    /// Resolves and validates a spec.
    pub fn from_spec(spec: &NetworkSpec) -> Result<Self, NetworkError> {
        let net = Self::from_spec_unchecked(spec)?;
        let violations = net.validate();
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(NetworkError::Invalid(violations))
        }
    }

    /// Resolves names to ids without checking the structural invariants;
    /// pair with [`Network::validate`].
    pub fn from_spec_unchecked(spec: &NetworkSpec) -> Result<Self, NetworkError> {
        let mut inter_index = HashMap::new();
        for (idx, s) in spec.intersections.iter().enumerate() {
            if inter_index.insert(s.id.as_str(), idx).is_some() {
                return Err(NetworkError::Duplicate {
                    kind: "intersection",
                    name: s.id.clone(),
                });
            }
        }
        let lookup_inter = |name: &str, by: &str| {
            inter_index
                .get(name)
                .map(|&i| IntersectionId(i))
                .ok_or_else(|| NetworkError::UnknownReference {
                    kind: "intersection",
                    name: name.to_string(),
                    by: by.to_string(),
                })
        };

        let mut link_index = HashMap::new();
        let mut links = Vec::with_capacity(spec.links.len());
        for (idx, l) in spec.links.iter().enumerate() {
            if link_index.insert(l.id.as_str(), idx).is_some() {
                return Err(NetworkError::Duplicate {
                    kind: "link",
                    name: l.id.clone(),
                });
            }
            let by = format!("link `{}`", l.id);
            links.push(Link {
                name: l.id.clone(),
                kind: l.kind,
                traversal_delay: l.delay,
                from: l.from.as_deref().map(|n| lookup_inter(n, &by)).transpose()?,
                to: l.to.as_deref().map(|n| lookup_inter(n, &by)).transpose()?,
            });
        }

        let mut movement_index = HashMap::new();
        let mut movements = Vec::with_capacity(spec.movements.len());
        for (idx, m) in spec.movements.iter().enumerate() {
            let name = m.resolved_id();
            if movement_index.insert(name.clone(), idx).is_some() {
                return Err(NetworkError::Duplicate {
                    kind: "movement",
                    name,
                });
            }
            let by = format!("movement `{name}`");
            let lookup_link = |n: &str| {
                link_index
                    .get(n)
                    .map(|&i| LinkId(i))
                    .ok_or_else(|| NetworkError::UnknownReference {
                        kind: "link",
                        name: n.to_string(),
                        by: by.clone(),
                    })
            };
            let from_link = lookup_link(&m.from)?;
            let to_link = lookup_link(&m.to)?;
            // Ownership mismatches are reported by `validate`; fall back to
            // whichever end names an intersection.
            let owner = links[from_link.0]
                .to
                .or(links[to_link.0].from)
                .ok_or_else(|| NetworkError::UnknownReference {
                    kind: "intersection",
                    name: format!("{} -> {}", m.from, m.to),
                    by: by.clone(),
                })?;
            movements.push(Movement {
                name,
                from_link,
                to_link,
                intersection: owner,
                capacity: m.capacity,
                turning_ratio: m.ratio,
                queue_threshold: m.threshold,
                turn: m.turn,
            });
        }

        let mut intersections = Vec::with_capacity(spec.intersections.len());
        for s in &spec.intersections {
            let by = format!("intersection `{}`", s.id);
            let lookup_mv = |n: &str| {
                movement_index
                    .get(n)
                    .map(|&i| MovementId(i))
                    .ok_or_else(|| NetworkError::UnknownReference {
                        kind: "movement",
                        name: n.to_string(),
                        by: by.clone(),
                    })
            };
            let phases = s
                .phases
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|n| lookup_mv(n))
                        .collect::<Result<Vec<_>, _>>()
                        .map(|movements| Phase { movements })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut neighbors = s
                .neighbors
                .iter()
                .map(|n| lookup_inter(n, &by))
                .collect::<Result<Vec<_>, _>>()?;
            neighbors.sort();
            neighbors.dedup();
            let conflicts = s
                .conflicts
                .iter()
                .map(|[a, b]| Ok((lookup_mv(a)?, lookup_mv(b)?)))
                .collect::<Result<Vec<_>, NetworkError>>()?;
            intersections.push(Intersection {
                name: s.id.clone(),
                phases,
                movements: Vec::new(),
                neighbors,
                conflicts,
            });
        }
        for (idx, m) in movements.iter().enumerate() {
            intersections[m.intersection.0]
                .movements
                .push(MovementId(idx));
        }

        Ok(Self::assemble(links, movements, intersections))
    }

    fn assemble(
        links: Vec<Link>,
        movements: Vec<Movement>,
        intersections: Vec<Intersection>,
    ) -> Self {
        let mut upstream = vec![Vec::new(); links.len()];
        let mut downstream = vec![Vec::new(); links.len()];
        for (idx, m) in movements.iter().enumerate() {
            upstream[m.to_link.0].push(MovementId(idx));
            downstream[m.from_link.0].push(MovementId(idx));
        }

        let mut phase_membership = vec![Vec::new(); movements.len()];
        for inter in &intersections {
            for (k, phase) in inter.phases.iter().enumerate() {
                for &m in &phase.movements {
                    if !phase_membership[m.0].contains(&k) {
                        phase_membership[m.0].push(k);
                    }
                }
            }
        }

        let mut control_offsets = Vec::with_capacity(intersections.len());
        let mut total = 0;
        for inter in &intersections {
            control_offsets.push(total);
            total += inter.phases.len();
        }

        let neighborhoods = intersections
            .iter()
            .enumerate()
            .map(|(i, inter)| {
                let mut members = vec![IntersectionId(i)];
                members.extend(inter.neighbors.iter().copied().filter(|&j| j.0 != i));
                let mut offsets = Vec::with_capacity(members.len());
                let mut dim = 0;
                for j in &members {
                    offsets.push(dim);
                    dim += intersections[j.0].phases.len();
                }
                Neighborhood {
                    members,
                    offsets,
                    dimension: dim,
                }
            })
            .collect();

        Network {
            links,
            movements,
            intersections,
            upstream,
            downstream,
            phase_membership,
            neighborhoods,
            control_offsets,
            control_dimension: total,
        }
    }

    /// Copy of this network with every neighbor relation removed, which turns
    /// each neighborhood into a single intersection.
    pub fn isolated(&self) -> Network {
        let mut intersections = self.intersections.clone();
        for inter in &mut intersections {
            inter.neighbors.clear();
        }
        Self::assemble(self.links.clone(), self.movements.clone(), intersections)
    }

    /// Returns every broken invariant; empty iff the network is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |entity: String, rule: String| out.push(Violation { entity, rule });

        for (idx, link) in self.links.iter().enumerate() {
            let entity = format!("link `{}`", link.name);
            let ups = &self.upstream[idx];
            let downs = &self.downstream[idx];
            match link.kind {
                LinkKind::Entry => {
                    if !ups.is_empty() {
                        push(entity.clone(), "entry link has upstream movements".into());
                    }
                    if link.from.is_some() {
                        push(entity.clone(), "entry link has an upstream intersection".into());
                    }
                }
                LinkKind::Exit => {
                    if !downs.is_empty() {
                        push(entity.clone(), "exit link has downstream movements".into());
                    }
                    if link.to.is_some() {
                        push(entity.clone(), "exit link has a downstream intersection".into());
                    }
                }
                LinkKind::Internal => {
                    if link.from.is_none() || link.to.is_none() {
                        push(entity.clone(), "internal link must join two intersections".into());
                    }
                }
            }
            if link.kind != LinkKind::Exit {
                if downs.is_empty() {
                    push(entity.clone(), "non-exit link has no downstream movements".into());
                } else {
                    let sum: f64 = downs.iter().map(|m| self.movements[m.0].turning_ratio).sum();
                    if (sum - 1.0).abs() > RATIO_TOLERANCE {
                        push(entity.clone(), format!("turning ratios sum to {sum} (expected 1)"));
                    }
                }
            }
        }

        for m in &self.movements {
            let entity = format!("movement `{}`", m.name);
            if !(m.capacity > 0.0 && m.capacity.is_finite()) {
                push(entity.clone(), format!("capacity {} must be positive", m.capacity));
            }
            if !(m.queue_threshold > 0.0 && m.queue_threshold.is_finite()) {
                push(
                    entity.clone(),
                    format!("queue threshold {} must be positive", m.queue_threshold),
                );
            }
            if !(0.0..=1.0).contains(&m.turning_ratio) {
                push(
                    entity.clone(),
                    format!("turning ratio {} outside [0, 1]", m.turning_ratio),
                );
            }
            let ends_at = self.links[m.from_link.0].to;
            let starts_at = self.links[m.to_link.0].from;
            if ends_at.is_none() || ends_at != starts_at {
                push(
                    entity.clone(),
                    "incoming and outgoing links do not meet at one intersection".into(),
                );
            }
        }

        for (i, inter) in self.intersections.iter().enumerate() {
            let entity = format!("intersection `{}`", inter.name);
            if inter.phases.is_empty() {
                push(entity.clone(), "has no phases".into());
            }
            for (k, phase) in inter.phases.iter().enumerate() {
                for &m in &phase.movements {
                    if self.movements[m.0].intersection.0 != i {
                        push(
                            entity.clone(),
                            format!(
                                "phase {k} contains movement `{}` of another intersection",
                                self.movements[m.0].name
                            ),
                        );
                    }
                }
                for &(a, b) in &inter.conflicts {
                    if phase.movements.contains(&a) && phase.movements.contains(&b) {
                        push(
                            entity.clone(),
                            format!(
                                "phase {k} activates conflicting movements `{}` and `{}`",
                                self.movements[a.0].name, self.movements[b.0].name
                            ),
                        );
                    }
                }
            }
            for &j in &inter.neighbors {
                if j.0 == i {
                    push(entity.clone(), "lists itself as a neighbor".into());
                } else if !self.intersections[j.0].neighbors.contains(&IntersectionId(i)) {
                    push(
                        format!(
                            "intersections `{}` and `{}`",
                            inter.name, self.intersections[j.0].name
                        ),
                        "neighbor relation is not symmetric".into(),
                    );
                }
            }
        }
        out
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn movements(&self) -> &[Movement] {
        &self.movements
    }

    pub fn intersections(&self) -> &[Intersection] {
        &self.intersections
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn movement(&self, id: MovementId) -> &Movement {
        &self.movements[id.0]
    }

    pub fn intersection(&self, id: IntersectionId) -> &Intersection {
        &self.intersections[id.0]
    }

    pub fn intersection_count(&self) -> usize {
        self.intersections.len()
    }

    /// Movements ending on link `l` (the set `U_l` seen from `l`).
    pub fn upstream_of(&self, l: LinkId) -> &[MovementId] {
        &self.upstream[l.0]
    }

    /// Movements leaving link `l`.
    pub fn downstream_of(&self, l: LinkId) -> &[MovementId] {
        &self.downstream[l.0]
    }

    /// Phase indices (within the owning intersection) containing `m`.
    pub fn phases_containing(&self, m: MovementId) -> &[usize] {
        &self.phase_membership[m.0]
    }

    pub fn entry_links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind == LinkKind::Entry)
            .map(|(i, _)| LinkId(i))
    }

    pub fn neighborhood(&self, i: IntersectionId) -> &Neighborhood {
        &self.neighborhoods[i.0]
    }

    /// `Σ_{j ∈ N_i ∪ {i}} K_j`.
    pub fn neighborhood_controls_dimension(&self, i: usize) -> Result<usize, NetworkError> {
        self.neighborhoods
            .get(i)
            .map(Neighborhood::dimension)
            .ok_or(NetworkError::UnknownIntersection(i))
    }

    /// Offset of intersection `i`'s block in the global control vector.
    pub fn control_offset(&self, i: IntersectionId) -> usize {
        self.control_offsets[i.0]
    }

    /// Total length `K` of the global control vector.
    pub fn control_dimension(&self) -> usize {
        self.control_dimension
    }

    /// Projects a global control vector onto the neighborhood of `i`
    /// (the product `M_i z`).
    pub fn gather<T: Copy>(&self, i: IntersectionId, global: &[T]) -> Vec<T> {
        let hood = &self.neighborhoods[i.0];
        let mut out = Vec::with_capacity(hood.dimension);
        for &j in &hood.members {
            let start = self.control_offsets[j.0];
            out.extend_from_slice(&global[start..start + self.intersections[j.0].phases.len()]);
        }
        out
    }

    /// Writes a neighborhood vector back into the matching global entries.
    pub fn scatter<T: Copy>(&self, i: IntersectionId, local: &[T], global: &mut [T]) {
        let hood = &self.neighborhoods[i.0];
        for (&j, &off) in hood.members.iter().zip(&hood.offsets) {
            let start = self.control_offsets[j.0];
            let k = self.intersections[j.0].phases.len();
            global[start..start + k].copy_from_slice(&local[off..off + k]);
        }
    }

    /// Number of neighborhoods containing the owner of `m`: `1 + |N_j|`.
    pub fn kappa(&self, m: MovementId) -> u32 {
        let j = self.movements[m.0].intersection;
        1 + self.intersections[j.0].neighbors.len() as u32
    }

    /// `M_max = max_i |Λ_i|`.
    pub fn max_movements(&self) -> usize {
        self.intersections
            .iter()
            .map(|i| i.movements.len())
            .max()
            .unwrap_or(0)
    }

    /// `D_max = max_m |D_m|`.
    pub fn max_downstream(&self) -> usize {
        self.downstream.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Converts back into the serializable form.
    pub fn to_spec(&self) -> NetworkSpec {
        let inter_name = |i: IntersectionId| self.intersections[i.0].name.clone();
        NetworkSpec {
            links: self
                .links
                .iter()
                .map(|l| LinkSpec {
                    id: l.name.clone(),
                    kind: l.kind,
                    delay: l.traversal_delay,
                    from: l.from.map(inter_name),
                    to: l.to.map(inter_name),
                })
                .collect(),
            movements: self
                .movements
                .iter()
                .map(|m| MovementSpec {
                    id: Some(m.name.clone()),
                    from: self.links[m.from_link.0].name.clone(),
                    to: self.links[m.to_link.0].name.clone(),
                    capacity: m.capacity,
                    ratio: m.turning_ratio,
                    threshold: m.queue_threshold,
                    turn: m.turn,
                })
                .collect(),
            intersections: self
                .intersections
                .iter()
                .map(|inter| IntersectionSpec {
                    id: inter.name.clone(),
                    phases: inter
                        .phases
                        .iter()
                        .map(|p| {
                            p.movements
                                .iter()
                                .map(|m| self.movements[m.0].name.clone())
                                .collect()
                        })
                        .collect(),
                    neighbors: inter.neighbors.iter().map(|&j| inter_name(j)).collect(),
                    conflicts: inter
                        .conflicts
                        .iter()
                        .map(|&(a, b)| {
                            [
                                self.movements[a.0].name.clone(),
                                self.movements[b.0].name.clone(),
                            ]
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}
