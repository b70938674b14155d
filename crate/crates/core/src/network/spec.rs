//! Serializable description of a network, shared by hand-written scenario
//! files and the grid builder.

use serde::{Deserialize, Serialize};

use super::{LinkKind, Turn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub movements: Vec<MovementSpec>,
    #[serde(default)]
    pub intersections: Vec<IntersectionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub kind: LinkKind,
    /// Whole steps spent traversing the link before joining a queue.
    #[serde(default)]
    pub delay: u32,
    /// Upstream intersection (absent for entry links).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    /// Downstream intersection (absent for exit links).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementSpec {
    /// Defaults to `"<from>><to>"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub from: String,
    pub to: String,
    /// Vehicles served per green step.
    pub capacity: f64,
    /// Share of the inflow of `from` that continues onto `to`.
    pub ratio: f64,
    /// Queue length above which the overflow penalties fire.
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<Turn>,
}

impl MovementSpec {
    pub fn resolved_id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("{}>{}", self.from, self.to))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionSpec {
    pub id: String,
    /// Each phase lists the movement ids it turns green.
    pub phases: Vec<Vec<String>>,
    #[serde(default)]
    pub neighbors: Vec<String>,
    /// Pairs of movement ids that may not share a phase.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conflicts: Vec<[String; 2]>,
}
