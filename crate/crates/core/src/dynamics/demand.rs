//! Step-indexed external demand on entry links.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{LinkKind, Network};

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalProcess {
    /// Poisson counts with the segment rate as mean (token mode).
    #[default]
    Poisson,
    /// Running-sum rounding of the rate; integer rates arrive exactly.
    Deterministic,
}

/// A rate that holds from `start` until the next segment touching the same
/// link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSegment {
    pub start: usize,
    /// Vehicles per step on each affected entry link.
    pub rate: f64,
    /// Entry link ids; all entry links when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandProfile {
    #[serde(default)]
    pub arrivals: ArrivalProcess,
    #[serde(default)]
    pub segments: Vec<DemandSegment>,
}

impl DemandProfile {
    /// Same rate on every entry link from step 0.
    pub fn constant(rate: f64) -> Self {
        DemandProfile {
            arrivals: ArrivalProcess::Poisson,
            segments: vec![DemandSegment {
                start: 0,
                rate,
                links: None,
            }],
        }
    }

    /// Linear ramp from 0 to `plateau` over `ramp_steps` (in `pieces`
    /// constant pieces), then constant.
    pub fn ramp(plateau: f64, ramp_steps: usize, pieces: usize) -> Self {
        let pieces = pieces.max(1);
        let mut segments = Vec::with_capacity(pieces + 1);
        for k in 0..pieces {
            segments.push(DemandSegment {
                start: k * ramp_steps / pieces,
                rate: plateau * (k as f64 + 0.5) / pieces as f64,
                links: None,
            });
        }
        segments.push(DemandSegment {
            start: ramp_steps,
            rate: plateau,
            links: None,
        });
        DemandProfile {
            arrivals: ArrivalProcess::Poisson,
            segments,
        }
    }

    pub fn resolve(&self, net: &Network) -> Result<Demand, DemandError> {
        let mut per_link: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.links().len()];
        for seg in &self.segments {
            if !seg.rate.is_finite() || seg.rate < 0.0 {
                return Err(DemandError::InvalidRate(seg.rate));
            }
            match &seg.links {
                None => {
                    for l in net.entry_links() {
                        per_link[l.0].push((seg.start, seg.rate));
                    }
                }
                Some(names) => {
                    for name in names {
                        let idx = net
                            .links()
                            .iter()
                            .position(|l| &l.name == name)
                            .ok_or_else(|| DemandError::UnknownLink(name.clone()))?;
                        if net.links()[idx].kind != LinkKind::Entry {
                            return Err(DemandError::NotEntry(name.clone()));
                        }
                        per_link[idx].push((seg.start, seg.rate));
                    }
                }
            }
        }
        // Stable sort keeps file order among segments sharing a start.
        for segs in &mut per_link {
            segs.sort_by_key(|&(start, _)| start);
        }
        Ok(Demand {
            process: self.arrivals,
            per_link,
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DemandError {
    #[error("demand names unknown link `{0}`")]
    UnknownLink(String),
    #[error("demand targets `{0}`, which is not an entry link")]
    NotEntry(String),
    #[error("invalid demand rate {0}")]
    InvalidRate(f64),
}

/// A demand profile resolved against one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Demand {
    pub process: ArrivalProcess,
    per_link: Vec<Vec<(usize, f64)>>,
}

impl Demand {
    /// Mean arrivals `d_l(t)` for every link (zero off entry links).
    pub fn rates_at(&self, t: usize) -> Vec<f64> {
        self.per_link
            .iter()
            .map(|segs| {
                segs.iter()
                    .take_while(|&&(start, _)| start <= t)
                    .last()
                    .map_or(0.0, |&(_, rate)| rate)
            })
            .collect()
    }
}
