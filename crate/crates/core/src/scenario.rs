//! Scenario files.
//!
//! ```toml
//! name = "grid-2x2"
//! horizon = 500            # steps
//! seeds = [1, 2, 3]
//! mode = "token"           # or "fluid"
//! step_seconds = 20.0
//!
//! [network.grid]           # or `network.file = "net.json"`, or an inline
//! rows = 2                 # `[network.spec]` with links/movements/intersections
//! cols = 2
//!
//! [demand]
//! arrivals = "poisson"     # or "deterministic"
//! load = 0.8               # peak intersection utilization; or [[demand.segments]]
//!
//! [[controllers]]
//! kind = "mp"
//!
//! [[controllers]]
//! kind = "cmpp"
//! consensus = { algorithm = "greedy" }
//! ```
//!
//! Relative paths resolve against the scenario file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::entry_rate_for_load;
use crate::consensus::Algorithm;
use crate::controllers::ControllerConfig;
use crate::dynamics::{ArrivalProcess, Demand, DemandProfile, DemandSegment};
use crate::network::{build_grid, GridConfig, Network, NetworkSpec};

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fluid,
    #[default]
    Token,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub config: GridConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    /// JSON or TOML network description.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<NetworkSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    #[serde(default)]
    pub arrivals: ArrivalProcess,
    /// Constant rate on every entry link giving this peak utilization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<DemandSegment>,
    /// JSON or TOML demand profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_step_seconds() -> f64 {
    20.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub horizon: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_step_seconds")]
    pub step_seconds: f64,
    pub network: NetworkSection,
    #[serde(default)]
    pub demand: DemandSection,
    pub controllers: Vec<ControllerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read `{path}`: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse `{path}`: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

fn read_structured<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    let parse_err = |message: String| ScenarioError::Parse { path: path.to_path_buf(), message };
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| parse_err(e.to_string()))
    }
}

/// A scenario with its network built and its demand resolved.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub net: Arc<Network>,
    pub profile: DemandProfile,
    pub demand: Demand,
    /// SHA-256 over everything that shapes the traffic: network, demand,
    /// horizon, mode and step length. Controllers and seeds are excluded so
    /// runs of different controllers compare.
    pub hash: String,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse { path: PathBuf::from("<inline>"), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), ScenarioError> {
        let scenario: Scenario = read_structured(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((scenario, base))
    }

    /// Builds the network and demand; `base` anchors relative paths.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedScenario, ScenarioError> {
        let mut problems = Vec::new();
        if self.horizon == 0 {
            problems.push("horizon must be at least 1".to_string());
        }
        if self.controllers.is_empty() {
            problems.push("at least one controller is required".to_string());
        }
        if self.seeds.is_empty() {
            problems.push("at least one seed is required".to_string());
        }
        if !(self.step_seconds > 0.0 && self.step_seconds.is_finite()) {
            problems.push(format!("step_seconds must be positive, got {}", self.step_seconds));
        }

        let net = self.build_network(base)?;
        let profile = self.demand_profile(base, &net)?;
        let demand = profile
            .resolve(&net)
            .map_err(|e| ScenarioError::Invalid(vec![e.to_string()]))?;

        let mut labels = std::collections::BTreeSet::new();
        for c in &self.controllers {
            let label = c.label();
            for p in c.validate(&net) {
                problems.push(format!("controller `{label}`: {p}"));
            }
            if !labels.insert(label.clone()) {
                problems.push(format!("duplicate controller label `{label}`"));
            }
            if c.consensus.algorithm == Algorithm::Exhaustive && c.kind == crate::controllers::ControllerKind::Cmpp {
                let size = net
                    .intersections()
                    .iter()
                    .try_fold(1u128, |acc, i| acc.checked_mul(i.phases.len() as u128))
                    .unwrap_or(u128::MAX);
                if size > c.consensus.oracle_limit as u128 {
                    problems.push(format!(
                        "controller `{label}`: exhaustive search over {size} assignments exceeds the oracle limit of {}",
                        c.consensus.oracle_limit
                    ));
                }
            }
        }
        if !problems.is_empty() {
            return Err(ScenarioError::Invalid(problems));
        }

        let hash = scenario_hash(&net, &profile, self);
        Ok(ResolvedScenario {
            scenario: self.clone(),
            net: Arc::new(net),
            profile,
            demand,
            hash,
        })
    }

    fn build_network(&self, base: &Path) -> Result<Network, ScenarioError> {
        let n = &self.network;
        let sources = n.grid.is_some() as u8 + n.file.is_some() as u8 + n.spec.is_some() as u8;
        if sources != 1 {
            return Err(ScenarioError::Invalid(vec![
                "network needs exactly one of `grid`, `file`, `spec`".to_string(),
            ]));
        }
        let invalid = |e: crate::network::NetworkError| ScenarioError::Invalid(vec![e.to_string()]);
        if let Some(g) = &n.grid {
            return build_grid(g.rows, g.cols, &g.config).map_err(invalid);
        }
        let spec = match (&n.file, &n.spec) {
            (Some(file), _) => read_structured::<NetworkSpec>(&base.join(file))?,
            (_, Some(spec)) => spec.clone(),
            _ => unreachable!("one source checked above"),
        };
        Network::from_spec(&spec).map_err(invalid)
    }

    fn demand_profile(&self, base: &Path, net: &Network) -> Result<DemandProfile, ScenarioError> {
        let d = &self.demand;
        let sources = d.load.is_some() as u8 + !d.segments.is_empty() as u8 + d.file.is_some() as u8;
        if sources > 1 {
            return Err(ScenarioError::Invalid(vec![
                "demand takes at most one of `load`, `segments`, `file`".to_string(),
            ]));
        }
        if let Some(file) = &d.file {
            return read_structured(&base.join(file));
        }
        let segments = match d.load {
            Some(load) if !(load >= 0.0 && load.is_finite()) => {
                return Err(ScenarioError::Invalid(vec![format!("demand load must be non-negative, got {load}")]));
            }
            Some(load) => vec![DemandSegment { start: 0, rate: entry_rate_for_load(net, load), links: None }],
            None => d.segments.clone(),
        };
        Ok(DemandProfile { arrivals: d.arrivals, segments })
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    network: NetworkSpec,
    demand: &'a DemandProfile,
    horizon: usize,
    mode: Mode,
    step_seconds: f64,
}

pub fn scenario_hash(net: &Network, profile: &DemandProfile, scenario: &Scenario) -> String {
    let input = HashInput {
        network: net.to_spec(),
        demand: profile,
        horizon: scenario.horizon,
        mode: scenario.mode,
        step_seconds: scenario.step_seconds,
    };
    let bytes = serde_json::to_vec(&input).expect("serializable");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// A grid scenario with the usual controller set, as written by `cmpp grid`.
pub fn grid_scenario(rows: usize, cols: usize, load: f64, horizon: usize, seeds: Vec<u64>) -> Scenario {
    Scenario {
        name: format!("grid-{rows}x{cols}"),
        horizon,
        seeds,
        mode: Mode::Token,
        step_seconds: default_step_seconds(),
        network: NetworkSection {
            grid: Some(GridSection { rows, cols, config: GridConfig::default() }),
            ..NetworkSection::default()
        },
        demand: DemandSection { load: Some(load), ..DemandSection::default() },
        controllers: vec![
            ControllerConfig::new(crate::controllers::ControllerKind::FixedTime),
            ControllerConfig::new(crate::controllers::ControllerKind::Mp),
            ControllerConfig::cmpp(Algorithm::Greedy),
        ],
        output: None,
    }
}
