//! Controller × seed run matrices and their on-disk artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{service, stability_report, summarize, MetricsLog, StabilityReport, Summary};
use crate::consensus::SolverReport;
use crate::controllers::{
    make_controller, realized_penalties, ControllerConfig, ControllerError, ControllerKind, Observation,
};
use crate::dynamics::{step_fluid, DynamicsError, QueueState, TokenSimulator};
use crate::scenario::{Mode, ResolvedScenario};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("cannot write `{path}`: {message}")]
    Write { path: PathBuf, message: String },
    #[error("cannot read `{path}`: {message}")]
    Read { path: PathBuf, message: String },
    #[error("runs come from different scenarios: {0:?}")]
    MixedScenarios(Vec<String>),
    #[error("{0}")]
    Compare(String),
}

pub struct RunOutput {
    pub label: String,
    pub seed: u64,
    pub controller: ControllerConfig,
    pub log: MetricsLog,
    pub solver: Vec<SolverReport>,
    pub summary: Summary,
    pub stability: StabilityReport,
}

/// Simulates one controller under one seed.
pub fn simulate(resolved: &ResolvedScenario, controller: &ControllerConfig, seed: u64) -> Result<RunOutput, RunError> {
    let net = &resolved.net;
    let scenario = &resolved.scenario;
    let mut ctl = make_controller(controller, net)?;
    let params = &controller.penalty;
    let history = params.history.max(controller.history_needed());
    let token = scenario.mode == Mode::Token;

    let mut log = MetricsLog::new(net, token);
    let mut solver = Vec::new();
    let mut sim = if token {
        Some(TokenSimulator::new(net.clone(), resolved.demand.process, Some(seed), history)?)
    } else {
        None
    };
    let mut fluid = QueueState::empty(net, history);
    let observe = |sim: &Option<TokenSimulator>, fluid: &QueueState| match sim {
        Some(s) => s.observe(),
        None => fluid.clone(),
    };

    let mut state = observe(&sim, &fluid);
    log.record_state(net, &state);
    for t in 0..scenario.horizon {
        let rates = resolved.demand.rates_at(t);
        let obs = Observation { net, state: &state, arrivals: &rates };
        let start = Instant::now();
        let decision = ctl.decide(&obs)?;
        let seconds = start.elapsed().as_secs_f64();

        let penalties = realized_penalties(net, &state, &rates, params, &decision.action);
        let served = service(net, &state, &decision.action, token);
        match sim.as_mut() {
            Some(s) => {
                let done = s.step(&decision.action, &rates)?;
                log.record_vehicles(&done);
            }
            None => fluid = step_fluid(net, &fluid, &decision.action, &rates)?,
        }
        let next = observe(&sim, &fluid);
        let solver_summary = decision.solver.as_ref().map(|r| (r.iterations, r.converged));
        log.record_decision(net, &decision.action, &state, &next, &served, Some(&penalties), solver_summary, seconds);
        if let Some(r) = decision.solver {
            solver.push(r);
        }
        state = next;
        log.record_state(net, &state);
    }

    let cmpp = (controller.kind == ControllerKind::Cmpp).then_some(params);
    Ok(RunOutput {
        label: controller.label(),
        seed,
        controller: controller.clone(),
        summary: summarize(&log, scenario.step_seconds),
        stability: stability_report(&log, cmpp, net),
        log,
        solver,
    })
}

/// Every controller under every seed, in parallel when `parallel` is set.
/// Results are ordered controller-major, then by seed.
pub fn run_matrix(resolved: &ResolvedScenario, parallel: bool) -> Result<Vec<RunOutput>, RunError> {
    let jobs: Vec<(&ControllerConfig, u64)> = resolved
        .scenario
        .controllers
        .iter()
        .flat_map(|c| resolved.scenario.seeds.iter().map(move |&s| (c, s)))
        .collect();
    if parallel {
        jobs.par_iter().map(|&(c, s)| simulate(resolved, c, s)).collect()
    } else {
        jobs.iter().map(|&(c, s)| simulate(resolved, c, s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario: String,
    pub scenario_hash: String,
    pub mode: Mode,
    pub horizon: usize,
    pub step_seconds: f64,
    pub seed: u64,
    pub controller: ControllerConfig,
    pub tie_break: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub scenario_hash: String,
    pub summary: Summary,
    pub provenance: Provenance,
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Write { path: path.to_path_buf(), message: e.to_string() }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| write_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| write_err(path, e))
}

#[derive(Serialize)]
struct VehicleRow {
    id: u64,
    entry_step: usize,
    exit_step: usize,
    travel_steps: usize,
    waiting_steps: u32,
}

#[derive(Serialize)]
struct TimingRow {
    t: usize,
    controller_seconds: f64,
}

#[derive(Serialize)]
struct SolverRow<'a> {
    t: usize,
    algorithm: &'a str,
    iterations: usize,
    converged: bool,
    votes: usize,
    objective: f64,
    residuals: String,
    objectives: String,
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes `<out>/<label>/seed-<n>/` for one run; returns the directory.
///
/// `steps.csv`, `vehicles.csv`, `solver.csv`, `stability.json` and
/// `summary.json` depend only on the inputs. Wall-clock measurements go to
/// `timing.csv` (and the solver-time fields of the summary).
pub fn write_run(out: &Path, resolved: &ResolvedScenario, run: &RunOutput) -> Result<PathBuf, RunError> {
    let dir = out.join(&run.label).join(format!("seed-{}", run.seed));
    std::fs::create_dir_all(&dir).map_err(|e| write_err(&dir, e))?;

    write_csv(&dir.join("steps.csv"), &run.log.steps)?;
    write_csv(
        &dir.join("vehicles.csv"),
        run.log.vehicles.iter().map(|v| VehicleRow {
            id: v.id,
            entry_step: v.entry_step,
            exit_step: v.exit_step,
            travel_steps: v.travel_steps(),
            waiting_steps: v.waiting_steps,
        }),
    )?;
    write_csv(
        &dir.join("timing.csv"),
        run.log.solver_seconds.iter().enumerate().map(|(t, &s)| TimingRow { t, controller_seconds: s }),
    )?;
    write_csv(
        &dir.join("solver.csv"),
        run.solver.iter().enumerate().map(|(t, r)| SolverRow {
            t,
            algorithm: r.algorithm.map_or("", |a| a.name()),
            iterations: r.iterations,
            converged: r.converged,
            votes: r.votes,
            objective: r.objective,
            residuals: join(&r.residuals),
            objectives: join(&r.objectives),
        }),
    )?;
    write_json(&dir.join("stability.json"), &run.stability)?;
    let s = &resolved.scenario;
    let record = RunRecord {
        label: run.label.clone(),
        seed: run.seed,
        scenario_hash: resolved.hash.clone(),
        summary: run.summary.clone(),
        provenance: Provenance {
            scenario: s.name.clone(),
            scenario_hash: resolved.hash.clone(),
            mode: s.mode,
            horizon: s.horizon,
            step_seconds: s.step_seconds,
            seed: run.seed,
            controller: run.controller.clone(),
            tie_break: "lowest-index".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    write_json(&dir.join("summary.json"), &record)?;
    Ok(dir)
}

/// Finds every `summary.json` below the given paths.
pub fn collect_records(paths: &[PathBuf]) -> Result<Vec<RunRecord>, RunError> {
    fn walk(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        if path.is_file() {
            if path.file_name().is_some_and(|n| n == "summary.json") {
                out.push(path.to_path_buf());
            }
            return Ok(());
        }
        let mut entries: Vec<_> = std::fs::read_dir(path)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            walk(&e.path(), out)?;
        }
        Ok(())
    }
    let mut files = Vec::new();
    for p in paths {
        walk(p, &mut files).map_err(|e| RunError::Read { path: p.clone(), message: e.to_string() })?;
    }
    files
        .iter()
        .map(|f| {
            let text = std::fs::read_to_string(f).map_err(|e| RunError::Read { path: f.clone(), message: e.to_string() })?;
            serde_json::from_str(&text).map_err(|e| RunError::Read { path: f.clone(), message: e.to_string() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub runs: usize,
    pub mean_travel_seconds: Option<f64>,
    pub mean_waiting_seconds: Option<f64>,
    pub peak_vehicles: f64,
    pub mean_solver_seconds: f64,
    /// Relative change against the baseline, `(x - base) / base`.
    pub travel_delta: Option<f64>,
    pub waiting_delta: Option<f64>,
    pub peak_vehicles_delta: Option<f64>,
    pub solver_time_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub scenario_hash: String,
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-label means across seeds with deltas against `baseline` (the first
/// label in sorted order when not given).
pub fn compare(records: &[RunRecord], baseline: Option<&str>) -> Result<Comparison, RunError> {
    if records.len() < 2 {
        return Err(RunError::Compare(format!("need at least 2 runs, found {}", records.len())));
    }
    let hashes: std::collections::BTreeSet<&str> = records.iter().map(|r| r.scenario_hash.as_str()).collect();
    if hashes.len() > 1 {
        return Err(RunError::MixedScenarios(hashes.into_iter().map(String::from).collect()));
    }
    let mut groups: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.label).or_default().push(r);
    }
    let base_label = match baseline {
        Some(b) if groups.contains_key(b) => b.to_string(),
        Some(b) => return Err(RunError::Compare(format!("baseline `{b}` not among the runs"))),
        None => groups.keys().next().expect("non-empty").to_string(),
    };

    let mut rows: Vec<ComparisonRow> = groups
        .iter()
        .map(|(label, runs)| ComparisonRow {
            label: label.to_string(),
            runs: runs.len(),
            mean_travel_seconds: mean(runs.iter().filter_map(|r| r.summary.mean_travel_seconds)),
            mean_waiting_seconds: mean(runs.iter().filter_map(|r| r.summary.mean_waiting_seconds)),
            peak_vehicles: mean(runs.iter().map(|r| r.summary.peak_vehicles)).unwrap_or(0.0),
            mean_solver_seconds: mean(runs.iter().map(|r| r.summary.mean_solver_seconds)).unwrap_or(0.0),
            travel_delta: None,
            waiting_delta: None,
            peak_vehicles_delta: None,
            solver_time_ratio: None,
        })
        .collect();
    let base = rows.iter().find(|r| r.label == base_label).expect("baseline present").clone();
    let rel = |x: Option<f64>, b: Option<f64>| match (x, b) {
        (Some(x), Some(b)) if b != 0.0 => Some((x - b) / b),
        (Some(x), Some(b)) if x == b => Some(0.0),
        _ => None,
    };
    for row in &mut rows {
        row.travel_delta = rel(row.mean_travel_seconds, base.mean_travel_seconds);
        row.waiting_delta = rel(row.mean_waiting_seconds, base.mean_waiting_seconds);
        row.peak_vehicles_delta = rel(Some(row.peak_vehicles), Some(base.peak_vehicles));
        row.solver_time_ratio =
            (base.mean_solver_seconds > 0.0).then(|| row.mean_solver_seconds / base.mean_solver_seconds);
    }
    Ok(Comparison {
        scenario_hash: hashes.into_iter().next().expect("one hash").to_string(),
        baseline: base_label,
        rows,
    })
}

impl Comparison {
    /// Fixed-width text table.
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>, scale: f64, unit: &str| v.map_or("-".to_string(), |v| format!("{:.2}{unit}", v * scale));
        let mut out = format!("scenario {}  baseline {}\n", &self.scenario_hash[..12.min(self.scenario_hash.len())], self.baseline);
        out += &format!(
            "{:<20} {:>4} {:>10} {:>9} {:>10} {:>9} {:>9} {:>9} {:>11} {:>8}\n",
            "label", "runs", "travel_s", "Δtravel", "waiting_s", "Δwaiting", "peak_veh", "Δpeak", "solver_ms", "×solver"
        );
        for r in &self.rows {
            out += &format!(
                "{:<20} {:>4} {:>10} {:>9} {:>10} {:>9} {:>9.1} {:>9} {:>11.3} {:>8}\n",
                r.label,
                r.runs,
                opt(r.mean_travel_seconds, 1.0, ""),
                opt(r.travel_delta, 100.0, "%"),
                opt(r.mean_waiting_seconds, 1.0, ""),
                opt(r.waiting_delta, 100.0, "%"),
                r.peak_vehicles,
                opt(r.peak_vehicles_delta, 100.0, "%"),
                r.mean_solver_seconds * 1e3,
                opt(r.solver_time_ratio, 1.0, ""),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::Algorithm;
    use crate::scenario::{grid_scenario, Scenario};

    fn small(mode: Mode, load: f64) -> ResolvedScenario {
        let mut s: Scenario = grid_scenario(2, 2, load, 60, vec![1, 2]);
        s.mode = mode;
        s.controllers.push(ControllerConfig::cmpp(Algorithm::Admm));
        s.resolve(Path::new(".")).unwrap()
    }

    #[test]
    fn zero_demand_single_intersection_stays_empty() {
        let mut s = grid_scenario(1, 1, 0.0, 10, vec![1]);
        s.controllers = vec![ControllerConfig::new(ControllerKind::Mp)];
        let r = s.resolve(Path::new(".")).unwrap();
        let out = simulate(&r, &r.scenario.controllers[0], 1).unwrap();
        assert_eq!(out.log.steps.len(), 11);
        assert!(out.log.steps.iter().all(|row| row.total_queue == 0.0));
    }

    #[test]
    fn token_runs_conserve_vehicles() {
        let r = small(Mode::Token, 0.8);
        for run in run_matrix(&r, true).unwrap() {
            for row in &run.log.steps {
                assert_eq!(row.vehicles_in_network, row.entered - row.exited, "{}", run.label);
            }
            assert!(run.summary.vehicles_completed > 0);
        }
    }

    #[test]
    fn runs_are_deterministic_and_schedule_independent() {
        let r = small(Mode::Token, 0.6);
        let a = run_matrix(&r, false).unwrap();
        let b = run_matrix(&r, true).unwrap();
        assert_eq!(a.len(), 8);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.label.as_str(), x.seed), (y.label.as_str(), y.seed));
            assert_eq!(x.log.steps, y.log.steps);
            assert_eq!(x.log.vehicles, y.log.vehicles);
        }
    }

    #[test]
    fn fluid_runs_have_no_vehicle_metrics() {
        let r = small(Mode::Fluid, 0.5);
        let run = simulate(&r, &r.scenario.controllers[1], 1).unwrap();
        assert_eq!(run.summary.mean_travel_seconds, None);
        assert!(run.log.steps.last().unwrap().exited > 0.0);
    }

    #[test]
    fn cmpp_penalty_respects_bound() {
        let r = small(Mode::Token, 1.1);
        let run = simulate(&r, &r.scenario.controllers[2], 3).unwrap();
        assert_eq!(run.stability.penalty_within_bound, Some(true));
    }

    #[test]
    fn compare_rejects_mixed_and_reports_zero_deltas() {
        let r = small(Mode::Token, 0.5);
        let dir = tempfile::tempdir().unwrap();
        for run in run_matrix(&r, true).unwrap() {
            write_run(dir.path(), &r, &run).unwrap();
        }
        let records = collect_records(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(records.len(), 8);
        let c = compare(&records, Some("mp")).unwrap();
        let mp = c.rows.iter().find(|r| r.label == "mp").unwrap();
        assert_eq!(mp.travel_delta, Some(0.0));
        assert!(c.render().contains("cmpp-greedy"));

        let mut other = records[0].clone();
        other.scenario_hash = "different".into();
        let mut mixed = records.clone();
        mixed.push(other);
        assert!(matches!(compare(&mixed, None), Err(RunError::MixedScenarios(_))));
        assert!(compare(&records[..1], None).is_err());
    }
}
