use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cmpp_core::consensus::Algorithm;
use cmpp_core::controllers::{ControllerConfig, ControllerKind};
use cmpp_core::experiment::{collect_records, compare, run_matrix, write_run, RunError};
use cmpp_core::network::{build_grid_spec, GridConfig};
use cmpp_core::scenario::{grid_scenario, Mode, Scenario, ScenarioError};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "cmpp", version, about = "Traffic signal control experiments on store-and-forward networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum KindArg {
    FixedTime,
    Mp,
    Cabp,
    Cmpp,
}

#[derive(Copy, Clone, ValueEnum)]
enum AlgorithmArg {
    Admm,
    Greedy,
    Exhaustive,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    Fluid,
    Token,
}

#[derive(Subcommand)]
enum Command {
    /// Run every controller × seed of a scenario and write the artifacts.
    Run {
        scenario: PathBuf,
        /// Replace the scenario's controllers with a single one of this kind.
        #[arg(long, value_enum)]
        controller: Option<KindArg>,
        /// Consensus algorithm for CMPP controllers.
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
        #[arg(long = "seed", num_args = 1..)]
        seeds: Vec<u64>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Output directory (default: `runs/<scenario name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Run the matrix sequentially.
        #[arg(long)]
        sequential: bool,
    },
    /// Compare runs of one scenario: per-controller means and deltas.
    Compare {
        /// Run directories (searched recursively for summary.json).
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        baseline: Option<String>,
        /// Also write the table as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print a grid network (JSON) or a ready-to-run grid scenario (TOML).
    Grid {
        #[arg(long, default_value_t = 2)]
        rows: usize,
        #[arg(long, default_value_t = 2)]
        cols: usize,
        /// Emit a scenario instead of the bare network.
        #[arg(long)]
        scenario: bool,
        #[arg(long, default_value_t = 0.8)]
        load: f64,
        #[arg(long, default_value_t = 2000)]
        horizon: usize,
    },
    /// Check a scenario without running it.
    Validate { scenario: PathBuf },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::MixedScenarios(_) | RunError::Compare(_) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { scenario, controller, algorithm, seeds, horizon, mode, out, rho, max_iters, sequential } => {
            let (mut s, base) = Scenario::load(&scenario)?;
            if let Some(kind) = controller {
                let kind = match kind {
                    KindArg::FixedTime => ControllerKind::FixedTime,
                    KindArg::Mp => ControllerKind::Mp,
                    KindArg::Cabp => ControllerKind::Cabp,
                    KindArg::Cmpp => ControllerKind::Cmpp,
                };
                s.controllers = vec![ControllerConfig::new(kind)];
            }
            for c in s.controllers.iter_mut().filter(|c| c.kind == ControllerKind::Cmpp) {
                if let Some(a) = algorithm {
                    c.consensus.algorithm = match a {
                        AlgorithmArg::Admm => Algorithm::Admm,
                        AlgorithmArg::Greedy => Algorithm::Greedy,
                        AlgorithmArg::Exhaustive => Algorithm::Exhaustive,
                    };
                }
                if let Some(r) = rho {
                    c.consensus.rho = r;
                }
                if let Some(m) = max_iters {
                    c.consensus.max_iters = m;
                }
            }
            if !seeds.is_empty() {
                s.seeds = seeds;
            }
            if let Some(h) = horizon {
                s.horizon = h;
            }
            if let Some(m) = mode {
                s.mode = match m {
                    ModeArg::Fluid => Mode::Fluid,
                    ModeArg::Token => Mode::Token,
                };
            }
            let resolved = s.resolve(&base)?;
            let out = out
                .or_else(|| s.output.as_ref().map(|o| base.join(o)))
                .unwrap_or_else(|| Path::new("runs").join(&s.name));
            let runs = run_matrix(&resolved, !sequential)?;
            for run in &runs {
                let dir = write_run(&out, &resolved, run)?;
                let travel = run
                    .summary
                    .mean_travel_seconds
                    .map_or("-".to_string(), |t| format!("{t:.1}s"));
                println!(
                    "{:<20} seed {:<4} travel {:>8}  peak vehicles {:>7.1}  controller {:.3} ms  -> {}",
                    run.label,
                    run.seed,
                    travel,
                    run.summary.peak_vehicles,
                    run.summary.mean_solver_seconds * 1e3,
                    dir.display()
                );
            }
            Ok(())
        }
        Command::Compare { runs, baseline, json } => {
            let records = collect_records(&runs)?;
            let table = compare(&records, baseline.as_deref())?;
            print!("{}", table.render());
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&table).expect("serializable");
                std::fs::write(&path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Grid { rows, cols, scenario, load, horizon } => {
            if scenario {
                let s = grid_scenario(rows, cols, load, horizon, vec![1, 2, 3, 4, 5]);
                let text = toml::to_string(&s).map_err(|e| Failure::Runtime(e.to_string()))?;
                print!("{text}");
            } else {
                let spec = build_grid_spec(rows, cols, &GridConfig::default())
                    .map_err(|e| Failure::Validation(e.to_string()))?;
                println!("{}", serde_json::to_string_pretty(&spec).expect("serializable"));
            }
            Ok(())
        }
        Command::Validate { scenario } => {
            let (s, base) = Scenario::load(&scenario)?;
            let r = s.resolve(&base)?;
            println!(
                "ok: {} intersections, {} movements, {} controller(s) × {} seed(s), hash {}",
                r.net.intersection_count(),
                r.net.movements().len(),
                s.controllers.len(),
                s.seeds.len(),
                r.hash
            );
            Ok(())
        }
    }
}
