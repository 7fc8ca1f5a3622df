//! `mixopt`: optimal periodic re-allocation strategies from the command
//! line: exact and closed-form solvers, the optimality criterion, trajectory
//! simulation, raceway scenario evaluation, parameter sweeps and canned
//! figure-reproduction runs.
//!
//! Exit codes: 0 success (criterion satisfied where applicable), 1 criterion
//! not satisfied, 2 malformed input or unknown preset, 3 size cap or budget
//! refusal, 4 degenerate gaps or mixed signs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mixopt::criterion::{self, CriterionError};
use mixopt::dynamics::{
    build_system, objective_j, objective_j_approx, simulate, steady_state, AllocationSystem,
    SwitchedDynamics,
};
use mixopt::perm::{self, Permutation};
use mixopt::raceway::{
    self, evaluate_scenario, sweep, RacewayError, RacewayScenario, SweepColumn, SweepGrid,
    SweepOptions,
};
use mixopt::solvers::{solve_approx, solve_exact, SolveError, SolveOptions};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "mixopt",
    version,
    about = "Periodic re-allocation strategy optimizer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Max,
    Min,
    Both,
}

#[derive(Args)]
struct CommonOpts {
    /// Worker threads for exhaustive scans.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Refuse exhaustive scans beyond this many slots.
    #[arg(long, default_value_t = perm::DEFAULT_ENUM_CAP)]
    n_cap: usize,
    /// Random seed; recorded in every output header for reproducibility.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the objective over permutations, exactly or via the
    /// closed-form sorted matching.
    Solve {
        /// System file (JSON): {"a":[..],"b":[..],"T":t,"u":[..]} or
        /// {"u":[..],"v":[..],"d":[..]}.
        #[arg(long)]
        system: PathBuf,
        /// Exhaustive scan over all N! permutations.
        #[arg(long, conflicts_with = "approx")]
        exact: bool,
        /// Closed-form sorted matching of the approximate objective.
        #[arg(long)]
        approx: bool,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate the optimality criterion and print the phi table.
    Criterion {
        #[arg(long)]
        system: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Periodic steady state under a fixed permutation.
    SteadyState {
        #[arg(long)]
        system: PathBuf,
        /// Permutation: 1-based image array "[2,3,1]" or cycles "(1 2 3)".
        #[arg(long)]
        perm: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Closed-form trajectory across re-allocation events (CSV).
    Simulate {
        /// System file in dynamics form: {"a":[..],"b":[..],"T":t}.
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        perm: String,
        /// Initial state as a JSON array (zeros when omitted).
        #[arg(long)]
        x0: Option<String>,
        /// Number of re-allocation events to simulate.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 20)]
        samples_per_period: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate one raceway scenario: optima, growth rates, ratios,
    /// criterion verdict.
    RacewayEval {
        /// Scenario file (JSON): {"I_s":..,"q":..,"T":..,"N":..,"h":..,"han":{..}}.
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate a cartesian scenario grid to CSV.
    Sweep {
        /// Grid file (JSON): {"I_s":[..],"q":[..],"T":[..],"N":[..]}.
        #[arg(long)]
        grid: PathBuf,
        /// Comma-separated output columns (all when omitted).
        #[arg(long)]
        outputs: Option<String>,
        /// Refusal threshold on estimated objective evaluations.
        #[arg(long, default_value_t = 2_000_000_000)]
        budget: u64,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Write the canned experiment CSVs behind the bundled figures.
    Reproduce {
        /// Preset id: muN, 4muT, 2mark, 3r, 2rt, Fm, criterion.
        preset: String,
        /// Output directory.
        #[arg(long, default_value = "reproduction")]
        out_dir: PathBuf,
        /// Largest layer count solved exactly in the muN preset.
        #[arg(long, default_value_t = 9)]
        n_max: usize,
        /// Layer count override for the Fm / criterion / 3r / 2rt presets.
        #[arg(long)]
        n: Option<usize>,
        /// Lap duration filter for the 2mark / 3r / 2rt presets.
        #[arg(long)]
        t: Option<f64>,
        #[command(flatten)]
        common: CommonOpts,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    CriterionUnsatisfied(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Refused(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::CriterionUnsatisfied(_) => 1,
            CliError::Refused(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Perm(perm::PermError::CapExceeded { .. }) => {
                CliError::Refused(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<CriterionError> for CliError {
    fn from(e: CriterionError) -> Self {
        match e {
            CriterionError::DegenerateGaps { .. } | CriterionError::MixedSign { .. } => {
                CliError::Degenerate(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<RacewayError> for CliError {
    fn from(e: RacewayError) -> Self {
        match e {
            RacewayError::BudgetExceeded { .. } => CliError::Refused(e.to_string()),
            RacewayError::Solve(inner) => inner.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

/// A system file: either per-slot rates plus the period (aggregated on
/// load), or the (u, v, d) triple directly.
#[derive(Deserialize)]
#[serde(untagged)]
enum SystemInput {
    Dynamics {
        a: Vec<f64>,
        b: Vec<f64>,
        #[serde(rename = "T")]
        period: f64,
        #[serde(default)]
        t0: f64,
        u: Option<Vec<f64>>,
    },
    Direct {
        u: Vec<f64>,
        v: Vec<f64>,
        d: Vec<f64>,
    },
}

struct LoadedSystem {
    system: AllocationSystem,
    dynamics: Option<SwitchedDynamics>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("cannot parse {}: {e}", path.display())))
}

fn load_system(path: &Path) -> Result<LoadedSystem, CliError> {
    let input: SystemInput = read_json(path)?;
    match input {
        SystemInput::Direct { u, v, d } => Ok(LoadedSystem {
            system: AllocationSystem::new(u, v, d).map_err(|e| CliError::Input(e.to_string()))?,
            dynamics: None,
        }),
        SystemInput::Dynamics {
            a,
            b,
            period,
            t0,
            u,
        } => {
            let n = a.len();
            let dynamics = SwitchedDynamics::new(a, b, period)
                .map_err(|e| CliError::Input(e.to_string()))?
                .with_t0(t0);
            let u = u.unwrap_or_else(|| vec![0.0; n]);
            let built = build_system(&dynamics, &u).map_err(|e| CliError::Input(e.to_string()))?;
            for i in &built.clamped {
                eprintln!(
                    "warning: decay factor d[{i}] underflowed and was clamped to the \
                     smallest positive normal value"
                );
            }
            Ok(LoadedSystem {
                system: built.system,
                dynamics: Some(dynamics),
            })
        }
    }
}

fn parse_perm(spec: &str, n: usize) -> Result<Permutation, CliError> {
    let trimmed = spec.trim();
    if trimmed.starts_with('[') {
        let images: Vec<usize> = serde_json::from_str(trimmed)
            .map_err(|e| CliError::Input(format!("cannot parse permutation {spec:?}: {e}")))?;
        if images.len() != n {
            return Err(CliError::Input(format!(
                "permutation has {} entries but the system has {n} slots",
                images.len()
            )));
        }
        Permutation::from_one_based(&images).map_err(|e| CliError::Input(e.to_string()))
    } else {
        Permutation::from_cycles(n, trimmed).map_err(|e| CliError::Input(e.to_string()))
    }
}

/// Reproducibility header embedded in every output. Execution details that
/// cannot change the result (worker count, cap) are deliberately left out so
/// reruns stay byte-identical across machine configurations.
#[derive(Serialize)]
struct RunConfig {
    version: &'static str,
    command: String,
    seed: u64,
}

impl RunConfig {
    fn new(command: &str, common: &CommonOpts) -> Self {
        RunConfig {
            version: VERSION,
            command: command.to_string(),
            seed: common.seed,
        }
    }

    fn csv_comment(&self, detail: &str) -> String {
        format!(
            "mixopt v{} | command: {} | seed: {} | {detail}",
            self.version, self.command, self.seed
        )
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn json_output<T: Serialize>(config: &RunConfig, result: &T) -> String {
    let value = serde_json::json!({ "config": config, "result": result });
    let mut text = serde_json::to_string_pretty(&value).expect("serializable output");
    text.push('\n');
    text
}

fn solve_options(common: &CommonOpts) -> SolveOptions {
    SolveOptions {
        workers: common.workers,
        n_cap: common.n_cap,
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve {
            system,
            exact,
            approx,
            mode,
            common,
        } => {
            let loaded = load_system(&system)?;
            let result = if approx && !exact {
                solve_approx(&loaded.system)
            } else {
                solve_exact(&loaded.system, &solve_options(&common))?
            };
            let config = RunConfig::new("solve", &common);
            let mut value = serde_json::to_value(&result).expect("serializable");
            if mode == Mode::Max {
                value.as_object_mut().unwrap().remove("worst_perm");
                value.as_object_mut().unwrap().remove("worst_value");
            }
            if mode == Mode::Min {
                value.as_object_mut().unwrap().remove("best_perm");
                value.as_object_mut().unwrap().remove("best_value");
            }
            emit(&common.out, &json_output(&config, &value))
        }
        Command::Criterion { system, common } => {
            let loaded = load_system(&system)?;
            let report = criterion::check(&loaded.system)?;
            let mut table = String::new();
            let _ = writeln!(table, "  m1 | phi(m1)");
            for (i, phi) in report.phi.iter().enumerate() {
                let _ = writeln!(table, "{:>4} | {phi:.6e}", i + 2);
            }
            let _ = writeln!(
                table,
                "max phi = {:.6e} -> criterion {}",
                report.max_phi,
                if report.satisfied {
                    "SATISFIED: sorted matching provably optimal"
                } else {
                    "NOT satisfied: no optimality certificate"
                }
            );
            eprint!("{table}");
            let config = RunConfig::new("criterion", &common);
            emit(&common.out, &json_output(&config, &report))?;
            if report.satisfied {
                Ok(())
            } else {
                Err(CliError::CriterionUnsatisfied(
                    "criterion not satisfied".into(),
                ))
            }
        }
        Command::SteadyState {
            system,
            perm: perm_spec,
            common,
        } => {
            let loaded = load_system(&system)?;
            let p = parse_perm(&perm_spec, loaded.system.n())?;
            let state =
                steady_state(&loaded.system, &p).map_err(|e| CliError::Input(e.to_string()))?;
            let j = objective_j(&loaded.system, &p).map_err(|e| CliError::Input(e.to_string()))?;
            let j_approx = objective_j_approx(&loaded.system, &p)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let config = RunConfig::new("steady-state", &common);
            let result = serde_json::json!({
                "perm": p,
                "x_per": state.x_per,
                "objective": j,
                "objective_approx": j_approx,
            });
            emit(&common.out, &json_output(&config, &result))
        }
        Command::Simulate {
            system,
            perm: perm_spec,
            x0,
            steps,
            samples_per_period,
            common,
        } => {
            let loaded = load_system(&system)?;
            let dynamics = loaded.dynamics.ok_or_else(|| {
                CliError::Input(
                    "simulate needs a system file in dynamics form: {\"a\":[..],\"b\":[..],\"T\":t}"
                        .into(),
                )
            })?;
            let p = parse_perm(&perm_spec, dynamics.n())?;
            let x0: Vec<f64> = match x0 {
                Some(text) => serde_json::from_str(&text)
                    .map_err(|e| CliError::Input(format!("cannot parse --x0: {e}")))?,
                None => vec![0.0; dynamics.n()],
            };
            let traj = simulate(&dynamics, &p, &x0, steps, samples_per_period)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let config = RunConfig::new("simulate", &common);
            let mut csv = format!("# {}\n", config.csv_comment(&format!("perm: {p}")));
            csv.push_str(&traj.to_csv());
            emit(&common.out, &csv)
        }
        Command::RacewayEval { scenario, common } => {
            let sc: RacewayScenario = read_json(&scenario)?;
            let report = evaluate_scenario(&sc, &solve_options(&common))?;
            let config = RunConfig::new("raceway-eval", &common);
            emit(&common.out, &json_output(&config, &report))
        }
        Command::Sweep {
            grid,
            outputs,
            budget,
            common,
        } => {
            let grid: SweepGrid = read_json(&grid)?;
            let columns = match outputs {
                None => SweepColumn::all(),
                Some(list) => list
                    .split(',')
                    .map(|s| s.trim().parse::<SweepColumn>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(CliError::Input)?,
            };
            let estimate = raceway::estimate_sweep_evals(&grid, &columns);
            eprintln!(
                "sweep: {} grid points, estimated {estimate} objective evaluations",
                grid.points()
            );
            let opts = SweepOptions {
                columns,
                solve: solve_options(&common),
                budget_evals: budget,
                workers: common.workers,
            };
            let table = sweep(&grid, &opts)?;
            let config = RunConfig::new("sweep", &common);
            let csv = table.to_csv(&config.csv_comment(&format!(
                "grid: {} | budget: {budget}",
                serde_json::to_string(&grid).expect("serializable grid")
            )));
            emit(&common.out, &csv)
        }
        Command::Reproduce {
            preset,
            out_dir,
            n_max,
            n,
            t,
            common,
        } => reproduce(&preset, &out_dir, n_max, n, t, &common),
    }
}

/// The two reference parameter triplets used across the bundled presets:
/// a bright slow-lap pond and a dim fast-lap reactor.
const TRIPLETS: [(&str, f64, f64, f64); 2] = [
    ("bright_slow", 2000.0, 0.05, 1000.0),
    ("dim_fast", 800.0, 0.005, 1.0),
];

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn reproduce(
    preset: &str,
    out_dir: &Path,
    n_max: usize,
    n_override: Option<usize>,
    t_filter: Option<f64>,
    common: &CommonOpts,
) -> Result<(), CliError> {
    let config = RunConfig::new(&format!("reproduce {preset}"), common);
    let sweep_opts = |columns: Vec<SweepColumn>| SweepOptions {
        columns,
        solve: solve_options(common),
        budget_evals: u64::MAX,
        workers: common.workers.max(1),
    };
    let grid = |i_s: Vec<f64>, q: Vec<f64>, t: Vec<f64>, n: Vec<usize>| SweepGrid {
        i_s,
        q,
        t,
        n,
        depth: 0.4,
        han: Default::default(),
    };
    let surface_grid: Vec<f64> = (0..=10).map(|k| 250.0 * k as f64).collect();
    let q_grid = vec![0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1];
    let t_values: Vec<f64> = match t_filter {
        Some(t) => vec![t],
        None => vec![1.0, 1000.0],
    };
    match preset {
        // Growth rate vs layer count for both triplets: exact optimum up to
        // n_max, sorted matching far beyond.
        "muN" => {
            for (label, i_s, q, t) in TRIPLETS {
                let exact_cols = vec![
                    SweepColumn::MuMax,
                    SweepColumn::MuPlus,
                    SweepColumn::CriterionSatisfied,
                    SweepColumn::PmaxEqPplus,
                ];
                let exact_n: Vec<usize> = (2..=n_max.min(common.n_cap)).collect();
                let table = sweep(
                    &grid(vec![i_s], vec![q], vec![t], exact_n),
                    &sweep_opts(exact_cols),
                )?;
                let mut csv = table.to_csv(&config.csv_comment(&format!("triplet: {label}")));
                let approx_n = [12, 16, 20, 30, 50, 100];
                let approx_cols = vec![SweepColumn::MuPlus, SweepColumn::CriterionSatisfied];
                let table2 = sweep(
                    &grid(vec![i_s], vec![q], vec![t], approx_n.to_vec()),
                    &sweep_opts(approx_cols),
                )?;
                csv.push_str("# approximate-only tail (sorted matching, no exact scan):\n");
                for row in &table2.rows {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},,{},{},",
                        row.i_s,
                        row.q,
                        row.t,
                        row.n,
                        row.values[0].map(|x| x.to_string()).unwrap_or_default(),
                        row.values[1].map(|x| x.to_string()).unwrap_or_default(),
                    );
                }
                write_file(out_dir, &format!("muN_{label}.csv"), &csv)?;
            }
            Ok(())
        }
        // Flashing effect: growth rate of the optimal strategy vs lap time.
        "4muT" => {
            let table = sweep(
                &grid(
                    vec![500.0, 1000.0, 1500.0, 2000.0],
                    vec![0.001],
                    vec![1.0, 10.0, 100.0, 1000.0],
                    vec![n_override.unwrap_or(7)],
                ),
                &sweep_opts(vec![SweepColumn::MuMax, SweepColumn::MuPlus]),
            )?;
            write_file(
                out_dir,
                "4muT.csv",
                &table.to_csv(&config.csv_comment("flashing")),
            )
        }
        // Growth-rate surfaces with agreement and criterion markers.
        "2mark" => {
            for &layers in &[5usize, 9] {
                for &t in &t_values {
                    let table = sweep(
                        &grid(surface_grid.clone(), q_grid.clone(), vec![t], vec![layers]),
                        &sweep_opts(vec![
                            SweepColumn::MuMax,
                            SweepColumn::MuPlus,
                            SweepColumn::PmaxEqPplus,
                            SweepColumn::CriterionSatisfied,
                        ]),
                    )?;
                    write_file(
                        out_dir,
                        &format!("2mark_N{layers}_T{t}.csv"),
                        &table.to_csv(&config.csv_comment("surfaces")),
                    )?;
                }
            }
            Ok(())
        }
        // Strategy-efficiency ratio surfaces.
        "3r" | "2rt" => {
            let columns = if preset == "3r" {
                vec![SweepColumn::R1, SweepColumn::R2, SweepColumn::R3]
            } else {
                vec![SweepColumn::Rt1, SweepColumn::Rt2]
            };
            let layers = n_override.unwrap_or(9);
            for &t in &t_values {
                let table = sweep(
                    &grid(surface_grid.clone(), q_grid.clone(), vec![t], vec![layers]),
                    &sweep_opts(columns.clone()),
                )?;
                write_file(
                    out_dir,
                    &format!("{preset}_N{layers}_T{t}.csv"),
                    &table.to_csv(&config.csv_comment("ratios")),
                )?;
            }
            Ok(())
        }
        // Gap sums and pairing bounds vs block size.
        "Fm" => {
            for (label, i_s, q, t) in TRIPLETS {
                for layers in n_override.map(|n| vec![n]).unwrap_or(vec![7, 20]) {
                    let sc = RacewayScenario::new(i_s, q, t, layers);
                    let (_, sys) = build_han_system_cli(&sc)?;
                    let report = criterion::check(&sys)?;
                    let mut csv =
                        format!("# {}\n", config.csv_comment(&format!("triplet: {label}")));
                    csv.push_str("m,s_m,f_plus,f_minus\n");
                    for m in 1..=layers {
                        let _ = writeln!(
                            csv,
                            "{m},{},{},{}",
                            report.s[m - 1],
                            report.f_plus[m - 1],
                            report.f_minus[m - 1]
                        );
                    }
                    write_file(out_dir, &format!("Fm_{label}_N{layers}.csv"), &csv)?;
                }
            }
            Ok(())
        }
        // The phi curve behind the criterion verdict.
        "criterion" => {
            for (label, i_s, q, t) in TRIPLETS {
                for layers in n_override.map(|n| vec![n]).unwrap_or(vec![7, 20]) {
                    let sc = RacewayScenario::new(i_s, q, t, layers);
                    let (_, sys) = build_han_system_cli(&sc)?;
                    let report = criterion::check(&sys)?;
                    let mut csv =
                        format!("# {}\n", config.csv_comment(&format!("triplet: {label}")));
                    csv.push_str("m1,phi\n");
                    for (i, phi) in report.phi.iter().enumerate() {
                        let _ = writeln!(csv, "{},{}", i + 2, phi);
                    }
                    let _ = writeln!(
                        csv,
                        "# max_phi = {}, satisfied = {}",
                        report.max_phi, report.satisfied
                    );
                    write_file(out_dir, &format!("criterion_{label}_N{layers}.csv"), &csv)?;
                }
            }
            Ok(())
        }
        other => Err(CliError::Input(format!(
            "unknown preset {other:?}; known presets: muN, 4muT, 2mark, 3r, 2rt, Fm, criterion"
        ))),
    }
}

fn build_han_system_cli(
    sc: &RacewayScenario,
) -> Result<(raceway::HanVectors, AllocationSystem), CliError> {
    raceway::build_han_system(sc).map_err(CliError::from)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
