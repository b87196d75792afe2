//! Privacy-ratio sweeps, correlation grids, CSV output and the CLI.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solution_for_policy, solve_general, solve_scalar, EquilibriumSolution, PrivacyRatio};
use crate::error::{Error, Result};
use crate::estimation::{costs_from_moments, feasibility_check, sender_cost_quadratic, CostOperator};
use crate::model::{validate_model, GaussianModel, Scenario, DEFAULT_PD_TOLERANCE};
use crate::verification::{
    check_coalition_separation, check_estimator_optimality, check_sender_deviation, monte_carlo_costs,
    oracle_solve, CoalitionWeight, DeviationReport, SimulationConfig, ORACLE_TOLERANCE,
};

/// One row of a privacy-ratio sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub delta: f64,
    pub v_xw: f64,
    pub receiver_mse_closed: f64,
    pub malicious_mse_closed: f64,
    pub receiver_mse_mc: Option<f64>,
    pub malicious_mse_mc: Option<f64>,
    pub sender_cost: f64,
    pub active_rank: usize,
}

/// One cell of a privacy-ratio × correlation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub delta: f64,
    pub v_xw: f64,
    /// Absent when the model is not positive definite at this `v_xw`.
    pub receiver_mse_closed: Option<f64>,
    pub feasible: bool,
}

/// `0, 0.1, …, 10` followed by `20, 50, 100`.
pub fn default_delta_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=100).map(|i| i as f64 / 10.0).collect();
    grid.extend([20.0, 50.0, 100.0]);
    grid
}

/// Parses `a:b:step` (inclusive of `b`) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("bad grid value {s:?}: {e}")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (number(a)?, number(b)?, number(step)?);
            if !(step > 0.0) || !(b >= a) {
                return Err(Error::Parse(format!("bad grid range {text:?}")));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize;
            (0..=count).map(|i| a + i as f64 * step).collect()
        }
        [_] => text.split(',').map(number).collect::<Result<Vec<_>>>()?,
        _ => return Err(Error::Parse(format!("grid must be a:b:step or a list, got {text:?}"))),
    };
    Ok(grid)
}

fn check_grid(name: &str, grid: &[f64], non_negative: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Contract(format!("{name} grid is empty")));
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Contract(format!("{name} grid must be sorted ascending")));
    }
    if non_negative && grid.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Contract(format!("{name} grid must be non-negative")));
    }
    Ok(())
}

/// Informative equilibrium: the closed form for scalar messages, the
/// eigenvector construction otherwise.
pub fn solve_for(model: &GaussianModel, delta: PrivacyRatio) -> Result<EquilibriumSolution> {
    if model.dims().n_y == 1 {
        solve_scalar(model, delta)
    } else {
        solve_general(model, delta)
    }
}

fn sweep_point(
    model: &GaussianModel,
    delta: f64,
    simulation: Option<SimulationConfig>,
) -> Result<SweepRecord> {
    let ratio = PrivacyRatio::new(delta)?;
    let sol = solve_for(model, ratio)?;
    let mc = match simulation {
        Some(config) => Some(monte_carlo_costs(
            model,
            &sol.sender,
            &sol.receiver,
            &sol.malicious,
            ratio,
            &config,
        )?),
        None => None,
    };
    Ok(SweepRecord {
        delta,
        v_xw: model.v_xw()[(0, 0)],
        receiver_mse_closed: sol.receiver_mse,
        malicious_mse_closed: sol.malicious_mse,
        receiver_mse_mc: mc.map(|r| r.costs.receiver_mse),
        malicious_mse_mc: mc.map(|r| r.costs.malicious_mse),
        sender_cost: sol.sender_cost,
        active_rank: sol.diagnostics.active_rank,
    })
}

/// One record per privacy ratio. With `simulation`, point `i` is also
/// simulated with seed `simulation.seed + i`.
pub fn run_delta_sweep(
    model: &GaussianModel,
    delta_grid: &[f64],
    simulation: Option<&SimulationConfig>,
) -> Result<Vec<SweepRecord>> {
    model.ensure_valid()?;
    check_grid("delta", delta_grid, true)?;
    delta_grid
        .par_iter()
        .enumerate()
        .map(|(i, &delta)| {
            let config = simulation.map(|c| SimulationConfig {
                seed: c.seed.wrapping_add(i as u64),
                ..*c
            });
            sweep_point(model, delta, config)
        })
        .collect()
}

/// Receiver error over `delta_grid × v_xw_grid` (delta-major order), with
/// every entry of `V_xw` set to the grid value. Values that make the model
/// singular or indefinite are reported as infeasible.
pub fn run_correlation_grid(
    template: &GaussianModel,
    delta_grid: &[f64],
    v_xw_grid: &[f64],
) -> Result<Vec<GridRecord>> {
    check_grid("delta", delta_grid, true)?;
    check_grid("v_xw", v_xw_grid, false)?;
    let cells: Vec<(f64, f64)> = delta_grid
        .iter()
        .flat_map(|&d| v_xw_grid.iter().map(move |&v| (d, v)))
        .collect();
    cells
        .par_iter()
        .map(|&(delta, v_xw)| {
            let model = template.with_uniform_v_xw(v_xw);
            if !validate_model(&model, DEFAULT_PD_TOLERANCE).is_ok() {
                return Ok(GridRecord {
                    delta,
                    v_xw,
                    receiver_mse_closed: None,
                    feasible: false,
                });
            }
            let sol = solve_for(&model, PrivacyRatio::new(delta)?)?;
            Ok(GridRecord {
                delta,
                v_xw,
                receiver_mse_closed: Some(sol.receiver_mse),
                feasible: true,
            })
        })
        .collect()
}

pub fn write_csv<T: Serialize, W: Write>(writer: W, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned, R: std::io::Read>(reader: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_csv_file<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(std::io::BufWriter::new(file), records)
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "privgame", version, about = "Equilibria of the Gaussian privacy game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that the scenario's joint covariance is positive definite.
    Validate { scenario: PathBuf },
    /// Compute the informative equilibrium.
    Solve {
        scenario: PathBuf,
        /// Privacy ratio; overrides the scenario's `delta`.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the equilibrium and compare empirical with closed-form errors.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 1 << 16)]
        chunk_size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the equilibrium (or the scenario's `policy`) for profitable deviations.
    Verify {
        scenario: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 50)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Sweep the privacy ratio.
    SweepDelta {
        scenario: PathBuf,
        /// `a:b:step` or a comma list; defaults to 0:10:0.1 plus 20,50,100.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        simulate: bool,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Receiver error over a privacy-ratio × correlation grid.
    SweepGrid {
        scenario: PathBuf,
        #[arg(long)]
        delta_grid: String,
        #[arg(long)]
        vxw_grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidModel(_) | Error::Dimension { .. } => EXIT_INVALID,
        Error::NonEquilibrium { .. } => EXIT_VERIFICATION,
        _ => EXIT_IO,
    }
}

/// Runs the CLI with standard output and standard error.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_main_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI writing the summary to `out` and diagnostics to `err`.
pub fn cli_main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_IO,
            };
        }
    };
    match run(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn delta_or(scenario: &Scenario, flag: Option<f64>) -> Result<PrivacyRatio> {
    match flag {
        Some(d) => PrivacyRatio::new(d),
        None => Ok(scenario.delta),
    }
}

fn print_matrix(out: &mut dyn Write, name: &str, m: &nalgebra::DMatrix<f64>) -> std::io::Result<()> {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.12}")).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    writeln!(out, "{name} = [{}]", rows.join(", "))
}

fn print_solution(out: &mut dyn Write, sol: &EquilibriumSolution) -> std::io::Result<()> {
    print_matrix(out, "K_x", &sol.sender.k_x)?;
    print_matrix(out, "K_w", &sol.sender.k_w)?;
    print_matrix(out, "V_vv", &sol.sender.v_vv)?;
    writeln!(out, "receiver_mse = {:.12}", sol.receiver_mse)?;
    writeln!(out, "malicious_mse = {:.12}", sol.malicious_mse)?;
    writeln!(out, "sender_cost = {:.12}", sol.sender_cost)?;
    writeln!(out, "eigenvalues = {:?}", sol.diagnostics.eigenvalues)?;
    writeln!(out, "active_rank = {}", sol.diagnostics.active_rank)
}

fn print_report(out: &mut dyn Write, label: &str, r: &DeviationReport) -> std::io::Result<()> {
    writeln!(
        out,
        "{label}: {} (trials {}, best cost change {:.3e}{})",
        if r.passed { "pass" } else { "FAIL" },
        r.trials,
        r.best_cost_change,
        r.residual
            .map(|v| format!(", orthogonality residual {v:.3e}"))
            .unwrap_or_default()
    )
}

fn run(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Validate { scenario } => {
            let s = Scenario::load_unvalidated(&scenario)?;
            let report = validate_model(&s.model, DEFAULT_PD_TOLERANCE);
            if report.is_ok() {
                writeln!(out, "ok").map_err(io_err)?;
                Ok(EXIT_OK)
            } else {
                for v in &report.violations {
                    writeln!(out, "violation: {v}").map_err(io_err)?;
                }
                Ok(EXIT_INVALID)
            }
        }
        Command::Solve {
            scenario,
            delta,
            out: csv_path,
        } => {
            let s = Scenario::load(&scenario)?;
            let delta = delta_or(&s, delta)?;
            let sol = solve_for(&s.model, delta)?;
            writeln!(out, "delta = {}", delta.value()).map_err(io_err)?;
            print_solution(out, &sol).map_err(io_err)?;
            if let Some(path) = csv_path {
                write_csv_file(&path, &[sweep_point(&s.model, delta.value(), None)?])?;
            }
            Ok(EXIT_OK)
        }
        Command::Simulate {
            scenario,
            samples,
            seed,
            delta,
            chunk_size,
            out: csv_path,
        } => {
            let s = Scenario::load(&scenario)?;
            let delta = delta_or(&s, delta)?;
            let config = SimulationConfig::new(samples, seed, chunk_size)?;
            let record = sweep_point(&s.model, delta.value(), Some(config))?;
            let sol = solve_for(&s.model, delta)?;
            let mc = monte_carlo_costs(&s.model, &sol.sender, &sol.receiver, &sol.malicious, delta, &config)?;
            writeln!(out, "delta = {}, samples = {samples}, seed = {seed}", delta.value()).map_err(io_err)?;
            writeln!(
                out,
                "receiver_mse: closed {:.9}, monte carlo {:.9} ± {:.2e}",
                sol.receiver_mse, mc.costs.receiver_mse, mc.receiver_se
            )
            .map_err(io_err)?;
            writeln!(
                out,
                "malicious_mse: closed {:.9}, monte carlo {:.9} ± {:.2e}",
                sol.malicious_mse, mc.costs.malicious_mse, mc.malicious_se
            )
            .map_err(io_err)?;
            if let Some(path) = csv_path {
                write_csv_file(&path, &[record])?;
            }
            Ok(EXIT_OK)
        }
        Command::Verify {
            scenario,
            trials,
            restarts,
            seed,
            delta,
        } => {
            let s = Scenario::load(&scenario)?;
            let delta = delta_or(&s, delta)?;
            verify(out, &s, delta, trials, restarts, seed)
        }
        Command::SweepDelta {
            scenario,
            grid,
            simulate,
            samples,
            seed,
            out: csv_path,
        } => {
            let s = Scenario::load(&scenario)?;
            let grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => default_delta_grid(),
            };
            let config = SimulationConfig::new(samples, seed, 1 << 16)?;
            let records = run_delta_sweep(&s.model, &grid, simulate.then_some(&config))?;
            for r in &records {
                writeln!(
                    out,
                    "delta {:>8}  receiver {:.9}  malicious {:.9}  cost {:.9}",
                    r.delta, r.receiver_mse_closed, r.malicious_mse_closed, r.sender_cost
                )
                .map_err(io_err)?;
            }
            if let Some(path) = csv_path {
                write_csv_file(&path, &records)?;
            }
            Ok(EXIT_OK)
        }
        Command::SweepGrid {
            scenario,
            delta_grid,
            vxw_grid,
            out: csv_path,
        } => {
            let s = Scenario::load(&scenario)?;
            let records = run_correlation_grid(&s.model, &parse_grid(&delta_grid)?, &parse_grid(&vxw_grid)?)?;
            let feasible = records.iter().filter(|r| r.feasible).count();
            writeln!(out, "{} grid points, {feasible} feasible", records.len()).map_err(io_err)?;
            if let Some(path) = csv_path {
                write_csv_file(&path, &records)?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn verify(
    out: &mut dyn Write,
    scenario: &Scenario,
    delta: PrivacyRatio,
    trials: usize,
    restarts: usize,
    seed: u64,
) -> Result<i32> {
    let model = &scenario.model;
    let (sol, solved) = match &scenario.policy {
        Some(policy) => (solution_for_policy(model, delta, policy.clone())?, false),
        None => (solve_for(model, delta)?, true),
    };
    let mut ok = true;

    let sender = check_sender_deviation(model, &sol, trials, seed)?;
    print_report(out, "sender deviation", &sender).map_err(io_err)?;
    ok &= sender.passed;

    let estimators = check_estimator_optimality(model, &sol.moments, &sol.receiver, &sol.malicious, trials, seed)?;
    print_report(out, "receiver optimality", &estimators.receiver).map_err(io_err)?;
    print_report(out, "malicious optimality", &estimators.malicious).map_err(io_err)?;
    ok &= estimators.passed();

    let separated = check_coalition_separation(model, &sol, CoalitionWeight::new(1.0)?)?;
    writeln!(out, "coalition separation: {}", if separated { "pass" } else { "FAIL" }).map_err(io_err)?;
    ok &= separated;

    if solved {
        let operator = CostOperator::new(model, delta)?;
        let quadratic = sender_cost_quadratic(&operator, model, &sol.moments)?;
        let direct = costs_from_moments(model, &sol.moments, delta)?.sender_cost;
        let identity_ok = (quadratic - direct).abs() <= 1e-9;
        writeln!(out, "cost identity: {} (|difference| {:.3e})", if identity_ok { "pass" } else { "FAIL" }, (quadratic - direct).abs())
            .map_err(io_err)?;
        ok &= identity_ok;

        let feasibility = feasibility_check(&operator, &sol.moments);
        writeln!(out, "constraint: {} (margin {:.3e})", if feasibility.feasible { "pass" } else { "FAIL" }, feasibility.margin)
            .map_err(io_err)?;
        ok &= feasibility.feasible;

        let oracle = oracle_solve(model, delta, restarts, seed)?;
        let beaten = oracle.cost < sol.diagnostics.objective - ORACLE_TOLERANCE;
        writeln!(
            out,
            "oracle: {} (oracle {:.12}, solver {:.12})",
            if beaten { "FAIL" } else { "pass" },
            oracle.cost,
            sol.diagnostics.objective
        )
        .map_err(io_err)?;
        ok &= !beaten;
    }
    Ok(if ok { EXIT_OK } else { EXIT_VERIFICATION })
}
