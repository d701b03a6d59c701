//! The `sweepsim` command line.
//!
//! Exit codes: 0 success, 2 validation error, 3 solver failure,
//! 4 assumptions refuted, 5 convergence order below 0.9.

pub mod output;
pub mod scenario;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::constraints::{certify, CertifyOptions};
use crate::geometry::ProxCertificate;
use crate::oracles;
use crate::solver::{solution_bound, Solver, SolverError, SweepingProblem};
use crate::verify::{
    convergence_study, probe_unreached, reachability_from, residual_report, sample_initial_values,
    ReachableSet, RESIDUAL_SAMPLES,
};
use crate::{point, Point};
pub use scenario::{builtin, InitialSpec, OutputKind, Scenario, ScenarioError, BUILTIN_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_REFUTED: i32 = 4;
pub const EXIT_ORDER: i32 = 5;

/// Minimum fitted order accepted by `converge`.
pub const MIN_ORDER: f64 = 0.9;

/// Default sample budget of `certify`.
pub const CERTIFY_BUDGET: usize = 10_000;

/// Radius of the probe that looks for points of `C(T)` missed by `reach`.
const PROBE_DISTANCE: f64 = 0.5;

#[derive(Parser, Debug)]
#[command(name = "sweepsim", version, about = "Catching-up solver for perturbed sweeping processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Scenario file, or the name of a built-in scenario.
    pub scenario: String,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "n-steps")]
    pub n_steps: Option<usize>,
    /// Projection tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Sample count: initial values for sampler scenarios and `reach`, the
    /// check budget for `certify`.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate a scenario and write trajectory, residuals and metadata.
    Solve(Common),
    /// Check A1-A4 by sampling and print the derived certificate.
    Certify(Common),
    /// Run a convergence study against the scenario's reference solution.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated grid sizes.
        #[arg(long = "n-list", value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
    },
    /// Sample initial values of C(0) and collect the endpoints x(T).
    Reach(Common),
}

/// Outcome of a command: exit code plus the text for stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

fn fail(code: i32, msg: impl std::fmt::Display) -> Result<Outcome, (i32, String)> {
    Err((code, msg.to_string()))
}

fn solver_code(e: &SolverError) -> i32 {
    match e {
        SolverError::InfeasibleSlice { .. } | SolverError::NonConvergence { .. } => EXIT_SOLVER,
        _ => EXIT_VALIDATION,
    }
}

fn load(common: &Common) -> Result<Scenario, (i32, String)> {
    let mut s = Scenario::load(&common.scenario).map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
    if let Some(seed) = common.seed {
        s.solver.seed = seed;
    }
    if let Some(n) = common.n_steps {
        s.solver.n_steps = n;
    }
    if let Some(tol) = common.tol {
        s.solver.tol = Some(tol);
    }
    s.validate().map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
    Ok(s)
}

fn out_dir(common: &Common) -> Result<Option<PathBuf>, (i32, String)> {
    match &common.out {
        None => Ok(None),
        Some(p) => {
            std::fs::create_dir_all(p)
                .map_err(|e| (EXIT_VALIDATION, format!("cannot create {}: {e}", p.display())))?;
            Ok(Some(p.clone()))
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> (i32, String) {
    (EXIT_VALIDATION, format!("cannot write {}: {e}", path.display()))
}

fn initial_values(s: &Scenario, common: &Common) -> Result<Vec<Point>, (i32, String)> {
    match &s.x0 {
        InitialSpec::Point(p) => Ok(vec![point(p)]),
        InitialSpec::Sampler(sp) => {
            let n = common.samples.unwrap_or(sp.count);
            sample_initial_values(&s.family, n, sp.seed).map_err(|e| (solver_code(&e), e.to_string()))
        }
    }
}

/// Admits the scenario's problem, starting from its first initial value.
fn admit(s: &Scenario, x0: &Point) -> Result<Solver, (i32, String)> {
    let problem = SweepingProblem::new(s.family.clone(), s.perturbation.build(), x0.clone(), s.horizon())
        .map_err(|e| (solver_code(&e), e.to_string()))?;
    Solver::admit(problem, s.solver.options()).map_err(|e| (solver_code(&e), e.to_string()))
}

fn cert_json(c: &ProxCertificate) -> serde_json::Value {
    json!({
        "rho": output::json_num(c.rho),
        "l1": c.l1,
        "gamma": c.gamma,
        "mu": c.mu,
        "r": output::json_num(c.r),
        "theta": c.theta,
    })
}

fn cmd_solve(common: &Common) -> Result<Outcome, (i32, String)> {
    let s = load(common)?;
    let initial = initial_values(&s, common)?;
    let dir = out_dir(common)?;
    if matches!(s.x0, InitialSpec::Sampler(_)) {
        return run_reach(&s, &initial, dir.as_deref());
    }
    let solver = admit(&s, &initial[0])?;
    let traj = solver.solve().map_err(|e| (solver_code(&e), e.to_string()))?;
    let problem = solver.problem();
    let cert = solver.certificate();
    let h = s.horizon() / s.solver.n_steps as f64;
    let bound = solution_bound(problem, cert.theta);
    let residuals = residual_report(&traj, problem, cert, &bound, 10.0 * h, RESIDUAL_SAMPLES)
        .map_err(|e| (EXIT_SOLVER, e.to_string()))?;

    let meta = json!({
        "scenario": s.name,
        "command": "solve",
        "version": env!("CARGO_PKG_VERSION"),
        "n_steps": s.solver.n_steps,
        "h": h,
        "seed": s.solver.seed,
        "tol": traj.tol,
        "healed": traj.healed,
        "certificate": cert_json(cert),
        "assumptions": solver.report().summary(),
        "m_x0": bound.m_x0,
        "endpoint": traj.endpoint().as_slice(),
        "feasibility_max": residuals.feasibility_max,
        "inclusion_max": residuals.inclusion_max,
        "bound_margin": residuals.bound_margin,
    });
    if let Some(dir) = dir {
        if s.wants(OutputKind::Trajectory) {
            let p = dir.join("trajectory.csv");
            output::write_trajectory(&p, &traj).map_err(|e| io_err(&p, e))?;
        }
        if s.wants(OutputKind::Residuals) {
            let p = dir.join("residuals.csv");
            output::write_residuals(&p, &residuals).map_err(|e| io_err(&p, e))?;
        }
        if s.wants(OutputKind::Metadata) {
            let p = dir.join("metadata.json");
            output::write_json(&p, &meta).map_err(|e| io_err(&p, e))?;
        }
    }
    Ok(Outcome {
        code: EXIT_OK,
        stdout: serde_json::to_string_pretty(&meta).expect("metadata serialises") + "\n",
    })
}

fn run_reach(s: &Scenario, initial: &[Point], dir: Option<&Path>) -> Result<Outcome, (i32, String)> {
    let solver = admit(s, &initial[0])?;
    let reach = reachability_from(&solver, initial);
    let probe = probe_unreached(&reach, &s.family, s.horizon(), PROBE_DISTANCE, 1000)
        .map_err(|e| (EXIT_SOLVER, e.to_string()))?;
    let meta = reach_summary(s, &reach, probe.as_ref());
    if let Some(dir) = dir {
        if s.wants(OutputKind::Endpoints) {
            let p = dir.join("endpoints.csv");
            output::write_endpoints(&p, &reach).map_err(|e| io_err(&p, e))?;
        }
        if s.wants(OutputKind::Metadata) {
            let p = dir.join("metadata.json");
            output::write_json(&p, &meta).map_err(|e| io_err(&p, e))?;
        }
    }
    let code = if reach.entries.is_empty() { EXIT_SOLVER } else { EXIT_OK };
    if code != EXIT_OK {
        return fail(code, format!("all {} solves failed: {}", reach.failures.len(), reach.failures[0].error));
    }
    for f in &reach.failures {
        log::warn!("sample {} failed: {}", f.index, f.error);
    }
    Ok(Outcome {
        code,
        stdout: serde_json::to_string_pretty(&meta).expect("summary serialises") + "\n",
    })
}

fn reach_summary(s: &Scenario, reach: &ReachableSet, probe: Option<&Point>) -> serde_json::Value {
    let lid_frame = s.family == crate::catalog::capped_corner_family()
        && s.perturbation == scenario::PerturbationSpec::Zero;
    let endpoint_oracle = lid_frame.then(|| {
        reach
            .entries
            .iter()
            .filter_map(|e| oracles::example4_endpoint(&point(&e.x0)).ok())
            .zip(reach.endpoints())
            .map(|(o, e)| (o - e).norm())
            .fold(0.0f64, f64::max)
    });
    json!({
        "scenario": s.name,
        "command": "reach",
        "version": env!("CARGO_PKG_VERSION"),
        "n_steps": s.solver.n_steps,
        "h": s.horizon() / s.solver.n_steps as f64,
        "seed": s.solver.seed,
        "samples": reach.entries.len() + reach.failures.len(),
        "solved": reach.entries.len(),
        "failures": reach.failures,
        "diameter": reach.diameter(),
        "lipschitz_estimate": reach.lipschitz_estimate(),
        "max_endpoint_error": endpoint_oracle,
        "unreached_probe": probe.map(|p| p.as_slice().to_vec()),
    })
}

fn cmd_reach(common: &Common) -> Result<Outcome, (i32, String)> {
    let mut s = load(common)?;
    if let (InitialSpec::Point(_), Some(n)) = (&s.x0, common.samples) {
        s.x0 = InitialSpec::Sampler(scenario::SamplerSpec {
            count: n,
            seed: s.solver.seed,
        });
    }
    let initial = initial_values(&s, common)?;
    let dir = out_dir(common)?;
    run_reach(&s, &initial, dir.as_deref())
}

fn cmd_certify(common: &Common) -> Result<Outcome, (i32, String)> {
    let s = load(common)?;
    let budget = common.samples.unwrap_or(CERTIFY_BUDGET);
    let (report, cert) = certify(
        &s.family,
        &CertifyOptions {
            budget,
            gamma: s.solver.gamma,
            seed: s.solver.seed,
            ..CertifyOptions::default()
        },
    );
    let out = json!({
        "scenario": s.name,
        "command": "certify",
        "summary": report.summary(),
        "certificate": cert.as_ref().map(cert_json),
        "report": report,
    });
    let text = serde_json::to_string_pretty(&out).expect("report serialises") + "\n";
    if let Some(dir) = out_dir(common)? {
        let p = dir.join("certificate.json");
        output::write_json(&p, &out).map_err(|e| io_err(&p, e))?;
    }
    let code = if report.all_passed() && cert.is_some() {
        EXIT_OK
    } else {
        EXIT_REFUTED
    };
    Ok(Outcome { code, stdout: text })
}

fn cmd_converge(common: &Common, n_list: Option<&[usize]>) -> Result<Outcome, (i32, String)> {
    let s = load(common)?;
    let Some(oracle) = s.oracle.clone() else {
        return fail(EXIT_VALIDATION, format!("scenario {:?} has no reference solution", s.name));
    };
    let ns: Vec<usize> = n_list
        .map(<[usize]>::to_vec)
        .or_else(|| s.n_list.clone())
        .unwrap_or_else(|| vec![250, 500, 1000, 2000]);
    let initial = initial_values(&s, common)?;
    let solver = admit(&s, &initial[0])?;
    let table = convergence_study(&solver, &oracle, &ns).map_err(|e| (solver_code(&e), e.to_string()))?;
    if let Some(dir) = out_dir(common)? {
        if s.wants(OutputKind::Convergence) {
            let p = dir.join("convergence.csv");
            output::write_convergence(&p, &table).map_err(|e| io_err(&p, e))?;
        }
    }
    let out = json!({
        "scenario": s.name,
        "command": "converge",
        "rows": table.rows,
        "fitted_order": table.fitted_order,
        "notice": table.notice,
    });
    let text = serde_json::to_string_pretty(&out).expect("table serialises") + "\n";
    let code = match table.fitted_order {
        Some(p) if p < MIN_ORDER => EXIT_ORDER,
        _ => EXIT_OK,
    };
    if let Some(n) = &table.notice {
        eprintln!("notice: {n}");
    }
    Ok(Outcome { code, stdout: text })
}

/// Runs a parsed command. Errors are returned as `(code, message)`.
pub fn execute(cli: &Cli) -> Result<Outcome, (i32, String)> {
    match &cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::Certify(c) => cmd_certify(c),
        Command::Converge { common, n_list } => cmd_converge(common, n_list.as_deref()),
        Command::Reach(c) => cmd_reach(c),
    }
}

/// Sizes the global thread pool from `SWEEPSIM_THREADS`.
pub fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("SWEEPSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("SWEEPSIM_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_VALIDATION;
    }
    match execute(&cli) {
        Ok(o) => {
            print!("{}", o.stdout);
            o.code
        }
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}
