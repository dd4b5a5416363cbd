//! Subcommand implementations. Exit codes: 0 success (solve: Solved),
//! 1 usage or input error, 2 iteration limit, 3 solver failure, 4 analyze
//! found no reference point.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nadmm_core::admm::{run, AdmmConfig, SolveStatus, WarmStart, SCHEMA_VERSION};
use nadmm_core::analysis::{
    check_kkt, convergence_rate, critical_rho, nearest_reference, reference_solution,
    regularity_report, verify_decrease_bound, CriticalRho, KktReport, LyapunovSeries, RateSeries,
    ReferencePoint, RegularityReport,
};
use nadmm_core::expr::Point;
use nadmm_core::model::{slack_warm_start, validate, Problem};
use nalgebra::DVector;
use serde::Serialize;

use crate::io::{
    load_critical_rho_file, load_point, load_problem, load_problem_parts, matrix_from_rows,
    parse_problem, read_trace_csv, write_trace_csv,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ITER_LIMIT: i32 = 2;
pub const EXIT_SOLVER_FAILURE: i32 = 3;
pub const EXIT_NO_REFERENCE: i32 = 4;

#[derive(Parser)]
#[command(
    name = "nadmm",
    about = "ADMM solver for nonconvex equality-constrained problems with linear coupling",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run the ADMM loop on a problem file
    Solve(SolveArgs),
    /// KKT/regularity/Lyapunov diagnostics for points, traces, or matrices
    Analyze(AnalyzeArgs),
    /// Check a problem file (dimensions, variable references, rank of B)
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum WarmStartArg {
    /// Seed each subproblem at the previous iterate (first at --x0 or zeros)
    Previous,
    /// Seed every subproblem at --x0
    Fixed,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Problem JSON file
    #[arg(long)]
    pub problem: PathBuf,
    /// Penalty parameter (> 0)
    #[arg(long)]
    pub rho: f64,
    /// Primal residual tolerance
    #[arg(long, default_value_t = 1e-8)]
    pub eta_p: f64,
    /// Dual residual tolerance
    #[arg(long, default_value_t = 1e-8)]
    pub eta_d: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Initial y, comma-separated (default zeros)
    #[arg(long)]
    pub y0: Option<String>,
    /// Initial lambda, comma-separated (default zeros); projected onto
    /// null(B^T) before the run
    #[arg(long)]
    pub lambda0: Option<String>,
    /// Subproblem seed, comma-separated (default zeros)
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long, value_enum, default_value_t = WarmStartArg::Previous)]
    pub warm_start: WarmStartArg,
    /// Recorded for reproducibility; the solve itself is deterministic.
    /// NADMM_SEED overrides.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the iterate trace CSV here
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write the solve report JSON here
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub parallel_blocks: bool,
    /// Fill the wall_ms trace column (off by default so repeated runs are
    /// byte-identical)
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Problem JSON file (required unless only --critical-rho is used)
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Trace CSV from a solve; enables Lyapunov and rate diagnostics
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Penalty used for the trace (required with --trace; traces do not
    /// record it)
    #[arg(long)]
    pub rho: Option<f64>,
    /// Point to check: inline JSON or a file with {"x": [...], "y": [...],
    /// "mu": [...], "lambda": [...]}
    #[arg(long)]
    pub point: Option<String>,
    /// Number of multistart reference solves
    #[arg(long)]
    pub multistart: Option<usize>,
    /// Standalone critical-penalty query on a matrix file {"H", "C", "D"}
    #[arg(long)]
    pub critical_rho: Option<PathBuf>,
    /// NADMM_SEED overrides.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the analysis report JSON here (default: stdout)
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write a copy of the trace with the V column filled against the
    /// nearest reference
    #[arg(long)]
    pub annotated_trace: Option<PathBuf>,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn fail_usage(message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    EXIT_USAGE
}

fn parse_vector(arg: &Option<String>, len: usize, what: &str) -> Result<DVector<f64>, String> {
    match arg {
        None => Ok(DVector::zeros(len)),
        Some(text) => {
            let vals: Result<Vec<f64>, _> =
                text.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| format!("{what}: {e}"))?;
            if vals.len() != len {
                return Err(format!(
                    "{what}: expected {len} entries, got {}",
                    vals.len()
                ));
            }
            Ok(DVector::from_vec(vals))
        }
    }
}

/// NADMM_SEED, when set, overrides the --seed flag.
fn effective_seed(flag: u64) -> Result<u64, String> {
    match std::env::var("NADMM_SEED") {
        Err(_) => Ok(flag),
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|e| format!("NADMM_SEED: {e}")),
    }
}

fn write_json_report<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| format!("{}: {e}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Accepts `--x0` either in the full (slacked) dimension or in the original
/// dimension; in the latter case slack entries are seeded from the
/// inequality values at the warm start.
fn expand_x0(
    text: &str,
    prob: &Problem,
    base: &Problem,
    ineq: &nadmm_core::model::InequalitySpec,
) -> Result<DVector<f64>, String> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|e| format!("--x0: {e}"))?;
    if vals.len() == prob.n() {
        return Ok(DVector::from_vec(vals));
    }
    if vals.len() == base.n() && !ineq.constraints.is_empty() {
        let point = Point::new(base.x_vars.clone(), DVector::from_vec(vals.clone()))
            .map_err(|e| format!("--x0: {e}"))?;
        let mut full = vals;
        for h in &ineq.constraints {
            let value = h.eval(&point).map_err(|e| format!("--x0: {e}"))?;
            full.push(slack_warm_start(value));
        }
        return Ok(DVector::from_vec(full));
    }
    Err(format!(
        "--x0: expected {} entries ({} before slacks), got {}",
        prob.n(),
        base.n(),
        vals.len()
    ))
}

pub fn cmd_solve(args: &SolveArgs) -> i32 {
    let (prob, base, ineq) = match load_problem_parts(&args.problem) {
        Ok(parts) => parts,
        Err(e) => return fail_usage(e),
    };
    if let Err(e) = effective_seed(args.seed) {
        return fail_usage(e);
    }
    if args.rho.is_nan() || args.rho <= 0.0 {
        return fail_usage(format!("--rho must be positive, got {}", args.rho));
    }

    let y0 = match parse_vector(&args.y0, prob.m(), "--y0") {
        Ok(v) => v,
        Err(e) => return fail_usage(e),
    };
    let lambda0 = match parse_vector(&args.lambda0, prob.q(), "--lambda0") {
        Ok(v) => v,
        Err(e) => return fail_usage(e),
    };
    let x0 = match &args.x0 {
        Some(text) => match expand_x0(text, &prob, &base, &ineq) {
            Ok(v) => Some(v),
            Err(e) => return fail_usage(e),
        },
        None => {
            if matches!(args.warm_start, WarmStartArg::Fixed) {
                Some(DVector::zeros(prob.n()))
            } else {
                None
            }
        }
    };

    let mut config = AdmmConfig::new(args.rho, y0, lambda0);
    config.eta_p = args.eta_p;
    config.eta_d = args.eta_d;
    config.max_iter = args.max_iter;
    config.parallel_blocks = args.parallel_blocks;
    config.warm_start = match args.warm_start {
        WarmStartArg::Previous => WarmStart::PreviousIterate,
        WarmStartArg::Fixed => WarmStart::Fixed(x0.clone().unwrap()),
    };
    config.x0 = x0;

    let (report, trace) = match run(&prob, &config) {
        Ok(out) => out,
        Err(e) => return fail_usage(e),
    };

    if let Some(path) = &args.trace {
        if let Err(e) = write_trace_csv(path, &prob, &trace, None, args.timings) {
            return fail_usage(e);
        }
    }
    if let Some(path) = &args.report {
        if let Err(e) = write_json_report(Some(path), &report) {
            return fail_usage(e);
        }
    }

    match &report.status {
        SolveStatus::Solved => {
            println!(
                "solved in {} iterations: |q| = {:.3e}, |r| = {:.3e}",
                report.iterations, report.norm_q, report.norm_r
            );
            EXIT_OK
        }
        SolveStatus::IterLimit => {
            eprintln!(
                "iteration limit ({}) reached: |q| = {:.3e}, |r| = {:.3e}",
                report.iterations, report.norm_q, report.norm_r
            );
            EXIT_ITER_LIMIT
        }
        SolveStatus::Failed { iteration, reason } => {
            eprintln!("solver failure at iteration {iteration}: {reason}");
            EXIT_SOLVER_FAILURE
        }
    }
}

#[derive(Serialize)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kkt: Option<KktReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularity: Option<RegularityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<ReferencePoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nearest_reference: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nearest_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical_rho: Option<CriticalRho>,
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> i32 {
    let seed = match effective_seed(args.seed) {
        Ok(s) => s,
        Err(e) => return fail_usage(e),
    };
    if args.point.is_none()
        && args.trace.is_none()
        && args.critical_rho.is_none()
        && args.multistart.is_none()
    {
        return fail_usage(
            "analyze needs at least one of --point, --trace, --multistart, --critical-rho",
        );
    }

    let mut out = AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        kkt: None,
        regularity: None,
        references: None,
        nearest_reference: None,
        nearest_distance: None,
        lyapunov: None,
        rate: None,
        critical_rho: None,
    };

    if let Some(path) = &args.critical_rho {
        let file = match load_critical_rho_file(path) {
            Ok(f) => f,
            Err(e) => return fail_usage(e),
        };
        let n = file.h.len();
        let h = matrix_from_rows(&file.h, n);
        let c = matrix_from_rows(&file.c, n);
        let d = matrix_from_rows(&file.d, n);
        match critical_rho(&h, &c, &d) {
            Ok(cr) => out.critical_rho = Some(cr),
            Err(e) => return fail_usage(e),
        }
    }

    if args.point.is_some() || args.trace.is_some() || args.multistart.is_some() {
        let problem_path = match &args.problem {
            Some(p) => p,
            None => return fail_usage("--point/--trace/--multistart analysis requires --problem"),
        };
        let prob = match load_problem(problem_path) {
            Ok(p) => p,
            Err(e) => return fail_usage(e),
        };

        if let Some(point_arg) = &args.point {
            let point = match load_point(point_arg) {
                Ok(p) => p,
                Err(e) => return fail_usage(e),
            };
            let x = DVector::from_vec(point.x.clone());
            let y = DVector::from_vec(point.y.clone());
            let mu = DVector::from_vec(point.mu.clone());
            let lambda = DVector::from_vec(point.lambda.clone());
            match check_kkt(&prob, &x, &y, &mu, &lambda) {
                Ok(k) => out.kkt = Some(k),
                Err(e) => return fail_usage(e),
            }
            match regularity_report(&prob, &x, &mu, args.rho) {
                Ok(r) => out.regularity = Some(r),
                Err(e) => return fail_usage(e),
            }
        }

        let want_refs = args.trace.is_some() || args.multistart.is_some();
        if want_refs {
            let n_starts = args.multistart.unwrap_or(16).max(1);
            let refs = match reference_solution(&prob, n_starts, seed) {
                Ok(r) => r,
                Err(e) => return fail_usage(e),
            };
            if refs.is_empty() {
                eprintln!("error: multistart found no KKT point ({n_starts} starts)");
                return EXIT_NO_REFERENCE;
            }
            out.references = Some(refs);
        }

        if let Some(trace_path) = &args.trace {
            let rho = match args.rho {
                Some(r) if r > 0.0 => r,
                _ => return fail_usage("--trace analysis requires a positive --rho"),
            };
            let trace = match read_trace_csv(trace_path, &prob) {
                Ok(t) => t,
                Err(e) => return fail_usage(e),
            };
            if trace.is_empty() {
                return fail_usage(format!("{}: empty trace", trace_path.display()));
            }
            let refs = out.references.as_ref().unwrap();
            let last = trace.iterates.last().unwrap();
            let (idx, dist) =
                nearest_reference(refs, &last.y, &last.lambda, &prob.b_mat, rho).unwrap();
            let reference = &refs[idx];
            let series =
                verify_decrease_bound(&trace, &reference.y, &reference.lambda, &prob.b_mat, rho);
            let rate = convergence_rate(&trace, &reference.y, &reference.lambda, &prob.b_mat, rho);
            match regularity_report(&prob, &reference.x, &reference.mu, Some(rho)) {
                Ok(r) => out.regularity = Some(r),
                Err(e) => return fail_usage(e),
            }
            if let Some(annotated) = &args.annotated_trace {
                if let Err(e) = write_trace_csv(annotated, &prob, &trace, Some(&series.v), true) {
                    return fail_usage(e);
                }
            }
            out.nearest_reference = Some(idx);
            out.nearest_distance = Some(dist);
            out.lyapunov = Some(series);
            out.rate = Some(rate);
        }
    }

    match write_json_report(args.report.as_deref(), &out) {
        Ok(()) => EXIT_OK,
        Err(e) => fail_usage(e),
    }
}

#[derive(Serialize)]
struct ValidateReportFile {
    schema_version: u32,
    #[serde(flatten)]
    report: nadmm_core::model::ValidationReport,
}

pub fn cmd_validate(args: &ValidateArgs) -> i32 {
    let prob = match parse_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => return fail_usage(e),
    };
    let report = validate(&prob);
    let ok = report.is_ok();
    let file = ValidateReportFile {
        schema_version: SCHEMA_VERSION,
        report,
    };
    if let Err(e) = write_json_report(args.report.as_deref(), &file) {
        return fail_usage(e);
    }
    if ok {
        EXIT_OK
    } else {
        EXIT_USAGE
    }
}

pub fn dispatch(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Validate(args) => cmd_validate(args),
    }
}
