//! File formats: problem JSON ingestion, trace CSV, report JSON.
//!
//! Trace CSV schema (header is stable across runs):
//! `k, norm_q, norm_r, x:<name>..., y:<name>..., lambda:<i>..., mu:<j>..., V, wall_ms`.
//! The `V` column is left empty until a reference point is known (the
//! analyze command can fill it); `wall_ms` is left empty unless timings are
//! requested, so that repeated runs with identical inputs produce
//! byte-identical traces.

use std::fs;
use std::path::Path;

use nadmm_core::admm::{Iterate, SubproblemInfo, Trace};
use nadmm_core::model::{
    add_slacks, problem_from_json, problem_parts_from_json, validate, InequalitySpec, ModelError,
    Problem, ValidationReport,
};
use nadmm_core::nlpsolve::NlpStatus;
use nalgebra::DVector;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Model {
        path: String,
        #[source]
        source: ModelError,
    },
    #[error("{path}: validation failed: {}", report.failures.join("; "))]
    Validation {
        path: String,
        report: ValidationReport,
    },
    #[error("{path}: {message}")]
    Trace { path: String, message: String },
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_json(path: &Path, text: &str) -> Result<serde_json::Value, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses a problem file without validating it (used by `validate`).
pub fn parse_problem(path: &Path) -> Result<Problem, CliError> {
    let text = read_to_string(path)?;
    let value = parse_json(path, &text)?;
    problem_from_json(&value).map_err(|source| CliError::Model {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a problem file; block forms are canonicalized, inequalities get
/// slacks, and the result must pass validation (including the column rank
/// of `B`).
pub fn load_problem(path: &Path) -> Result<Problem, CliError> {
    let prob = parse_problem(path)?;
    let report = validate(&prob);
    if !report.is_ok() {
        return Err(CliError::Validation {
            path: path.display().to_string(),
            report,
        });
    }
    Ok(prob)
}

/// As [`load_problem`], also returning the pre-slack problem and the
/// inequality list (for slack warm starts).
pub fn load_problem_parts(path: &Path) -> Result<(Problem, Problem, InequalitySpec), CliError> {
    let text = read_to_string(path)?;
    let value = parse_json(path, &text)?;
    let model_err = |source: ModelError| CliError::Model {
        path: path.display().to_string(),
        source,
    };
    let (base, ineq) = problem_parts_from_json(&value).map_err(model_err)?;
    let slacked = add_slacks(&base, &ineq).map_err(model_err)?;
    let report = validate(&slacked);
    if !report.is_ok() {
        return Err(CliError::Validation {
            path: path.display().to_string(),
            report,
        });
    }
    Ok((slacked, base, ineq))
}

pub fn trace_header(prob: &Problem) -> Vec<String> {
    let mut cols = vec!["k".to_string(), "norm_q".to_string(), "norm_r".to_string()];
    cols.extend(prob.x_vars.names().iter().map(|n| format!("x:{n}")));
    cols.extend(prob.y_vars.names().iter().map(|n| format!("y:{n}")));
    cols.extend((0..prob.q()).map(|i| format!("lambda:{i}")));
    cols.extend((0..prob.p()).map(|j| format!("mu:{j}")));
    cols.push("V".to_string());
    cols.push("wall_ms".to_string());
    cols
}

/// Writes the trace CSV. `v_series`, when given, must have one value per
/// iterate and fills the `V` column.
pub fn write_trace_csv(
    path: &Path,
    prob: &Problem,
    trace: &Trace,
    v_series: Option<&[f64]>,
    include_timings: bool,
) -> Result<(), CliError> {
    let io_err = |source: std::io::Error| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(source),
        other => CliError::Trace {
            path: path.display().to_string(),
            message: format!("{other:?}"),
        },
    })?;
    writer
        .write_record(trace_header(prob))
        .map_err(|e| CliError::Trace {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    for (i, it) in trace.iterates.iter().enumerate() {
        let mut record: Vec<String> = Vec::with_capacity(6 + it.x.len() + it.y.len());
        record.push(it.k.to_string());
        record.push(format!("{}", it.norm_q));
        record.push(format!("{}", it.norm_r));
        record.extend(it.x.iter().map(|v| format!("{v}")));
        record.extend(it.y.iter().map(|v| format!("{v}")));
        record.extend(it.lambda.iter().map(|v| format!("{v}")));
        record.extend(it.mu.iter().map(|v| format!("{v}")));
        record.push(match v_series {
            Some(vs) => format!("{}", vs[i]),
            None => String::new(),
        });
        record.push(if include_timings {
            format!("{}", trace.wall_ms[i])
        } else {
            String::new()
        });
        writer.write_record(&record).map_err(|e| CliError::Trace {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    writer.flush().map_err(io_err)
}

/// Reads a trace CSV back against its problem. The CSV stores residual
/// norms, not the residual vectors, so the reconstructed iterates carry
/// empty `q`/`r` vectors with the norms from the file; the analysis
/// routines only use the norms.
pub fn read_trace_csv(path: &Path, prob: &Problem) -> Result<Trace, CliError> {
    let trace_err = |message: String| CliError::Trace {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.display().to_string(),
            source,
        },
        other => trace_err(format!("{other:?}")),
    })?;
    let expected = trace_header(prob);
    let header = reader
        .headers()
        .map_err(|e| trace_err(e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != expected.iter().map(String::as_str).collect::<Vec<_>>()
    {
        return Err(trace_err(format!(
            "header does not match the problem (expected {} columns)",
            expected.len()
        )));
    }
    let (n, m, p, q) = (prob.n(), prob.m(), prob.p(), prob.q());
    let mut trace = Trace::default();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| trace_err(e.to_string()))?;
        let field = |i: usize| -> Result<f64, CliError> {
            record
                .get(i)
                .ok_or_else(|| trace_err(format!("row {row_idx}: missing field {i}")))?
                .parse::<f64>()
                .map_err(|e| trace_err(format!("row {row_idx}, field {i}: {e}")))
        };
        let k: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| trace_err(format!("row {row_idx}: bad iteration index")))?;
        let norm_q = field(1)?;
        let norm_r = field(2)?;
        let mut at = 3;
        let mut take = |len: usize| -> Result<DVector<f64>, CliError> {
            let mut v = DVector::<f64>::zeros(len);
            for i in 0..len {
                v[i] = field(at + i)?;
            }
            at += len;
            Ok(v)
        };
        let x = take(n)?;
        let y = take(m)?;
        let lambda = take(q)?;
        let mu = take(p)?;
        let wall = record
            .get(at + 1)
            .and_then(|s| if s.is_empty() { None } else { s.parse().ok() })
            .unwrap_or(0.0);
        trace.iterates.push(Iterate {
            k,
            x,
            y,
            mu,
            lambda,
            q: DVector::zeros(0),
            r: DVector::zeros(0),
            norm_q,
            norm_r,
            sp: Some(SubproblemInfo {
                status: NlpStatus::Converged,
                iterations: 0,
                stat_norm: 0.0,
                feas_norm: 0.0,
                second_order_ok: true,
                dual_identity_residual: 0.0,
            }),
        });
        trace.wall_ms.push(wall);
    }
    Ok(trace)
}

/// A point file for `analyze --point`: dense vectors in declared order.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointFile {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
}

/// Loads `--point` input: inline JSON (starts with `{`) or a file path.
pub fn load_point(arg: &str) -> Result<PointFile, CliError> {
    let (text, path) = if arg.trim_start().starts_with('{') {
        (arg.to_string(), "<inline point>".to_string())
    } else {
        let p = Path::new(arg);
        (read_to_string(p)?, p.display().to_string())
    };
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path,
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Matrices for a standalone critical-penalty query:
/// `{"H": [[...]], "C": [[...]], "D": [[...]]}` (`C` may be empty or absent).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalRhoFile {
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    #[serde(default, rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
}

pub fn load_critical_rho_file(path: &Path) -> Result<CriticalRhoFile, CliError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Dense matrix from row-major nested vectors; `ncols` disambiguates the
/// zero-row case.
pub fn matrix_from_rows(rows: &[Vec<f64>], ncols_hint: usize) -> nalgebra::DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(ncols_hint);
    nalgebra::DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}
