//! Executable diagnostics for the convergence theory: KKT residuals, LICQ
//! and second-order checks, critical-penalty estimation, Lyapunov decrease
//! verification, convergence-rate estimation, and a multistart reference
//! oracle that locates KKT points of the full problem.
//!
//! The checks report; they do not prove. The decrease bound and rate bound
//! hold under hypotheses (iterates inside an unknown neighborhood, penalty
//! above an unknown threshold) that a run may or may not satisfy, so
//! violations are surfaced as data rather than hard failures.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::Trace;
use crate::expr::ExprError;
use crate::linalg;
use crate::model::{CompiledProblem, ModelError, Problem};

#[derive(Debug, Clone, Error)]
pub enum AnalysisError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(
        "hypothesis violated: H is not positive definite on the null space \
         of [C; D] (min projected eigenvalue {min_eig:.3e})"
    )]
    HypothesisViolated { min_eig: f64, direction: Vec<f64> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

mod dvector_as_vec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// The four KKT residual norms of the full problem: x-stationarity
/// `||grad f + grad c mu + A^T lambda||`, y-stationarity `||B^T lambda||`,
/// constraint violation `||c(x)||` and coupling violation `||Ax + By - b||`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity_x: f64,
    pub stationarity_y: f64,
    pub constraint_violation: f64,
    pub coupling_violation: f64,
}

impl KktReport {
    pub fn max_norm(&self) -> f64 {
        self.stationarity_x
            .max(self.stationarity_y)
            .max(self.constraint_violation)
            .max(self.coupling_violation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LicqReport {
    pub ok: bool,
    pub rank: usize,
    pub expected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoscReport {
    /// Positive definiteness of the Lagrangian Hessian on the null space of
    /// the full constraint Jacobian (threshold 1e-9).
    pub overall_ok: bool,
    pub min_projected_eig: f64,
    /// Subproblem second-order condition at the supplied penalty:
    /// `H_xx + rho A^T A` positive definite on null(grad c^T).
    pub subproblem_ok_at_rho: Option<bool>,
    pub subproblem_min_eig: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRho {
    /// Smallest penalty above which the projected matrix is positive
    /// definite; `+inf` when bracketing capped out (serialized as null).
    #[serde(with = "inf_as_null")]
    pub rho_star: f64,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub licq: LicqReport,
    pub sosc: SoscReport,
    /// Critical penalty for the overall-to-subproblem regularity argument,
    /// computed from `H = diag(H_xx, 0)`, `C = [grad c^T, 0]`, `D = [A B]`.
    /// Absent when the overall second-order check fails (the hypothesis of
    /// the estimate).
    pub critical_rho: Option<CriticalRho>,
}

const PD_THRESHOLD: f64 = 1e-9;

fn check_point_dims(
    prob: &Problem,
    x: &DVector<f64>,
    y: Option<&DVector<f64>>,
    mu: Option<&DVector<f64>>,
    lambda: Option<&DVector<f64>>,
) -> Result<(), AnalysisError> {
    if x.len() != prob.n() {
        return Err(AnalysisError::Dimension(format!(
            "x has {} entries, expected {}",
            x.len(),
            prob.n()
        )));
    }
    if let Some(y) = y {
        if y.len() != prob.m() {
            return Err(AnalysisError::Dimension(format!(
                "y has {} entries, expected {}",
                y.len(),
                prob.m()
            )));
        }
    }
    if let Some(mu) = mu {
        if mu.len() != prob.p() {
            return Err(AnalysisError::Dimension(format!(
                "mu has {} entries, expected {}",
                mu.len(),
                prob.p()
            )));
        }
    }
    if let Some(lambda) = lambda {
        if lambda.len() != prob.q() {
            return Err(AnalysisError::Dimension(format!(
                "lambda has {} entries, expected {}",
                lambda.len(),
                prob.q()
            )));
        }
    }
    Ok(())
}

fn constraint_jacobian(compiled: &CompiledProblem, x: &DVector<f64>) -> DMatrix<f64> {
    let p = compiled.constraints.len();
    let n = x.len();
    let mut j = DMatrix::<f64>::zeros(p, n);
    for (row, c) in compiled.constraints.iter().enumerate() {
        j.row_mut(row).copy_from(&c.gradient(x).transpose());
    }
    j
}

fn lagrangian_hessian_xx(
    compiled: &CompiledProblem,
    x: &DVector<f64>,
    mu: &DVector<f64>,
) -> DMatrix<f64> {
    let mut h = compiled.objective.hessian(x);
    for (j, c) in compiled.constraints.iter().enumerate() {
        h += c.hessian(x) * mu[j];
    }
    h
}

/// Jacobian of all equality constraints of the full problem at `x`:
/// `C = [grad c(x)^T, 0; A, B]`, shape `(p + q) x (n + m)`.
fn full_constraint_matrix(
    prob: &Problem,
    compiled: &CompiledProblem,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let (n, m, p, q) = (prob.n(), prob.m(), prob.p(), prob.q());
    let mut c = DMatrix::<f64>::zeros(p + q, n + m);
    c.view_mut((0, 0), (p, n))
        .copy_from(&constraint_jacobian(compiled, x));
    c.view_mut((p, 0), (q, n)).copy_from(&prob.a);
    c.view_mut((p, n), (q, m)).copy_from(&prob.b_mat);
    c
}

/// Orthonormal basis for the null space of `m` (columns), with rank decided
/// by column-pivoted QR at absolute tolerance `tol`.
pub fn nullspace_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    linalg::nullspace_basis(m, tol)
}

/// Evaluates the four KKT residual norms at `(x, y, mu, lambda)`.
pub fn check_kkt(
    prob: &Problem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    mu: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<KktReport, AnalysisError> {
    check_point_dims(prob, x, Some(y), Some(mu), Some(lambda))?;
    let compiled = prob.compile()?;
    Ok(check_kkt_compiled(prob, &compiled, x, y, mu, lambda))
}

fn check_kkt_compiled(
    prob: &Problem,
    compiled: &CompiledProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    mu: &DVector<f64>,
    lambda: &DVector<f64>,
) -> KktReport {
    let mut stat = compiled.objective.gradient(x);
    for (j, c) in compiled.constraints.iter().enumerate() {
        stat += c.gradient(x) * mu[j];
    }
    stat += prob.a.tr_mul(lambda);
    let cvals = DVector::from_iterator(prob.p(), compiled.constraints.iter().map(|c| c.eval(x)));
    KktReport {
        stationarity_x: stat.norm(),
        stationarity_y: prob.b_mat.tr_mul(lambda).norm(),
        constraint_violation: cvals.norm(),
        coupling_violation: (&prob.a * x + &prob.b_mat * y - &prob.b_vec).norm(),
    }
}

/// Linear independence constraint qualification at `x`: the rows of
/// `C = [grad c^T, 0; A, B]` must be independent (rank `p + q`).
pub fn check_licq(prob: &Problem, x: &DVector<f64>) -> Result<LicqReport, AnalysisError> {
    check_point_dims(prob, x, None, None, None)?;
    let compiled = prob.compile()?;
    let c = full_constraint_matrix(prob, &compiled, x);
    let tol = 1e-10 * c.norm();
    let rank = linalg::rank(&c, tol);
    let expected = prob.p() + prob.q();
    Ok(LicqReport {
        ok: rank == expected,
        rank,
        expected,
    })
}

/// Second-order sufficiency checks at `(x, mu)`: positive definiteness of
/// `diag(H_xx, 0)` on null(C), and (when `rho` is given) of
/// `H_xx + rho A^T A` on null(grad c^T).
pub fn check_sosc(
    prob: &Problem,
    x: &DVector<f64>,
    mu: &DVector<f64>,
    rho: Option<f64>,
) -> Result<SoscReport, AnalysisError> {
    check_point_dims(prob, x, None, Some(mu), None)?;
    let compiled = prob.compile()?;
    let (n, m) = (prob.n(), prob.m());
    let h_xx = lagrangian_hessian_xx(&compiled, x, mu);

    let c = full_constraint_matrix(prob, &compiled, x);
    let z = nullspace_basis(&c, 1e-10 * f64::max(1.0, c.norm()));
    let mut h_full = DMatrix::<f64>::zeros(n + m, n + m);
    h_full.view_mut((0, 0), (n, n)).copy_from(&h_xx);
    let min_projected_eig = if z.ncols() == 0 {
        f64::INFINITY
    } else {
        linalg::sym_eig_min(&linalg::project_sym(&h_full, &z))
    };
    let overall_ok = min_projected_eig > PD_THRESHOLD;

    let (subproblem_ok_at_rho, subproblem_min_eig) = match rho {
        None => (None, None),
        Some(rho) => {
            let jc = constraint_jacobian(&compiled, x);
            let zx = nullspace_basis(&jc, 1e-10 * f64::max(1.0, jc.norm()));
            if zx.ncols() == 0 {
                (Some(true), Some(f64::INFINITY))
            } else {
                let h_sp = &h_xx + prob.a.tr_mul(&prob.a) * rho;
                let eig = linalg::sym_eig_min(&linalg::project_sym(&h_sp, &zx));
                (Some(eig > PD_THRESHOLD), Some(eig))
            }
        }
    };

    Ok(SoscReport {
        overall_ok,
        min_projected_eig,
        subproblem_ok_at_rho,
        subproblem_min_eig,
    })
}

/// Smallest `rho*` such that `H + rho D^T D` is positive definite on
/// null(C) for every `rho > rho*`.
///
/// Requires `H` positive definite on null([C; D]); violated hypotheses are
/// reported with the offending direction. The bracket expands geometrically
/// from 1 by factors of 10, capped at 1e12 (then `+inf` with `capped`), and
/// bisection runs to 1e-6 relative width, returning the certified
/// (positive-definite) end of the bracket.
pub fn critical_rho(
    h: &DMatrix<f64>,
    c_keep: &DMatrix<f64>,
    d_pen: &DMatrix<f64>,
) -> Result<CriticalRho, AnalysisError> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(AnalysisError::Dimension("H must be square".to_string()));
    }
    if c_keep.nrows() > 0 && c_keep.ncols() != n {
        return Err(AnalysisError::Dimension(format!(
            "C has {} columns, expected {n}",
            c_keep.ncols()
        )));
    }
    if d_pen.ncols() != n {
        return Err(AnalysisError::Dimension(format!(
            "D has {} columns, expected {n}",
            d_pen.ncols()
        )));
    }

    // hypothesis: H positive definite on null([C; D])
    let mut stacked = DMatrix::<f64>::zeros(c_keep.nrows() + d_pen.nrows(), n);
    stacked
        .view_mut((0, 0), (c_keep.nrows(), n))
        .copy_from(c_keep);
    stacked
        .view_mut((c_keep.nrows(), 0), (d_pen.nrows(), n))
        .copy_from(d_pen);
    let z0 = nullspace_basis(&stacked, 1e-10 * f64::max(1.0, stacked.norm()));
    if z0.ncols() > 0 {
        let projected = linalg::project_sym(h, &z0);
        let eigen = projected.symmetric_eigen();
        let (mut min_eig, mut min_idx) = (f64::INFINITY, 0);
        for (i, &ev) in eigen.eigenvalues.iter().enumerate() {
            if ev < min_eig {
                min_eig = ev;
                min_idx = i;
            }
        }
        if min_eig <= PD_THRESHOLD {
            let dir = &z0 * eigen.eigenvectors.column(min_idx);
            return Err(AnalysisError::HypothesisViolated {
                min_eig,
                direction: dir.iter().copied().collect(),
            });
        }
    }

    let z = nullspace_basis(c_keep, 1e-10 * f64::max(1.0, c_keep.norm()));
    if z.ncols() == 0 {
        // constraint null space is trivial; any penalty works
        return Ok(CriticalRho {
            rho_star: 0.0,
            capped: false,
        });
    }
    let dtd = d_pen.tr_mul(d_pen);
    let projected_min =
        |rho: f64| -> f64 { linalg::sym_eig_min(&linalg::project_sym(&(h + &dtd * rho), &z)) };

    // With the hypothesis verified, a nonnegative projected minimum at
    // rho = 0 already means every positive rho is definite: a zero
    // eigendirection would need D z = 0, contradicting the hypothesis.
    if projected_min(0.0) >= 0.0 {
        return Ok(CriticalRho {
            rho_star: 0.0,
            capped: false,
        });
    }

    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while projected_min(hi) <= 0.0 {
        lo = hi;
        hi *= 10.0;
        if hi > 1e12 {
            return Ok(CriticalRho {
                rho_star: f64::INFINITY,
                capped: true,
            });
        }
    }
    for _ in 0..2000 {
        if hi - lo <= 1e-6 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if projected_min(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CriticalRho {
        rho_star: hi,
        capped: false,
    })
}

/// Lyapunov value `(1/rho) ||lambda - lambda*||^2 + rho ||B (y - y*)||^2`.
pub fn lyapunov(
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    y_ref: &DVector<f64>,
    lambda_ref: &DVector<f64>,
    b_mat: &DMatrix<f64>,
    rho: f64,
) -> f64 {
    (lambda - lambda_ref).norm_squared() / rho + rho * (b_mat * (y - y_ref)).norm_squared()
}

/// The scaled norm `(rho ||B y||^2 + (1/rho) ||lambda||^2)^(1/2)` in which
/// the convergence theory measures distance.
pub fn rho_norm(y: &DVector<f64>, lambda: &DVector<f64>, b_mat: &DMatrix<f64>, rho: f64) -> f64 {
    (rho * (b_mat * y).norm_squared() + lambda.norm_squared() / rho).sqrt()
}

/// Per-iteration Lyapunov values and decrease-bound slacks along a trace.
/// `slack[i]` pairs iterates `ks[i]` and `ks[i+1]`:
/// `V^k - V^{k+1} - rho ||B (y^k - y^{k+1})||^2 - (rho/2) ||q^{k+1}||^2`,
/// which the local theory asserts is nonnegative near a regular solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSeries {
    pub ks: Vec<usize>,
    pub v: Vec<f64>,
    pub rho_dist: Vec<f64>,
    pub slack: Vec<f64>,
    /// First iterate index from which every later slack is at least
    /// `-1e-9 * max(1, V^k)` — the empirical neighborhood-entry index.
    pub entry_index: Option<usize>,
}

pub fn verify_decrease_bound(
    trace: &Trace,
    y_ref: &DVector<f64>,
    lambda_ref: &DVector<f64>,
    b_mat: &DMatrix<f64>,
    rho: f64,
) -> LyapunovSeries {
    let iterates = &trace.iterates;
    let ks: Vec<usize> = iterates.iter().map(|it| it.k).collect();
    let v: Vec<f64> = iterates
        .iter()
        .map(|it| lyapunov(&it.y, &it.lambda, y_ref, lambda_ref, b_mat, rho))
        .collect();
    let rho_dist: Vec<f64> = iterates
        .iter()
        .map(|it| rho_norm(&(&it.y - y_ref), &(&it.lambda - lambda_ref), b_mat, rho))
        .collect();
    let slack: Vec<f64> = iterates
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let coupling = rho * (b_mat * (&w[0].y - &w[1].y)).norm_squared();
            v[i] - v[i + 1] - coupling - 0.5 * rho * w[1].norm_q * w[1].norm_q
        })
        .collect();

    // scan backwards for the longest suffix of acceptable slacks
    let mut entry_index = None;
    for i in (0..slack.len()).rev() {
        if slack[i] >= -1e-9 * f64::max(1.0, v[i + 1]) {
            entry_index = Some(ks[i + 1]);
        } else {
            break;
        }
    }
    LyapunovSeries {
        ks,
        v,
        rho_dist,
        slack,
        entry_index,
    }
}

/// Distances to the reference in the scaled norm and their successive
/// ratios `d^{k+1} / d^k`. The ratio series terminates at the first
/// iterate with `d^k < 1e-14` (finite convergence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub dist: Vec<f64>,
    pub ratios: Vec<f64>,
}

pub fn convergence_rate(
    trace: &Trace,
    y_ref: &DVector<f64>,
    lambda_ref: &DVector<f64>,
    b_mat: &DMatrix<f64>,
    rho: f64,
) -> RateSeries {
    let dist: Vec<f64> = trace
        .iterates
        .iter()
        .map(|it| rho_norm(&(&it.y - y_ref), &(&it.lambda - lambda_ref), b_mat, rho))
        .collect();
    let mut ratios = Vec::new();
    for i in 0..dist.len().saturating_sub(1) {
        if dist[i] < 1e-14 {
            break;
        }
        ratios.push(dist[i + 1] / dist[i]);
    }
    RateSeries { dist, ratios }
}

/// A KKT point of the full problem located by the multistart oracle, with
/// its residuals and regularity classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferencePoint {
    #[serde(with = "dvector_as_vec")]
    pub x: DVector<f64>,
    #[serde(with = "dvector_as_vec")]
    pub y: DVector<f64>,
    #[serde(with = "dvector_as_vec")]
    pub mu: DVector<f64>,
    #[serde(with = "dvector_as_vec")]
    pub lambda: DVector<f64>,
    pub objective: f64,
    pub kkt: KktReport,
    pub licq: LicqReport,
    pub sosc: SoscReport,
}

/// Multistart Newton on the full KKT system from seeded uniform starts in
/// `[-5, 5]^(n+m)` (multipliers initialized by a least-squares stationarity
/// fit). Results are deduplicated at distance 1e-6 and sorted by objective
/// value; every returned point has KKT residuals at most 1e-10.
pub fn reference_solution(
    prob: &Problem,
    n_starts: usize,
    seed: u64,
) -> Result<Vec<ReferencePoint>, AnalysisError> {
    reference_solution_in_box(prob, n_starts, seed, 5.0)
}

pub fn reference_solution_in_box(
    prob: &Problem,
    n_starts: usize,
    seed: u64,
    box_half_width: f64,
) -> Result<Vec<ReferencePoint>, AnalysisError> {
    assert!(n_starts >= 1, "n_starts must be at least 1");
    let compiled = prob.compile()?;
    let (n, m, p, q) = (prob.n(), prob.m(), prob.p(), prob.q());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Vec<(DVector<f64>, f64)> = Vec::new();

    for _ in 0..n_starts {
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-box_half_width..box_half_width));
        let y0 = DVector::from_fn(m, |_, _| rng.gen_range(-box_half_width..box_half_width));
        if let Some(point) = kkt_newton(prob, &compiled, &x0, &y0) {
            let is_new = found
                .iter()
                .all(|(existing, _)| (existing - &point).norm() > 1e-6);
            if is_new {
                let x = point.rows(0, n).into_owned();
                let obj = compiled.objective.eval(&x);
                found.push((point, obj));
            }
        }
    }

    found.sort_by(|(pa, fa), (pb, fb)| {
        fa.total_cmp(fb).then_with(|| {
            for i in 0..pa.len() {
                let ord = pa[i].total_cmp(&pb[i]);
                if ord != std::cmp::Ordering::Equal {
                    return ord;
                }
            }
            std::cmp::Ordering::Equal
        })
    });

    let mut out = Vec::with_capacity(found.len());
    for (point, objective) in found {
        let x = point.rows(0, n).into_owned();
        let y = point.rows(n, m).into_owned();
        let mu = point.rows(n + m, p).into_owned();
        let lambda = point.rows(n + m + p, q).into_owned();
        let kkt = check_kkt_compiled(prob, &compiled, &x, &y, &mu, &lambda);
        if kkt.max_norm() > 1e-10 {
            continue;
        }
        let licq = check_licq(prob, &x)?;
        let sosc = check_sosc(prob, &x, &mu, None)?;
        out.push(ReferencePoint {
            x,
            y,
            mu,
            lambda,
            objective,
            kkt,
            licq,
            sosc,
        });
    }
    Ok(out)
}

/// Index and scaled-norm distance of the reference point nearest to
/// `(y, lambda)`.
pub fn nearest_reference(
    refs: &[ReferencePoint],
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    b_mat: &DMatrix<f64>,
    rho: f64,
) -> Option<(usize, f64)> {
    refs.iter()
        .enumerate()
        .map(|(i, r)| (i, rho_norm(&(y - &r.y), &(lambda - &r.lambda), b_mat, rho)))
        .min_by(|(_, a), (_, b)| a.total_cmp(b))
}

/// LICQ, second-order and critical-penalty report at `(x, mu)`.
pub fn regularity_report(
    prob: &Problem,
    x: &DVector<f64>,
    mu: &DVector<f64>,
    rho: Option<f64>,
) -> Result<RegularityReport, AnalysisError> {
    let licq = check_licq(prob, x)?;
    let sosc = check_sosc(prob, x, mu, rho)?;
    let critical = if sosc.overall_ok {
        let compiled = prob.compile()?;
        let (n, m) = (prob.n(), prob.m());
        let h_xx = lagrangian_hessian_xx(&compiled, x, mu);
        let mut h = DMatrix::<f64>::zeros(n + m, n + m);
        h.view_mut((0, 0), (n, n)).copy_from(&h_xx);
        let jc = constraint_jacobian(&compiled, x);
        let mut c_keep = DMatrix::<f64>::zeros(prob.p(), n + m);
        c_keep.view_mut((0, 0), (prob.p(), n)).copy_from(&jc);
        let mut d_pen = DMatrix::<f64>::zeros(prob.q(), n + m);
        d_pen.view_mut((0, 0), (prob.q(), n)).copy_from(&prob.a);
        d_pen.view_mut((0, n), (prob.q(), m)).copy_from(&prob.b_mat);
        Some(critical_rho(&h, &c_keep, &d_pen)?)
    } else {
        None
    };
    Ok(RegularityReport {
        licq,
        sosc,
        critical_rho: critical,
    })
}

// ---- full KKT Newton ---------------------------------------------------------

/// KKT residual of the full problem stacked as
/// `F = [grad f + grad c mu + A^T lambda; B^T lambda; c(x); A x + B y - b]`.
fn kkt_f(prob: &Problem, compiled: &CompiledProblem, z: &DVector<f64>) -> DVector<f64> {
    let (n, m, p, q) = (prob.n(), prob.m(), prob.p(), prob.q());
    let x = z.rows(0, n).into_owned();
    let y = z.rows(n, m).into_owned();
    let mu = z.rows(n + m, p).into_owned();
    let lambda = z.rows(n + m + p, q).into_owned();

    let mut stat = compiled.objective.gradient(&x);
    for (j, c) in compiled.constraints.iter().enumerate() {
        stat += c.gradient(&x) * mu[j];
    }
    stat += prob.a.tr_mul(&lambda);

    let mut f = DVector::<f64>::zeros(n + m + p + q);
    f.rows_mut(0, n).copy_from(&stat);
    f.rows_mut(n, m).copy_from(&prob.b_mat.tr_mul(&lambda));
    for (j, c) in compiled.constraints.iter().enumerate() {
        f[n + m + j] = c.eval(&x);
    }
    f.rows_mut(n + m + p, q)
        .copy_from(&(&prob.a * &x + &prob.b_mat * &y - &prob.b_vec));
    f
}

fn kkt_jacobian(prob: &Problem, compiled: &CompiledProblem, z: &DVector<f64>) -> DMatrix<f64> {
    let (n, m, p, q) = (prob.n(), prob.m(), prob.p(), prob.q());
    let x = z.rows(0, n).into_owned();
    let mu = z.rows(n + m, p).into_owned();
    let dim = n + m + p + q;
    let mut jf = DMatrix::<f64>::zeros(dim, dim);
    let h = lagrangian_hessian_xx(compiled, &x, &mu);
    let jc = constraint_jacobian(compiled, &x); // p x n
    jf.view_mut((0, 0), (n, n)).copy_from(&h);
    jf.view_mut((0, n + m), (n, p)).copy_from(&jc.transpose());
    jf.view_mut((0, n + m + p), (n, q))
        .copy_from(&prob.a.transpose());
    jf.view_mut((n, n + m + p), (m, q))
        .copy_from(&prob.b_mat.transpose());
    jf.view_mut((n + m, 0), (p, n)).copy_from(&jc);
    jf.view_mut((n + m + p, 0), (q, n)).copy_from(&prob.a);
    jf.view_mut((n + m + p, n), (q, m)).copy_from(&prob.b_mat);
    jf
}

/// Damped Newton on the full KKT system from one start; multipliers are
/// initialized by least squares on the stationarity rows. Returns the
/// stacked `(x, y, mu, lambda)` on success.
fn kkt_newton(
    prob: &Problem,
    compiled: &CompiledProblem,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
) -> Option<DVector<f64>> {
    let (n, m, p, q) = (prob.n(), prob.m(), prob.p(), prob.q());
    let dim = n + m + p + q;

    // least-squares multipliers: min ||g + [Jc^T A^T] w||^2 + ||B^T w_lam||^2
    let g = compiled.objective.gradient(x0);
    let jc = constraint_jacobian(compiled, x0);
    let mut mls = DMatrix::<f64>::zeros(n + m, p + q);
    mls.view_mut((0, 0), (n, p)).copy_from(&jc.transpose());
    mls.view_mut((0, p), (n, q)).copy_from(&prob.a.transpose());
    mls.view_mut((n, p), (m, q))
        .copy_from(&prob.b_mat.transpose());
    let mut rhs = DVector::<f64>::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&g));
    let w = mls
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(p + q));

    let mut z = DVector::<f64>::zeros(dim);
    z.rows_mut(0, n).copy_from(x0);
    z.rows_mut(n, m).copy_from(y0);
    z.rows_mut(n + m, p + q).copy_from(&w);

    let mut f = kkt_f(prob, compiled, &z);
    for _ in 0..300 {
        let fnorm = f.norm();
        if fnorm <= 1e-12 {
            return Some(z);
        }
        if z.norm() > 1e10 {
            return None;
        }
        let jf = kkt_jacobian(prob, compiled, &z);
        let mut dir = jf.clone().lu().solve(&(-&f));
        if dir.is_none() {
            // singular Jacobian: Levenberg step on the squared residual
            let jtj = jf.tr_mul(&jf);
            let jtf = jf.tr_mul(&f);
            let mut delta = 1e-8 * f64::max(1.0, jtj.norm());
            for _ in 0..20 {
                let mut reg = jtj.clone();
                for i in 0..dim {
                    reg[(i, i)] += delta;
                }
                if let Some(d) = reg.lu().solve(&(-&jtf)) {
                    dir = Some(d);
                    break;
                }
                delta *= 10.0;
            }
        }
        let dir = dir?;

        // backtracking on ||F||^2
        let merit = fnorm * fnorm;
        let mut alpha = 1.0_f64;
        let mut advanced = false;
        for _ in 0..50 {
            let z_t = &z + &dir * alpha;
            let f_t = kkt_f(prob, compiled, &z_t);
            if f_t.norm_squared() <= merit * (1.0 - 1e-4 * alpha) {
                z = z_t;
                f = f_t;
                advanced = true;
                break;
            }
            alpha *= 0.5;
        }
        if !advanced {
            return None;
        }
    }
    None
}
