//! The alternating direction loop.
//!
//! Each iteration solves the x-subproblem
//!
//! ```text
//! min_x  f(x) + lambda^T (A x + B y^k - b) + (rho/2) ||A x + B y^k - b||^2
//! s.t.   c(x) = 0
//! ```
//!
//! to a local KKT point, then takes the closed-form y-update (the
//! least-squares solution of `min_y ||A x + B y - b||`, computed via QR of
//! `B`, never the normal equations), the dual ascent step
//! `lambda <- lambda + rho q`, and the residuals
//!
//! ```text
//! q = A x + B y - b,          r = rho A^T B (y - y_prev),
//! ```
//!
//! terminating when `||q|| <= eta_p` and `||r|| <= eta_d`. The y-update
//! keeps `B^T lambda = 0` for every iterate given `B^T lambda^0 = 0`, and
//! `r` equals the x-gradient of the full problem's Lagrangian at the new
//! iterate up to the inner solver's stationarity tolerance; both identities
//! are recomputed every iteration as diagnostics.
//!
//! Problems carrying block metadata have separable subproblems; they are
//! solved per block and concatenated. `parallel_blocks` only toggles
//! threading across blocks, so traces are identical either way.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprFunction, Vars};
use crate::linalg::{self, ColPivQr};
use crate::model::{validate, ModelError, Problem};
use crate::nlpsolve::{solve_eq_nlp, NlpInstance, NlpSolution, NlpStatus, Oracle};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Error)]
pub enum AdmmError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("iteration {iteration} failed: {reason}")]
    Step { iteration: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),
}

/// Where the inner solver is seeded from.
#[derive(Debug, Clone)]
pub enum WarmStart {
    /// Seed iteration k+1 at x^k; the first solve starts at `x0` (zeros when
    /// absent). This is the operational reading of the nearest-minimizer
    /// assumption: a solver started near the previous solution stays in the
    /// same basin.
    PreviousIterate,
    /// Seed every solve at the given point.
    Fixed(DVector<f64>),
}

#[derive(Debug, Clone)]
pub struct AdmmConfig {
    pub rho: f64,
    pub eta_p: f64,
    pub eta_d: f64,
    pub max_iter: usize,
    pub y0: DVector<f64>,
    pub lambda0: DVector<f64>,
    pub warm_start: WarmStart,
    /// First-iteration subproblem seed under `PreviousIterate`; zeros when
    /// absent. Ignored by `Fixed`.
    pub x0: Option<DVector<f64>>,
    pub parallel_blocks: bool,
    /// Iteration cap for each inner subproblem solve.
    pub inner_max_iter: usize,
}

impl AdmmConfig {
    pub fn new(rho: f64, y0: DVector<f64>, lambda0: DVector<f64>) -> Self {
        AdmmConfig {
            rho,
            eta_p: 1e-8,
            eta_d: 1e-8,
            max_iter: 1000,
            y0,
            lambda0,
            warm_start: WarmStart::PreviousIterate,
            x0: None,
            parallel_blocks: false,
            inner_max_iter: crate::nlpsolve::DEFAULT_MAX_ITER,
        }
    }

    /// Inner KKT tolerance: two orders tighter than the outer tolerances,
    /// quantifying the "exact subproblem solve" the theory assumes.
    pub fn inner_tol(&self) -> f64 {
        self.eta_p.min(self.eta_d) / 100.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SubproblemInfo {
    pub status: NlpStatus,
    pub iterations: usize,
    pub stat_norm: f64,
    pub feas_norm: f64,
    pub second_order_ok: bool,
    /// `||grad f + grad c mu + A^T lambda - r||` at this iterate; bounded by
    /// the inner stationarity tolerance when the subproblem solve succeeded.
    pub dual_identity_residual: f64,
}

/// One ADMM state. `k = 0` is the initial state (no subproblem solved yet,
/// residual norms are NaN); traces start at `k = 1`.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub k: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub mu: DVector<f64>,
    pub lambda: DVector<f64>,
    pub q: DVector<f64>,
    pub r: DVector<f64>,
    pub norm_q: f64,
    pub norm_r: f64,
    pub sp: Option<SubproblemInfo>,
}

/// Ordered iterate history with per-iteration wall time (milliseconds).
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub iterates: Vec<Iterate>,
    pub wall_ms: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    fn push(&mut self, it: Iterate, wall_ms: f64) {
        debug_assert_eq!(it.k, self.iterates.len() + 1, "k must increase from 1");
        self.iterates.push(it);
        self.wall_ms.push(wall_ms);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveStatus {
    Solved,
    IterLimit,
    Failed { iteration: usize, reason: String },
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    // a failed first iteration leaves no residuals; keep the report JSON
    // round-trippable by writing non-finite norms as null
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub status: SolveStatus,
    pub iterations: usize,
    pub rho: f64,
    pub eta_p: f64,
    pub eta_d: f64,
    #[serde(with = "nan_as_null")]
    pub norm_q: f64,
    #[serde(with = "nan_as_null")]
    pub norm_r: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Distance by which the supplied lambda^0 was moved to satisfy
    /// `B^T lambda^0 = 0`.
    pub lambda0_projection_distance: f64,
    pub total_wall_ms: f64,
}

// ---- subproblem assembly ----------------------------------------------------

/// Objective of the x-subproblem:
/// `f(x) + lam^T (A x + w) + (rho/2) ||A x + w||^2` with `w = B y^k - b`.
struct SpObjective {
    f: Arc<ExprFunction>,
    a: DMatrix<f64>,
    lam: DVector<f64>,
    w: DVector<f64>,
    ata: DMatrix<f64>,
    at_lam: DVector<f64>,
    rho: f64,
}

impl SpObjective {
    fn new(
        f: Arc<ExprFunction>,
        a: DMatrix<f64>,
        lam: DVector<f64>,
        w: DVector<f64>,
        rho: f64,
    ) -> Self {
        let ata = a.tr_mul(&a);
        let at_lam = a.tr_mul(&lam);
        SpObjective {
            f,
            a,
            lam,
            w,
            ata,
            at_lam,
            rho,
        }
    }
}

impl Oracle for SpObjective {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        let s = &self.a * z + &self.w;
        self.f.eval(z) + self.lam.dot(&s) + 0.5 * self.rho * s.norm_squared()
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let s = &self.a * z + &self.w;
        self.f.gradient(z) + &self.at_lam + self.a.tr_mul(&s) * self.rho
    }

    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        self.f.hessian(z) + &self.ata * self.rho
    }
}

/// Builds the x-subproblem for the current `(y^k, lambda^k, rho)`. The
/// returned instance starts at zeros with no multiplier guess; callers
/// override `z0`/`mu0` for warm starts.
pub fn assemble_subproblem(
    prob: &Problem,
    y_k: &DVector<f64>,
    lambda_k: &DVector<f64>,
    rho: f64,
) -> Result<NlpInstance, AdmmError> {
    if y_k.len() != prob.m() || lambda_k.len() != prob.q() {
        return Err(AdmmError::Dimension(format!(
            "y has {} entries (expected {}), lambda has {} (expected {})",
            y_k.len(),
            prob.m(),
            lambda_k.len(),
            prob.q()
        )));
    }
    let compiled = prob.compile()?;
    let w = &prob.b_mat * y_k - &prob.b_vec;
    let objective = SpObjective::new(
        compiled.objective.clone(),
        prob.a.clone(),
        lambda_k.clone(),
        w,
        rho,
    );
    Ok(NlpInstance {
        objective: Arc::new(objective),
        constraints: compiled
            .constraints
            .iter()
            .map(|c| c.clone() as Arc<dyn Oracle>)
            .collect(),
        z0: DVector::zeros(prob.n()),
        mu0: None,
    })
}

// ---- the four update formulas -----------------------------------------------

fn y_update_with(
    b_qr: &ColPivQr,
    prob: &Problem,
    x_next: &DVector<f64>,
) -> Result<DVector<f64>, AdmmError> {
    let rhs = &prob.b_vec - &prob.a * x_next;
    b_qr.solve_least_squares(&rhs)
        .ok_or_else(|| AdmmError::InvalidProblem("B is rank deficient".to_string()))
}

/// Least-squares y-update: the unique minimizer of `||A x + B y - b||` over
/// `y`, via QR of `B`.
pub fn y_update(prob: &Problem, x_next: &DVector<f64>) -> Result<DVector<f64>, AdmmError> {
    if x_next.len() != prob.n() {
        return Err(AdmmError::Dimension(format!(
            "x has {} entries, expected {}",
            x_next.len(),
            prob.n()
        )));
    }
    let qr = linalg::col_piv_qr(&prob.b_mat);
    y_update_with(&qr, prob, x_next)
}

/// Dual ascent: `lambda^{k+1} = lambda^k + rho q^{k+1}`.
pub fn lambda_update(lambda_k: &DVector<f64>, rho: f64, q_next: &DVector<f64>) -> DVector<f64> {
    lambda_k + q_next * rho
}

/// Primal and dual residuals:
/// `q = A x + B y - b` and `r = rho A^T B (y - y_prev)`.
pub fn residuals(
    prob: &Problem,
    x_next: &DVector<f64>,
    y_next: &DVector<f64>,
    y_prev: &DVector<f64>,
    rho: f64,
) -> (DVector<f64>, DVector<f64>) {
    let q = &prob.a * x_next + &prob.b_mat * y_next - &prob.b_vec;
    let r = prob.a.tr_mul(&(&prob.b_mat * (y_next - y_prev))) * rho;
    (q, r)
}

// ---- solver -------------------------------------------------------------------

struct BlockPlan {
    f: Arc<ExprFunction>,
    cons: Vec<Arc<ExprFunction>>,
    a: DMatrix<f64>,
    x_range: std::ops::Range<usize>,
    con_range: std::ops::Range<usize>,
    row_range: std::ops::Range<usize>,
}

struct Solver<'a> {
    prob: &'a Problem,
    config: &'a AdmmConfig,
    objective: Arc<ExprFunction>,
    constraints: Vec<Arc<ExprFunction>>,
    b_qr: ColPivQr,
    lambda0: DVector<f64>,
    lambda0_projection_distance: f64,
    block_plans: Option<Vec<BlockPlan>>,
}

impl<'a> Solver<'a> {
    fn new(prob: &'a Problem, config: &'a AdmmConfig) -> Result<Self, AdmmError> {
        let report = validate(prob);
        if !report.is_ok() {
            return Err(AdmmError::InvalidProblem(report.failures.join("; ")));
        }
        if config.rho.is_nan() || config.rho <= 0.0 {
            return Err(AdmmError::InvalidConfig(format!(
                "rho must be positive, got {}",
                config.rho
            )));
        }
        let eta_ok = config.eta_p > 0.0 && config.eta_d > 0.0;
        if !eta_ok {
            return Err(AdmmError::InvalidConfig(
                "tolerances must be positive".to_string(),
            ));
        }
        if config.max_iter == 0 {
            return Err(AdmmError::InvalidConfig(
                "max_iter must be >= 1".to_string(),
            ));
        }
        if config.y0.len() != prob.m() {
            return Err(AdmmError::Dimension(format!(
                "y0 has {} entries, expected {}",
                config.y0.len(),
                prob.m()
            )));
        }
        if config.lambda0.len() != prob.q() {
            return Err(AdmmError::Dimension(format!(
                "lambda0 has {} entries, expected {}",
                config.lambda0.len(),
                prob.q()
            )));
        }
        if let Some(x0) = &config.x0 {
            if x0.len() != prob.n() {
                return Err(AdmmError::Dimension(format!(
                    "x0 has {} entries, expected {}",
                    x0.len(),
                    prob.n()
                )));
            }
        }
        if let WarmStart::Fixed(z) = &config.warm_start {
            if z.len() != prob.n() {
                return Err(AdmmError::Dimension(format!(
                    "fixed warm start has {} entries, expected {}",
                    z.len(),
                    prob.n()
                )));
            }
        }

        let compiled = prob.compile()?;
        let b_qr = linalg::col_piv_qr(&prob.b_mat);

        // project lambda0 onto null(B^T) and record how far it moved
        let range_coeff = b_qr
            .solve_least_squares(&config.lambda0)
            .ok_or_else(|| AdmmError::InvalidProblem("B is rank deficient".to_string()))?;
        let lambda0 = &config.lambda0 - &prob.b_mat * range_coeff;
        let lambda0_projection_distance = (&config.lambda0 - &lambda0).norm();

        let block_plans = Self::block_plans(prob)?;

        Ok(Solver {
            prob,
            config,
            objective: compiled.objective,
            constraints: compiled.constraints,
            b_qr,
            lambda0,
            lambda0_projection_distance,
            block_plans,
        })
    }

    /// Builds per-block solve plans when the metadata proves the subproblem
    /// separable: block rows must only touch block columns, and rows outside
    /// every block must not touch x at all.
    fn block_plans(prob: &Problem) -> Result<Option<Vec<BlockPlan>>, AdmmError> {
        let parts = match &prob.blocks {
            Some(parts) if !parts.is_empty() => parts,
            _ => return Ok(None),
        };
        let mut row_owner = vec![usize::MAX; prob.q()];
        for (i, part) in parts.iter().enumerate() {
            for r in part.row_range.clone() {
                row_owner[r] = i;
            }
        }
        for (r, owner) in row_owner.iter().enumerate() {
            for c in 0..prob.n() {
                if prob.a[(r, c)] != 0.0
                    && (*owner == usize::MAX || !parts[*owner].x_range.contains(&c))
                {
                    return Ok(None); // coupling crosses blocks; solve jointly
                }
            }
        }
        let mut plans = Vec::with_capacity(parts.len());
        for part in parts {
            let names: Vec<String> = prob.x_vars.names()[part.x_range.clone()].to_vec();
            let vars = Arc::new(Vars::new(names)?);
            let f = Arc::new(ExprFunction::new(part.objective.clone(), vars.clone())?);
            let cons = part
                .constraints
                .iter()
                .map(|c| Ok(Arc::new(ExprFunction::new(c.clone(), vars.clone())?)))
                .collect::<Result<Vec<_>, AdmmError>>()?;
            let a = prob
                .a
                .view(
                    (part.row_range.start, part.x_range.start),
                    (part.row_range.len(), part.x_range.len()),
                )
                .into_owned();
            plans.push(BlockPlan {
                f,
                cons,
                a,
                x_range: part.x_range.clone(),
                con_range: part.con_range.clone(),
                row_range: part.row_range.clone(),
            });
        }
        Ok(Some(plans))
    }

    fn seed(&self, prev: &Iterate) -> DVector<f64> {
        match &self.config.warm_start {
            WarmStart::Fixed(z) => z.clone(),
            WarmStart::PreviousIterate => {
                if prev.k == 0 {
                    self.config
                        .x0
                        .clone()
                        .unwrap_or_else(|| DVector::zeros(self.prob.n()))
                } else {
                    prev.x.clone()
                }
            }
        }
    }

    fn solve_subproblem(
        &self,
        prev: &Iterate,
    ) -> Result<(DVector<f64>, DVector<f64>, NlpSolution), SolveStatus> {
        let k_next = prev.k + 1;
        let tol = self.config.inner_tol();
        let seed = self.seed(prev);
        let w = &self.prob.b_mat * &prev.y - &self.prob.b_vec;

        let solve_one = |f: Arc<ExprFunction>,
                         cons: &[Arc<ExprFunction>],
                         a: DMatrix<f64>,
                         lam: DVector<f64>,
                         w: DVector<f64>,
                         z0: DVector<f64>,
                         mu0: DVector<f64>| {
            let inst = NlpInstance {
                objective: Arc::new(SpObjective::new(f, a, lam, w, self.config.rho)),
                constraints: cons.iter().map(|c| c.clone() as Arc<dyn Oracle>).collect(),
                z0,
                mu0: Some(mu0),
            };
            solve_eq_nlp(&inst, tol, tol, self.config.inner_max_iter)
        };

        let fail = |status: NlpStatus, sol: &NlpSolution| SolveStatus::Failed {
            iteration: k_next,
            reason: format!(
                "subproblem returned {:?} (stationarity {:.3e}, feasibility {:.3e})",
                status, sol.stat_norm, sol.feas_norm
            ),
        };

        match &self.block_plans {
            Some(plans) => {
                let sub_solve = |plan: &BlockPlan| {
                    solve_one(
                        plan.f.clone(),
                        &plan.cons,
                        plan.a.clone(),
                        prev.lambda
                            .rows(plan.row_range.start, plan.row_range.len())
                            .into_owned(),
                        w.rows(plan.row_range.start, plan.row_range.len())
                            .into_owned(),
                        seed.rows(plan.x_range.start, plan.x_range.len())
                            .into_owned(),
                        prev.mu
                            .rows(plan.con_range.start, plan.con_range.len())
                            .into_owned(),
                    )
                };
                let sols: Vec<NlpSolution> = if self.config.parallel_blocks {
                    plans.par_iter().map(sub_solve).collect()
                } else {
                    plans.iter().map(sub_solve).collect()
                };
                let mut x = DVector::<f64>::zeros(self.prob.n());
                let mut mu = DVector::<f64>::zeros(self.prob.p());
                let mut agg = NlpSolution {
                    z: DVector::zeros(0),
                    mu: DVector::zeros(0),
                    stat_norm: 0.0,
                    feas_norm: 0.0,
                    iterations: 0,
                    status: NlpStatus::Converged,
                    second_order_ok: true,
                    min_projected_eig: f64::INFINITY,
                };
                for (plan, sol) in plans.iter().zip(&sols) {
                    if sol.status != NlpStatus::Converged {
                        return Err(fail(sol.status, sol));
                    }
                    x.rows_mut(plan.x_range.start, plan.x_range.len())
                        .copy_from(&sol.z);
                    mu.rows_mut(plan.con_range.start, plan.con_range.len())
                        .copy_from(&sol.mu);
                    agg.stat_norm = agg.stat_norm.hypot(sol.stat_norm);
                    agg.feas_norm = agg.feas_norm.hypot(sol.feas_norm);
                    agg.iterations = agg.iterations.max(sol.iterations);
                    agg.second_order_ok &= sol.second_order_ok;
                    agg.min_projected_eig = agg.min_projected_eig.min(sol.min_projected_eig);
                }
                Ok((x, mu, agg))
            }
            None => {
                let sol = solve_one(
                    self.objective.clone(),
                    &self.constraints,
                    self.prob.a.clone(),
                    prev.lambda.clone(),
                    w,
                    seed,
                    prev.mu.clone(),
                );
                if sol.status != NlpStatus::Converged {
                    return Err(fail(sol.status, &sol));
                }
                let x = sol.z.clone();
                let mu = sol.mu.clone();
                Ok((x, mu, sol))
            }
        }
    }

    fn step(&self, prev: &Iterate) -> Result<Iterate, SolveStatus> {
        let k_next = prev.k + 1;
        let (x, mu, sol) = self.solve_subproblem(prev)?;

        let y = y_update_with(&self.b_qr, self.prob, &x).map_err(|e| SolveStatus::Failed {
            iteration: k_next,
            reason: e.to_string(),
        })?;
        let (q, r) = residuals(self.prob, &x, &y, &prev.y, self.config.rho);
        let lambda = lambda_update(&prev.lambda, self.config.rho, &q);

        // dual-residual identity: grad f + grad c mu + A^T lambda - r = 0
        // up to the inner stationarity tolerance
        let mut lagr_grad = self.objective.gradient(&x);
        for (j, c) in self.constraints.iter().enumerate() {
            lagr_grad += c.gradient(&x) * mu[j];
        }
        lagr_grad += self.prob.a.tr_mul(&lambda);
        let dual_identity_residual = (&lagr_grad - &r).norm();

        let iterate_norm = x.norm().max(y.norm()).max(lambda.norm());
        if iterate_norm > 1e8 {
            return Err(SolveStatus::Failed {
                iteration: k_next,
                reason: format!("iterates diverged (norm {iterate_norm:.3e})"),
            });
        }

        let norm_q = q.norm();
        let norm_r = r.norm();
        Ok(Iterate {
            k: k_next,
            x,
            y,
            mu,
            lambda,
            q,
            r,
            norm_q,
            norm_r,
            sp: Some(SubproblemInfo {
                status: sol.status,
                iterations: sol.iterations,
                stat_norm: sol.stat_norm,
                feas_norm: sol.feas_norm,
                second_order_ok: sol.second_order_ok,
                dual_identity_residual,
            }),
        })
    }

    fn initial(&self) -> Iterate {
        let x = match &self.config.warm_start {
            WarmStart::Fixed(z) => z.clone(),
            WarmStart::PreviousIterate => self
                .config
                .x0
                .clone()
                .unwrap_or_else(|| DVector::zeros(self.prob.n())),
        };
        Iterate {
            k: 0,
            x,
            y: self.config.y0.clone(),
            mu: DVector::zeros(self.prob.p()),
            lambda: self.lambda0.clone(),
            q: DVector::zeros(self.prob.q()),
            r: DVector::zeros(self.prob.n()),
            norm_q: f64::NAN,
            norm_r: f64::NAN,
            sp: None,
        }
    }
}

/// The initial (k = 0) state: the configured `y^0`, the projected
/// `lambda^0`, and the warm-start seed as `x`.
pub fn initial_iterate(prob: &Problem, config: &AdmmConfig) -> Result<Iterate, AdmmError> {
    Ok(Solver::new(prob, config)?.initial())
}

/// One full iteration from a previous state: subproblem solve (warm-started
/// per the config), y-update, dual update, residuals.
pub fn step(prob: &Problem, config: &AdmmConfig, state: &Iterate) -> Result<Iterate, AdmmError> {
    let solver = Solver::new(prob, config)?;
    solver.step(state).map_err(|status| match status {
        SolveStatus::Failed { iteration, reason } => AdmmError::Step { iteration, reason },
        _ => unreachable!("step only fails with Failed"),
    })
}

/// Runs the loop to termination. Subproblem failures and divergence are
/// reported in the returned status with the trace up to that point;
/// `Err` is reserved for invalid problems and configs.
pub fn run(prob: &Problem, config: &AdmmConfig) -> Result<(SolveReport, Trace), AdmmError> {
    let solver = Solver::new(prob, config)?;
    let mut trace = Trace::default();
    let mut prev = solver.initial();
    let total_start = Instant::now();
    let mut status = SolveStatus::IterLimit;

    for _ in 0..config.max_iter {
        let t0 = Instant::now();
        match solver.step(&prev) {
            Ok(it) => {
                let wall = t0.elapsed().as_secs_f64() * 1e3;
                let done = it.norm_q <= config.eta_p && it.norm_r <= config.eta_d;
                trace.push(it.clone(), wall);
                prev = it;
                if done {
                    status = SolveStatus::Solved;
                    break;
                }
            }
            Err(fail) => {
                status = fail;
                break;
            }
        }
    }

    let last = trace.iterates.last();
    let report = SolveReport {
        schema_version: SCHEMA_VERSION,
        status,
        iterations: trace.len(),
        rho: config.rho,
        eta_p: config.eta_p,
        eta_d: config.eta_d,
        norm_q: last.map(|it| it.norm_q).unwrap_or(f64::NAN),
        norm_r: last.map(|it| it.norm_r).unwrap_or(f64::NAN),
        x: last
            .map(|it| it.x.iter().copied().collect())
            .unwrap_or_default(),
        y: last
            .map(|it| it.y.iter().copied().collect())
            .unwrap_or_default(),
        mu: last
            .map(|it| it.mu.iter().copied().collect())
            .unwrap_or_default(),
        lambda: last
            .map(|it| it.lambda.iter().copied().collect())
            .unwrap_or_default(),
        lambda0_projection_distance: solver.lambda0_projection_distance,
        total_wall_ms: total_start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((report, trace))
}
