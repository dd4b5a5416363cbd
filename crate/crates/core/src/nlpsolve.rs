//! Local solver for equality-constrained smooth NLPs:
//!
//! ```text
//! minimize f(z)    subject to  c(z) = 0,   z in R^d
//! ```
//!
//! Newton's method on the KKT system with inertia-correcting diagonal
//! regularization on the Hessian block and an Armijo backtracking line
//! search on the squared KKT residual. Being a local method, the solution
//! it lands on depends on the starting point; the alternating-direction
//! loop exploits exactly that by warm-starting each subproblem at the
//! previous iterate.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::expr::ExprFunction;
use crate::linalg;

/// Twice-differentiable scalar function oracle.
pub trait Oracle: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, z: &DVector<f64>) -> f64;
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64>;
}

impl Oracle for ExprFunction {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        self.eval(z)
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        self.gradient(z)
    }

    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        self.hessian(z)
    }
}

/// An equality-constrained instance: objective oracle, scalar constraint
/// oracles, a starting point and an optional multiplier guess.
pub struct NlpInstance {
    pub objective: Arc<dyn Oracle>,
    pub constraints: Vec<Arc<dyn Oracle>>,
    pub z0: DVector<f64>,
    pub mu0: Option<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NlpStatus {
    Converged,
    MaxIter,
    LinAlgFailure,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub z: DVector<f64>,
    pub mu: DVector<f64>,
    pub stat_norm: f64,
    pub feas_norm: f64,
    pub iterations: usize,
    pub status: NlpStatus,
    /// Second-order necessary check at the final point: smallest eigenvalue
    /// of the Lagrangian Hessian projected onto the constraint null space is
    /// at least `-1e-6`. A violation flags a likely saddle; it is reported,
    /// not treated as an error.
    pub second_order_ok: bool,
    pub min_projected_eig: f64,
}

/// Default stationarity/feasibility tolerance for standalone solves; the
/// alternating-direction loop overrides it with tolerances two orders
/// tighter than its own.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default iteration cap for one subproblem solve.
pub const DEFAULT_MAX_ITER: usize = 200;

const DIVERGE_NORM: f64 = 1e8;
const ARMIJO_C1: f64 = 1e-4;
const DELTA0: f64 = 1e-8;
const DELTA_MAX: f64 = 1e10;

/// KKT residual norms at `(z, mu)`: the stationarity norm
/// `||grad f + sum_j mu_j grad c_j||` and the feasibility norm `||c||`.
pub fn kkt_residual(inst: &NlpInstance, z: &DVector<f64>, mu: &DVector<f64>) -> (f64, f64) {
    let (stat, cvals) = residual_vectors(inst, z, mu);
    (stat.norm(), cvals.norm())
}

fn residual_vectors(
    inst: &NlpInstance,
    z: &DVector<f64>,
    mu: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let mut stat = inst.objective.gradient(z);
    let p = inst.constraints.len();
    let mut cvals = DVector::<f64>::zeros(p);
    for (j, con) in inst.constraints.iter().enumerate() {
        stat += con.gradient(z) * mu[j];
        cvals[j] = con.value(z);
    }
    (stat, cvals)
}

fn constraint_jacobian_t(inst: &NlpInstance, z: &DVector<f64>) -> DMatrix<f64> {
    // d x p matrix whose columns are the constraint gradients
    let d = inst.z0.len();
    let p = inst.constraints.len();
    let mut jt = DMatrix::<f64>::zeros(d, p);
    for (j, con) in inst.constraints.iter().enumerate() {
        jt.set_column(j, &con.gradient(z));
    }
    jt
}

fn lagrangian_hessian(inst: &NlpInstance, z: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let mut w = inst.objective.hessian(z);
    for (j, con) in inst.constraints.iter().enumerate() {
        w += con.hessian(z) * mu[j];
    }
    w
}

/// Least-squares multiplier estimate `argmin_mu ||grad f(z) + J(z)^T mu||`.
fn multiplier_estimate(inst: &NlpInstance, z: &DVector<f64>) -> DVector<f64> {
    let p = inst.constraints.len();
    if p == 0 {
        return DVector::zeros(0);
    }
    let jt = constraint_jacobian_t(inst, z);
    let g = inst.objective.gradient(z);
    let svd = jt.svd(true, true);
    svd.solve(&(-g), 1e-12)
        .unwrap_or_else(|_| DVector::zeros(p))
}

/// Solves the instance to the given stationarity/feasibility tolerances.
/// Deterministic: identical inputs produce identical outputs bit-for-bit.
pub fn solve_eq_nlp(
    inst: &NlpInstance,
    tol_stat: f64,
    tol_feas: f64,
    max_iter: usize,
) -> NlpSolution {
    assert!(
        tol_stat > 0.0 && tol_feas > 0.0,
        "tolerances must be positive"
    );
    let d = inst.z0.len();
    let p = inst.constraints.len();
    let mut z = inst.z0.clone();
    let mut mu = match &inst.mu0 {
        Some(m) => m.clone(),
        None => multiplier_estimate(inst, &z),
    };
    assert_eq!(mu.len(), p, "multiplier guess has wrong length");

    let mut status = NlpStatus::MaxIter;
    let mut iterations = 0;
    let (mut stat_vec, mut cvals) = residual_vectors(inst, &z, &mu);

    for it in 0..=max_iter {
        let stat = stat_vec.norm();
        let feas = cvals.norm();
        if stat <= tol_stat && feas <= tol_feas {
            status = NlpStatus::Converged;
            iterations = it;
            break;
        }
        if it == max_iter {
            status = NlpStatus::MaxIter;
            iterations = it;
            break;
        }
        if z.norm().max(mu.norm()) > DIVERGE_NORM {
            status = NlpStatus::Diverged;
            iterations = it;
            break;
        }

        let w = lagrangian_hessian(inst, &z, &mu);
        let jt = constraint_jacobian_t(inst, &z);
        let merit = stat * stat + feas * feas;

        // Direction with inertia correction: delta = 0 first, then doubling
        // from 1e-8 until the KKT matrix has d positive and p negative
        // eigenvalues, giving a descent direction for the residual merit.
        let mut delta = 0.0_f64;
        let mut stepped = false;
        loop {
            let mut kkt = DMatrix::<f64>::zeros(d + p, d + p);
            kkt.view_mut((0, 0), (d, d)).copy_from(&w);
            for i in 0..d {
                kkt[(i, i)] += delta;
            }
            if p > 0 {
                kkt.view_mut((0, d), (d, p)).copy_from(&jt);
                kkt.view_mut((d, 0), (p, d)).copy_from(&jt.transpose());
            }

            let (npos, nneg, nzero) = linalg::inertia(&kkt);
            let inertia_ok = npos == d && nneg == p && nzero == 0;

            if inertia_ok {
                let mut rhs = DVector::<f64>::zeros(d + p);
                rhs.rows_mut(0, d).copy_from(&(-&stat_vec));
                if p > 0 {
                    rhs.rows_mut(d, p).copy_from(&(-&cvals));
                }
                if let Some(dir) = kkt.clone().lu().solve(&rhs) {
                    let dz = dir.rows(0, d).into_owned();
                    let dmu = dir.rows(d, p).into_owned();
                    // exact directional derivative of the merit
                    let s_dot = &w * &dz + &jt * &dmu;
                    let c_dot = jt.tr_mul(&dz);
                    let dphi = 2.0 * (stat_vec.dot(&s_dot) + cvals.dot(&c_dot));
                    if dphi < 0.0 {
                        // backtracking line search
                        let mut alpha = 1.0_f64;
                        let mut found = false;
                        for _ in 0..60 {
                            let z_t = &z + &dz * alpha;
                            let mu_t = &mu + &dmu * alpha;
                            let (s_t, c_t) = residual_vectors(inst, &z_t, &mu_t);
                            let merit_t = s_t.norm_squared() + c_t.norm_squared();
                            if merit_t <= merit + ARMIJO_C1 * alpha * dphi {
                                z = z_t;
                                mu = mu_t;
                                stat_vec = s_t;
                                cvals = c_t;
                                found = true;
                                break;
                            }
                            alpha *= 0.5;
                        }
                        if found {
                            stepped = true;
                            break;
                        }
                    }
                }
            }

            // bump the regularization and retry
            delta = if delta == 0.0 { DELTA0 } else { 2.0 * delta };
            if delta > DELTA_MAX {
                break;
            }
        }

        if !stepped {
            status = NlpStatus::LinAlgFailure;
            iterations = it;
            break;
        }
        iterations = it + 1;
    }

    let stat_norm = stat_vec.norm();
    let feas_norm = cvals.norm();
    let (second_order_ok, min_projected_eig) = second_order_check(inst, &z, &mu);
    NlpSolution {
        z,
        mu,
        stat_norm,
        feas_norm,
        iterations,
        status,
        second_order_ok,
        min_projected_eig,
    }
}

fn second_order_check(inst: &NlpInstance, z: &DVector<f64>, mu: &DVector<f64>) -> (bool, f64) {
    let w = lagrangian_hessian(inst, z, mu);
    let jt = constraint_jacobian_t(inst, z);
    let j = jt.transpose();
    let tol = 1e-10 * f64::max(1.0, j.norm());
    let null = linalg::nullspace_basis(&j, tol);
    if null.ncols() == 0 {
        return (true, f64::INFINITY);
    }
    let min_eig = linalg::sym_eig_min(&linalg::project_sym(&w, &null));
    (min_eig >= -1e-6, min_eig)
}
