//! Dense linear algebra helpers: column-pivoted Householder QR with a full
//! orthogonal factor (used for rank decisions, null-space bases and
//! least-squares solves) and small symmetric-eigenvalue utilities.
//!
//! Everything here is for desk-scale dense matrices; no blocking, no
//! sparsity.

use nalgebra::{DMatrix, DVector};

/// Column-pivoted QR factorization `M P = Q R` with `Q` square orthogonal.
///
/// The pivot order makes the diagonal of `R` non-increasing in magnitude, so
/// counting diagonal entries above a tolerance gives a numerical rank.
pub struct ColPivQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub perm: Vec<usize>,
}

pub fn col_piv_qr(m: &DMatrix<f64>) -> ColPivQr {
    let (nrows, ncols) = m.shape();
    let mut r = m.clone();
    let mut q = DMatrix::<f64>::identity(nrows, nrows);
    let mut perm: Vec<usize> = (0..ncols).collect();
    let steps = nrows.min(ncols);

    for k in 0..steps {
        // greedy pivot: bring the column with largest remaining norm to front
        let mut best = k;
        let mut best_norm = 0.0;
        for j in k..ncols {
            let nj = r.view((k, j), (nrows - k, 1)).norm();
            if nj > best_norm {
                best_norm = nj;
                best = j;
            }
        }
        if best != k {
            r.swap_columns(k, best);
            perm.swap(k, best);
        }
        if best_norm == 0.0 {
            break;
        }

        // Householder reflector for column k
        let x0 = r[(k, k)];
        let alpha = -x0.signum() * best_norm;
        let mut v = DVector::<f64>::zeros(nrows - k);
        for i in k..nrows {
            v[i - k] = r[(i, k)];
        }
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }

        // R[k.., k..] <- (I - 2 v v^T / v^T v) R[k.., k..]
        for j in k..ncols {
            let mut dot = 0.0;
            for i in k..nrows {
                dot += v[i - k] * r[(i, j)];
            }
            let s = 2.0 * dot / vnorm2;
            for i in k..nrows {
                r[(i, j)] -= s * v[i - k];
            }
        }
        // Q <- Q (I - 2 v v^T / v^T v)
        for i in 0..nrows {
            let mut dot = 0.0;
            for l in k..nrows {
                dot += q[(i, l)] * v[l - k];
            }
            let s = 2.0 * dot / vnorm2;
            for l in k..nrows {
                q[(i, l)] -= s * v[l - k];
            }
        }
        // clean the annihilated entries
        r[(k, k)] = alpha;
        for i in (k + 1)..nrows {
            r[(i, k)] = 0.0;
        }
    }

    ColPivQr { q, r, perm }
}

impl ColPivQr {
    /// Numerical rank: diagonal entries of `R` with magnitude above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        let steps = self.r.nrows().min(self.r.ncols());
        (0..steps).filter(|&i| self.r[(i, i)].abs() > tol).count()
    }

    /// Least-squares solution of `min_x ||M x - rhs||` for the factored `M`.
    /// Requires full column rank.
    pub fn solve_least_squares(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.r.ncols();
        let qtb = self.q.tr_mul(rhs);
        // back-substitute R[0..n, 0..n] z = (Q^T rhs)[0..n]
        let mut z = DVector::<f64>::zeros(n);
        for i in (0..n).rev() {
            let rii = self.r[(i, i)];
            if rii == 0.0 {
                return None;
            }
            let mut s = qtb[i];
            for j in (i + 1)..n {
                s -= self.r[(i, j)] * z[j];
            }
            z[i] = s / rii;
        }
        // undo pivoting
        let mut x = DVector::<f64>::zeros(n);
        for (col, &orig) in self.perm.iter().enumerate() {
            x[orig] = z[col];
        }
        Some(x)
    }
}

/// Numerical row/column rank of `m` with absolute tolerance `tol`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    col_piv_qr(m).rank(tol)
}

/// Orthonormal basis for the null space of `m`, as matrix columns.
///
/// Computed from the full QR of `m^T`: the trailing columns of `Q` span the
/// orthogonal complement of the row space of `m`. `tol` is the absolute
/// threshold used for the rank decision.
pub fn nullspace_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let d = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::<f64>::identity(d, d);
    }
    let qr = col_piv_qr(&m.transpose());
    let r = qr.rank(tol);
    qr.q.columns(r, d - r).into_owned()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Smallest eigenvalue of a symmetric matrix; `+inf` for the empty matrix
/// (the projected-Hessian convention for an empty null space).
pub fn sym_eig_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Inertia (n_positive, n_negative, n_zero) of a symmetric matrix, with
/// eigenvalues within `1e-12 * max(1, max |lambda|)` of zero counted as zero.
pub fn inertia(m: &DMatrix<f64>) -> (usize, usize, usize) {
    let ev = sym_eigenvalues(m);
    let scale = ev.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut pos = 0;
    let mut neg = 0;
    let mut zero = 0;
    for v in ev {
        if v > tol {
            pos += 1;
        } else if v < -tol {
            neg += 1;
        } else {
            zero += 1;
        }
    }
    (pos, neg, zero)
}

/// Projected matrix `Z^T M Z`.
pub fn project_sym(m: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    z.tr_mul(&(m * z))
}
