//! Solver library for nonconvex, equality-constrained problems with linear
//! coupling, of the form
//!
//! ```text
//! minimize    f(x)
//! subject to  c(x) = 0,
//!             A x + B y = b,
//! ```
//!
//! together with an ADMM solver that alternates a (possibly nonconvex)
//! x-subproblem, a closed-form least-squares y-update, and a dual ascent
//! step, plus an analysis layer that turns the local convergence theory
//! (residual identities, Lyapunov decrease, regularity conditions, critical
//! penalty values) into executable diagnostics.
//!
//! Modules:
//! - [`expr`]: expression trees with exact symbolic first/second derivatives,
//! - [`model`]: problem containers and canonicalizers for block-structured
//!   and shared-budget forms, plus the inequality slack transform,
//! - [`nlpsolve`]: a Newton-KKT local solver for equality-constrained NLPs,
//! - [`admm`]: the alternating direction loop itself,
//! - [`analysis`]: KKT/LICQ/SOSC checks, critical penalty estimation,
//!   Lyapunov diagnostics and a multistart reference-solution oracle.

pub mod admm;
pub mod analysis;
pub mod expr;
mod linalg;
pub mod model;
pub mod nlpsolve;
