//! Problem containers and canonicalizers.
//!
//! The canonical instance is
//!
//! ```text
//! minimize    f(x)            x in R^n, y in R^m
//! subject to  c(x) = 0        p constraints
//!             A x + B y = b   q coupling rows
//! ```
//!
//! Block-structured forms (per-block objectives coupled through shared `y`,
//! and shared-budget forms with `sum_i A_i x_i = b_tilde`) canonicalize into
//! this shape losslessly; the block layout is preserved as metadata so the
//! x-subproblem can be dispatched per block. Inequalities `h(x) <= 0` enter
//! through the squared-slack transform `h(x) + s^2 = 0`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::expr::{expr_from_value, Expr, ExprError, ExprFunction, Vars};
use crate::linalg;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("block {block}: B_i has {got} columns, expected {expected} (shared y dimension)")]
    MismatchedY {
        block: usize,
        got: usize,
        expected: usize,
    },
    #[error("block {block}: A_i has {got} rows, expected {expected} (budget row count)")]
    MismatchedBudget {
        block: usize,
        got: usize,
        expected: usize,
    },
    #[error("variable name collision: `{0}`")]
    NameCollision(String),
    #[error("{context} references undeclared variable `{name}`")]
    Undeclared { name: String, context: String },
    #[error("empty block list")]
    EmptyBlocks,
    #[error("problem file: {0}")]
    Schema(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Slices of the canonical problem owned by one block: which x columns,
/// which constraint components and which coupling rows it contributes.
/// Rows outside every block's `row_range` have zero A entries (they couple
/// only `y`), so the x-subproblem separates exactly across blocks.
#[derive(Debug, Clone)]
pub struct BlockPart {
    pub objective: Expr,
    pub constraints: Vec<Expr>,
    pub x_range: std::ops::Range<usize>,
    pub con_range: std::ops::Range<usize>,
    pub row_range: std::ops::Range<usize>,
}

/// Canonical problem instance. Fields are public; [`Problem::new`] checks
/// structural consistency, and [`validate`] reports on anything a hand-built
/// value may violate (including the column rank of `B`).
#[derive(Debug, Clone)]
pub struct Problem {
    pub x_vars: Arc<Vars>,
    pub y_vars: Arc<Vars>,
    pub objective: Expr,
    pub constraints: Vec<Expr>,
    pub a: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub b_vec: DVector<f64>,
    pub blocks: Option<Vec<BlockPart>>,
}

impl Problem {
    pub fn new(
        x_names: Vec<String>,
        y_names: Vec<String>,
        objective: Expr,
        constraints: Vec<Expr>,
        a: DMatrix<f64>,
        b_mat: DMatrix<f64>,
        b_vec: DVector<f64>,
    ) -> Result<Self, ModelError> {
        let prob = Problem {
            x_vars: Arc::new(Vars::new(x_names)?),
            y_vars: Arc::new(Vars::new(y_names)?),
            objective,
            constraints,
            a,
            b_mat,
            b_vec,
            blocks: None,
        };
        prob.check_structure()?;
        Ok(prob)
    }

    pub fn n(&self) -> usize {
        self.x_vars.len()
    }

    pub fn m(&self) -> usize {
        self.y_vars.len()
    }

    pub fn p(&self) -> usize {
        self.constraints.len()
    }

    pub fn q(&self) -> usize {
        self.b_vec.len()
    }

    fn check_structure(&self) -> Result<(), ModelError> {
        let (n, m, q) = (self.n(), self.m(), self.q());
        if self.a.shape() != (q, n) {
            return Err(ModelError::Dimension(format!(
                "A is {}x{}, expected {q}x{n}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        if self.b_mat.shape() != (q, m) {
            return Err(ModelError::Dimension(format!(
                "B is {}x{}, expected {q}x{m}",
                self.b_mat.nrows(),
                self.b_mat.ncols()
            )));
        }
        for name in self.objective.variables() {
            if !self.x_vars.contains(name) {
                return Err(ModelError::Undeclared {
                    name: name.to_string(),
                    context: "objective".to_string(),
                });
            }
        }
        for (j, c) in self.constraints.iter().enumerate() {
            for name in c.variables() {
                if !self.x_vars.contains(name) {
                    return Err(ModelError::Undeclared {
                        name: name.to_string(),
                        context: format!("constraint {j}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Objective and constraints with derivative trees cached, over `x_vars`.
    pub fn compile(&self) -> Result<CompiledProblem, ModelError> {
        let objective = Arc::new(ExprFunction::new(
            self.objective.clone(),
            self.x_vars.clone(),
        )?);
        let constraints = self
            .constraints
            .iter()
            .map(|c| Ok(Arc::new(ExprFunction::new(c.clone(), self.x_vars.clone())?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(CompiledProblem {
            objective,
            constraints,
        })
    }
}

#[derive(Clone)]
pub struct CompiledProblem {
    pub objective: Arc<ExprFunction>,
    pub constraints: Vec<Arc<ExprFunction>>,
}

/// One block of the coupled form: `f_i(x_i)` with `c_i(x_i) = 0` and
/// coupling rows `A_i x_i + B_i y = b_i` against the shared `y`.
#[derive(Debug, Clone)]
pub struct CoupledBlock {
    pub x_names: Vec<String>,
    pub objective: Expr,
    pub constraints: Vec<Expr>,
    pub a: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub b_vec: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct BlockProblem {
    pub y_names: Vec<String>,
    pub blocks: Vec<CoupledBlock>,
}

/// One block of the shared-budget form: `f_i(x_i)` with `c_i(x_i) = 0`,
/// contributing `A_i x_i` to the budget `sum_i A_i x_i = b_tilde`.
#[derive(Debug, Clone)]
pub struct BudgetBlock {
    pub x_names: Vec<String>,
    pub objective: Expr,
    pub constraints: Vec<Expr>,
    pub a: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SharedBudgetProblem {
    pub blocks: Vec<BudgetBlock>,
    pub budget: DVector<f64>,
}

/// Inequalities `h_j(x) <= 0` to be enforced via squared slacks.
#[derive(Debug, Clone, Default)]
pub struct InequalitySpec {
    pub constraints: Vec<Expr>,
}

/// Qualified per-block names plus the rename map applied to each block's
/// expressions.
type BlockRenames = (Vec<Vec<String>>, Vec<HashMap<String, String>>);

fn block_prefix_maps(block_names: &[Vec<String>]) -> Result<BlockRenames, ModelError> {
    let n_blocks = block_names.len();
    let mut renamed = Vec::with_capacity(n_blocks);
    let mut maps = Vec::with_capacity(n_blocks);
    for (i, names) in block_names.iter().enumerate() {
        let mut map = HashMap::new();
        let new_names: Vec<String> = if n_blocks == 1 {
            names.clone()
        } else {
            names
                .iter()
                .map(|n| {
                    let qualified = format!("b{i}.{n}");
                    map.insert(n.clone(), qualified.clone());
                    qualified
                })
                .collect()
        };
        renamed.push(new_names);
        maps.push(map);
    }
    Ok((renamed, maps))
}

/// Canonicalizes the coupled block form: `x` is the concatenation of the
/// block variables (qualified as `b{i}.<name>` when there is more than one
/// block), `A` is block diagonal over the `A_i`, `B` stacks the `B_i`
/// vertically and `b` concatenates the `b_i`.
pub fn canonicalize_block(bp: &BlockProblem) -> Result<Problem, ModelError> {
    if bp.blocks.is_empty() {
        return Err(ModelError::EmptyBlocks);
    }
    let m = bp.y_names.len();
    for (i, blk) in bp.blocks.iter().enumerate() {
        if blk.b_mat.ncols() != m {
            return Err(ModelError::MismatchedY {
                block: i,
                got: blk.b_mat.ncols(),
                expected: m,
            });
        }
        let qi = blk.b_vec.len();
        if blk.a.nrows() != qi || blk.b_mat.nrows() != qi {
            return Err(ModelError::Dimension(format!(
                "block {i}: A_i/B_i/b_i disagree on row count"
            )));
        }
        if blk.a.ncols() != blk.x_names.len() {
            return Err(ModelError::Dimension(format!(
                "block {i}: A_i has {} columns for {} variables",
                blk.a.ncols(),
                blk.x_names.len()
            )));
        }
    }

    let (renamed, maps) = block_prefix_maps(
        &bp.blocks
            .iter()
            .map(|b| b.x_names.clone())
            .collect::<Vec<_>>(),
    )?;

    let n_total: usize = bp.blocks.iter().map(|b| b.x_names.len()).sum();
    let q_total: usize = bp.blocks.iter().map(|b| b.b_vec.len()).sum();
    let mut a = DMatrix::<f64>::zeros(q_total, n_total);
    let mut b_mat = DMatrix::<f64>::zeros(q_total, m);
    let mut b_vec = DVector::<f64>::zeros(q_total);
    let mut x_names = Vec::with_capacity(n_total);
    let mut constraints = Vec::new();
    let mut parts = Vec::with_capacity(bp.blocks.len());
    let mut objective: Option<Expr> = None;

    let (mut col, mut row, mut con) = (0usize, 0usize, 0usize);
    for (i, blk) in bp.blocks.iter().enumerate() {
        let (ni, qi) = (blk.x_names.len(), blk.b_vec.len());
        let f_i = blk.objective.rename_vars(&maps[i]);
        let c_i: Vec<Expr> = blk
            .constraints
            .iter()
            .map(|c| c.rename_vars(&maps[i]))
            .collect();

        a.view_mut((row, col), (qi, ni)).copy_from(&blk.a);
        b_mat.view_mut((row, 0), (qi, m)).copy_from(&blk.b_mat);
        b_vec.rows_mut(row, qi).copy_from(&blk.b_vec);
        x_names.extend(renamed[i].iter().cloned());
        constraints.extend(c_i.iter().cloned());
        objective = Some(match objective {
            None => f_i.clone(),
            Some(acc) => Expr::add(acc, f_i.clone()),
        });
        parts.push(BlockPart {
            objective: f_i,
            constraints: c_i,
            x_range: col..col + ni,
            con_range: con..con + blk.constraints.len(),
            row_range: row..row + qi,
        });
        col += ni;
        row += qi;
        con += blk.constraints.len();
    }

    let mut prob = Problem::new(
        x_names,
        bp.y_names.clone(),
        objective.unwrap(),
        constraints,
        a,
        b_mat,
        b_vec,
    )?;
    prob.blocks = Some(parts);
    Ok(prob)
}

/// Canonicalizes the shared-budget form by introducing one `y_i` in R^{q~}
/// per block: constraints become `A_i x_i - y_i = 0` for each block and
/// `sum_i y_i = b_tilde`, which reproduces the block-diagonal `A` with a
/// trailing zero block row, the `-I`-diagonal `B` with a trailing row of
/// identities, and `b = (0, ..., 0, b_tilde)`.
pub fn canonicalize_shared(sp: &SharedBudgetProblem) -> Result<Problem, ModelError> {
    if sp.blocks.is_empty() {
        return Err(ModelError::EmptyBlocks);
    }
    let q_tilde = sp.budget.len();
    for (i, blk) in sp.blocks.iter().enumerate() {
        if blk.a.nrows() != q_tilde {
            return Err(ModelError::MismatchedBudget {
                block: i,
                got: blk.a.nrows(),
                expected: q_tilde,
            });
        }
        if blk.a.ncols() != blk.x_names.len() {
            return Err(ModelError::Dimension(format!(
                "block {i}: A_i has {} columns for {} variables",
                blk.a.ncols(),
                blk.x_names.len()
            )));
        }
    }

    let n_blocks = sp.blocks.len();
    let (renamed, maps) = block_prefix_maps(
        &sp.blocks
            .iter()
            .map(|b| b.x_names.clone())
            .collect::<Vec<_>>(),
    )?;

    let n_total: usize = sp.blocks.iter().map(|b| b.x_names.len()).sum();
    let m = n_blocks * q_tilde;
    let q = (n_blocks + 1) * q_tilde;
    let mut a = DMatrix::<f64>::zeros(q, n_total);
    let mut b_mat = DMatrix::<f64>::zeros(q, m);
    let mut b_vec = DVector::<f64>::zeros(q);
    b_vec
        .rows_mut(n_blocks * q_tilde, q_tilde)
        .copy_from(&sp.budget);

    let mut x_names = Vec::with_capacity(n_total);
    let mut y_names = Vec::with_capacity(m);
    let mut constraints = Vec::new();
    let mut parts = Vec::with_capacity(n_blocks);
    let mut objective: Option<Expr> = None;

    let (mut col, mut con) = (0usize, 0usize);
    for (i, blk) in sp.blocks.iter().enumerate() {
        let ni = blk.x_names.len();
        let row = i * q_tilde;
        let f_i = blk.objective.rename_vars(&maps[i]);
        let c_i: Vec<Expr> = blk
            .constraints
            .iter()
            .map(|c| c.rename_vars(&maps[i]))
            .collect();

        a.view_mut((row, col), (q_tilde, ni)).copy_from(&blk.a);
        // -I block for y_i, and the identity in the trailing budget rows
        for r in 0..q_tilde {
            b_mat[(row + r, i * q_tilde + r)] = -1.0;
            b_mat[(n_blocks * q_tilde + r, i * q_tilde + r)] = 1.0;
        }
        for r in 0..q_tilde {
            y_names.push(if n_blocks == 1 {
                format!("y{r}")
            } else {
                format!("b{i}.y{r}")
            });
        }
        x_names.extend(renamed[i].iter().cloned());
        constraints.extend(c_i.iter().cloned());
        objective = Some(match objective {
            None => f_i.clone(),
            Some(acc) => Expr::add(acc, f_i.clone()),
        });
        parts.push(BlockPart {
            objective: f_i,
            constraints: c_i,
            x_range: col..col + ni,
            con_range: con..con + blk.constraints.len(),
            row_range: row..row + q_tilde,
        });
        col += ni;
        con += blk.constraints.len();
    }

    let mut prob = Problem::new(
        x_names,
        y_names,
        objective.unwrap(),
        constraints,
        a,
        b_mat,
        b_vec,
    )?;
    prob.blocks = Some(parts);
    Ok(prob)
}

/// Rewrites each inequality `h_j(x) <= 0` as the equality
/// `h_j(x) + s_j^2 = 0` with a fresh free variable `s_j`. The objective is
/// unchanged and `A` gains a zero column per slack. Block metadata is
/// dropped: a slack constraint may reference variables across blocks.
pub fn add_slacks(prob: &Problem, ineq: &InequalitySpec) -> Result<Problem, ModelError> {
    if ineq.constraints.is_empty() {
        return Ok(prob.clone());
    }
    let mut x_names: Vec<String> = prob.x_vars.names().to_vec();
    let mut constraints = prob.constraints.clone();
    let n_slacks = ineq.constraints.len();
    for (j, h) in ineq.constraints.iter().enumerate() {
        for name in h.variables() {
            if !prob.x_vars.contains(name) {
                return Err(ModelError::Undeclared {
                    name: name.to_string(),
                    context: format!("inequality {j}"),
                });
            }
        }
        let slack = format!("s{j}");
        if prob.x_vars.contains(&slack) {
            return Err(ModelError::NameCollision(slack));
        }
        x_names.push(slack.clone());
        constraints.push(Expr::add(h.clone(), Expr::pow(Expr::var(slack), 2)));
    }
    let mut a = DMatrix::<f64>::zeros(prob.q(), prob.n() + n_slacks);
    a.view_mut((0, 0), (prob.q(), prob.n())).copy_from(&prob.a);
    Problem::new(
        x_names,
        prob.y_vars.names().to_vec(),
        prob.objective.clone(),
        constraints,
        a,
        prob.b_mat.clone(),
        prob.b_vec.clone(),
    )
}

/// Feasible slack value for a satisfied inequality, used to seed warm
/// starts: `s_j = max(sqrt(max(-h_j(x), 0)), 1e-3)`.
pub fn slack_warm_start(h_value: f64) -> f64 {
    f64::max((-h_value).max(0.0).sqrt(), 1e-3)
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct ValidationReport {
    pub dims_ok: bool,
    pub b_full_column_rank: bool,
    pub b_rank: usize,
    pub undeclared: Vec<String>,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks dimension consistency, undeclared variable references, and the
/// column rank of `B` (column-pivoted QR, tolerance `1e-10 * ||B||`).
pub fn validate(prob: &Problem) -> ValidationReport {
    let mut failures = Vec::new();
    let mut undeclared = Vec::new();
    let (n, m, q) = (prob.n(), prob.m(), prob.q());

    let mut dims_ok = true;
    if prob.a.shape() != (q, n) {
        dims_ok = false;
        failures.push(format!(
            "A is {}x{}, expected {q}x{n}",
            prob.a.nrows(),
            prob.a.ncols()
        ));
    }
    if prob.b_mat.shape() != (q, m) {
        dims_ok = false;
        failures.push(format!(
            "B is {}x{}, expected {q}x{m}",
            prob.b_mat.nrows(),
            prob.b_mat.ncols()
        ));
    }

    for name in prob.objective.variables() {
        if !prob.x_vars.contains(name) {
            undeclared.push(format!("objective references undeclared variable `{name}`"));
        }
    }
    for (j, c) in prob.constraints.iter().enumerate() {
        for name in c.variables() {
            if !prob.x_vars.contains(name) {
                undeclared.push(format!(
                    "constraint {j} references undeclared variable `{name}`"
                ));
            }
        }
    }
    failures.extend(undeclared.iter().cloned());

    let tol = 1e-10 * prob.b_mat.norm();
    let b_rank = if prob.b_mat.ncols() == 0 {
        0
    } else {
        linalg::rank(&prob.b_mat, tol)
    };
    let b_full_column_rank = b_rank == m;
    if !b_full_column_rank {
        failures.push(format!(
            "B does not have full column rank (rank {b_rank} of {m})"
        ));
    }

    ValidationReport {
        dims_ok,
        b_full_column_rank,
        b_rank,
        undeclared,
        failures,
    }
}

// ---- problem files ---------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    #[serde(default)]
    schema_version: Option<u32>,
    #[serde(default)]
    variables: Option<Vec<String>>,
    #[serde(default)]
    y_variables: Option<Vec<String>>,
    #[serde(default)]
    objective: Option<Value>,
    #[serde(default)]
    constraints: Option<Vec<Value>>,
    #[serde(default, rename = "A")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "B")]
    b_mat: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    b: Option<Vec<f64>>,
    #[serde(default)]
    blocks: Option<Vec<BlockFile>>,
    #[serde(default)]
    b_tilde: Option<Vec<f64>>,
    #[serde(default)]
    inequalities: Option<Vec<Value>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockFile {
    variables: Vec<String>,
    objective: Value,
    #[serde(default)]
    constraints: Vec<Value>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(default, rename = "B")]
    b_mat: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    b: Option<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ModelError> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(ModelError::Schema(format!(
                "{what}: row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn exprs_from_values(vals: &[Value], what: &str) -> Result<Vec<Expr>, ModelError> {
    vals.iter()
        .enumerate()
        .map(|(i, v)| Ok(expr_from_value(v, &format!("{what}[{i}]"))?))
        .collect()
}

/// Builds a [`Problem`] from the JSON schema, canonicalizing block forms and
/// applying the inequality slack transform. The form is selected by the keys
/// present: `blocks` + `b_tilde` is the shared-budget form, `blocks` +
/// `y_variables` the coupled block form, and `variables`/`A`/`B`/`b` the
/// flat canonical form.
pub fn problem_from_json(v: &Value) -> Result<Problem, ModelError> {
    let (base, ineq) = problem_parts_from_json(v)?;
    add_slacks(&base, &ineq)
}

/// As [`problem_from_json`], but returns the problem before the slack
/// transform together with the inequality list, so callers can seed slack
/// variables from a warm start (see [`slack_warm_start`]).
pub fn problem_parts_from_json(v: &Value) -> Result<(Problem, InequalitySpec), ModelError> {
    let file: ProblemFile =
        serde_json::from_value(v.clone()).map_err(|e| ModelError::Schema(e.to_string()))?;
    let _ = file.schema_version;

    let base = match (&file.blocks, &file.b_tilde) {
        (Some(blocks), Some(b_tilde)) => {
            let blocks = blocks
                .iter()
                .enumerate()
                .map(|(i, bf)| -> Result<BudgetBlock, ModelError> {
                    if bf.b_mat.is_some() || bf.b.is_some() {
                        return Err(ModelError::Schema(format!(
                            "block {i}: shared-budget blocks take only A (B/b are derived)"
                        )));
                    }
                    Ok(BudgetBlock {
                        x_names: bf.variables.clone(),
                        objective: expr_from_value(
                            &bf.objective,
                            &format!("blocks[{i}].objective"),
                        )?,
                        constraints: exprs_from_values(
                            &bf.constraints,
                            &format!("blocks[{i}].constraints"),
                        )?,
                        a: matrix_from_rows(&bf.a, &format!("blocks[{i}].A"))?,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            canonicalize_shared(&SharedBudgetProblem {
                blocks,
                budget: DVector::from_vec(b_tilde.clone()),
            })?
        }
        (Some(blocks), None) => {
            let y_names = file
                .y_variables
                .clone()
                .ok_or_else(|| ModelError::Schema("block form requires y_variables".to_string()))?;
            let blocks = blocks
                .iter()
                .enumerate()
                .map(|(i, bf)| -> Result<CoupledBlock, ModelError> {
                    let b_mat = bf
                        .b_mat
                        .as_ref()
                        .ok_or_else(|| ModelError::Schema(format!("block {i}: missing B")))?;
                    let b =
                        bf.b.as_ref()
                            .ok_or_else(|| ModelError::Schema(format!("block {i}: missing b")))?;
                    Ok(CoupledBlock {
                        x_names: bf.variables.clone(),
                        objective: expr_from_value(
                            &bf.objective,
                            &format!("blocks[{i}].objective"),
                        )?,
                        constraints: exprs_from_values(
                            &bf.constraints,
                            &format!("blocks[{i}].constraints"),
                        )?,
                        a: matrix_from_rows(&bf.a, &format!("blocks[{i}].A"))?,
                        b_mat: matrix_from_rows(b_mat, &format!("blocks[{i}].B"))?,
                        b_vec: DVector::from_vec(b.clone()),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            canonicalize_block(&BlockProblem { y_names, blocks })?
        }
        (None, Some(_)) => {
            return Err(ModelError::Schema(
                "b_tilde requires a blocks list".to_string(),
            ))
        }
        (None, None) => {
            let variables = file
                .variables
                .clone()
                .ok_or_else(|| ModelError::Schema("missing variables".to_string()))?;
            let y_variables = file
                .y_variables
                .clone()
                .ok_or_else(|| ModelError::Schema("missing y_variables".to_string()))?;
            let objective = file
                .objective
                .as_ref()
                .ok_or_else(|| ModelError::Schema("missing objective".to_string()))?;
            let a = file
                .a
                .as_ref()
                .ok_or_else(|| ModelError::Schema("missing A".to_string()))?;
            let b_mat = file
                .b_mat
                .as_ref()
                .ok_or_else(|| ModelError::Schema("missing B".to_string()))?;
            let b = file
                .b
                .clone()
                .ok_or_else(|| ModelError::Schema("missing b".to_string()))?;
            let constraints = match &file.constraints {
                Some(vals) => exprs_from_values(vals, "constraints")?,
                None => Vec::new(),
            };
            Problem::new(
                variables,
                y_variables,
                expr_from_value(objective, "objective")?,
                constraints,
                matrix_from_rows(a, "A")?,
                matrix_from_rows(b_mat, "B")?,
                DVector::from_vec(b),
            )?
        }
    };

    let ineq = match &file.inequalities {
        Some(vals) => InequalitySpec {
            constraints: exprs_from_values(vals, "inequalities")?,
        },
        None => InequalitySpec::default(),
    };
    Ok((base, ineq))
}
