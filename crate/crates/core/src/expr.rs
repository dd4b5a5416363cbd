//! Differentiable scalar expression trees.
//!
//! Expressions are total on all finite inputs: the node set is limited to
//! `const`, `var`, `add`, `mul`, `pow` (non-negative integer exponent),
//! `neg`, `sin`, `cos`, `exp`. Objectives and nonlinear constraints are
//! defined as [`Expr`] values, either programmatically or parsed from the
//! JSON schema (one-key node objects, see [`parse_expr`]).
//!
//! Derivatives are exact: `gradient` and `hessian` symbolically
//! differentiate the tree (with constant folding) and evaluate the result,
//! so Newton-type solvers get true second-order information. For repeated
//! evaluation, [`ExprFunction`] caches the derivative trees once.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExprError {
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    Syntax {
        message: String,
        line: usize,
        column: usize,
    },
    #[error("invalid expression at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("unknown operator `{name}` at {path}")]
    UnknownOperator { name: String, path: String },
    #[error("non-integer exponent at {path}")]
    NonIntegerExponent { path: String },
    #[error("negative exponent at {path}")]
    NegativeExponent { path: String },
    #[error("missing variable `{0}`")]
    MissingVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Expression tree node. `Pow` exponents are non-negative integers, so
/// evaluation is total on finite inputs (no division, no fractional powers).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

/// An ordered set of variable names. The declaration order fixes the dense
/// vector layout used by gradients, Hessians and the coupling matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vars {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vars {
    pub fn new<I, S>(names: I) -> Result<Self, ExprError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(ExprError::DuplicateVariable(n.clone()));
            }
        }
        Ok(Vars { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }
}

/// A point assigns a value to every declared variable; it is both a
/// name-to-value map and a dense vector in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    vars: Arc<Vars>,
    values: DVector<f64>,
}

impl Point {
    pub fn new(vars: Arc<Vars>, values: DVector<f64>) -> Result<Self, ExprError> {
        if values.len() != vars.len() {
            return Err(ExprError::Dimension {
                expected: vars.len(),
                got: values.len(),
            });
        }
        Ok(Point { vars, values })
    }

    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, ExprError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let pairs: Vec<(String, f64)> = pairs.into_iter().map(|(n, v)| (n.into(), v)).collect();
        let vars = Arc::new(Vars::new(pairs.iter().map(|(n, _)| n.clone()))?);
        let values = DVector::from_iterator(pairs.len(), pairs.iter().map(|(_, v)| *v));
        Ok(Point { vars, values })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.vars.index_of(name).map(|i| self.values[i])
    }

    pub fn vars(&self) -> &Arc<Vars> {
        &self.vars
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }
}

/// Integer power by repeated multiplication. Used both by evaluation and by
/// constant folding so the two paths agree bit-for-bit.
fn pow_int(base: f64, exp: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

// Folding constructors used when building derivative trees. These keep the
// trees small; the raw enum variants (and `parse_expr`) never fold, so a
// parsed AST is source-faithful.
#[allow(clippy::redundant_guards)] // float-literal patterns are a trap
fn fadd(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(x), b) if x == 0.0 => b,
        (a, Expr::Const(y)) if y == 0.0 => a,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

#[allow(clippy::redundant_guards)]
fn fmul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(x), _) | (_, Expr::Const(x)) if x == 0.0 => Expr::Const(0.0),
        (Expr::Const(x), b) if x == 1.0 => b,
        (a, Expr::Const(y)) if y == 1.0 => a,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn fpow(e: Expr, k: u32) -> Expr {
    match k {
        0 => Expr::Const(1.0),
        1 => e,
        _ => match e {
            Expr::Const(c) => Expr::Const(pow_int(c, k)),
            e => Expr::Pow(Box::new(e), k),
        },
    }
}

fn fneg(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        e => Expr::Neg(Box::new(e)),
    }
}

// constructor names mirror the node names, not operator traits
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn pow(e: Expr, k: u32) -> Expr {
        Expr::Pow(Box::new(e), k)
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    pub fn sin(e: Expr) -> Expr {
        Expr::Sin(Box::new(e))
    }

    pub fn cos(e: Expr) -> Expr {
        Expr::Cos(Box::new(e))
    }

    pub fn exp(e: Expr) -> Expr {
        Expr::Exp(Box::new(e))
    }

    /// Names of all variables referenced by the expression.
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(n) => {
                out.insert(n.as_str());
            }
            Expr::Add(a, b) | Expr::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Pow(e, _) | Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) | Expr::Exp(e) => {
                e.collect_vars(out)
            }
        }
    }

    /// Renames variables according to `map`; names absent from the map are
    /// kept. Used when canonicalizing block-structured problems.
    pub fn rename_vars(&self, map: &HashMap<String, String>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(n) => Expr::Var(map.get(n).cloned().unwrap_or_else(|| n.clone())),
            Expr::Add(a, b) => Expr::add(a.rename_vars(map), b.rename_vars(map)),
            Expr::Mul(a, b) => Expr::mul(a.rename_vars(map), b.rename_vars(map)),
            Expr::Pow(e, k) => Expr::pow(e.rename_vars(map), *k),
            Expr::Neg(e) => Expr::neg(e.rename_vars(map)),
            Expr::Sin(e) => Expr::sin(e.rename_vars(map)),
            Expr::Cos(e) => Expr::cos(e.rename_vars(map)),
            Expr::Exp(e) => Expr::exp(e.rename_vars(map)),
        }
    }

    /// Exact partial derivative as a new expression, with constant folding.
    pub fn derivative(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(n) => Expr::Const(if n == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => fadd(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => fadd(
                fmul(a.derivative(var), (**b).clone()),
                fmul((**a).clone(), b.derivative(var)),
            ),
            Expr::Pow(_, 0) => Expr::Const(0.0),
            Expr::Pow(e, k) => fmul(
                fmul(Expr::Const(*k as f64), fpow((**e).clone(), k - 1)),
                e.derivative(var),
            ),
            Expr::Neg(e) => fneg(e.derivative(var)),
            Expr::Sin(e) => fmul(Expr::cos((**e).clone()), e.derivative(var)),
            Expr::Cos(e) => fneg(fmul(Expr::sin((**e).clone()), e.derivative(var))),
            Expr::Exp(e) => fmul(Expr::exp((**e).clone()), e.derivative(var)),
        }
    }

    /// Evaluates the expression at `p`. Errors when a referenced variable is
    /// not declared in the point.
    pub fn eval(&self, p: &Point) -> Result<f64, ExprError> {
        self.eval_in(p.vars(), p.values())
    }

    pub(crate) fn eval_in(&self, vars: &Vars, x: &DVector<f64>) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(n) => {
                let i = vars
                    .index_of(n)
                    .ok_or_else(|| ExprError::MissingVariable(n.clone()))?;
                x[i]
            }
            Expr::Add(a, b) => a.eval_in(vars, x)? + b.eval_in(vars, x)?,
            Expr::Mul(a, b) => a.eval_in(vars, x)? * b.eval_in(vars, x)?,
            Expr::Pow(e, k) => pow_int(e.eval_in(vars, x)?, *k),
            Expr::Neg(e) => -e.eval_in(vars, x)?,
            Expr::Sin(e) => e.eval_in(vars, x)?.sin(),
            Expr::Cos(e) => e.eval_in(vars, x)?.cos(),
            Expr::Exp(e) => e.eval_in(vars, x)?.exp(),
        })
    }

    /// Gradient in the declared variable order of `p`.
    pub fn gradient(&self, p: &Point) -> Result<DVector<f64>, ExprError> {
        self.check_declared(p.vars())?;
        let vars = p.vars();
        let mut g = DVector::<f64>::zeros(vars.len());
        for (i, name) in vars.names().iter().enumerate() {
            g[i] = self.derivative(name).eval_in(vars, p.values())?;
        }
        Ok(g)
    }

    /// Hessian in the declared variable order of `p`. Exactly symmetric: the
    /// upper triangle is computed and mirrored.
    pub fn hessian(&self, p: &Point) -> Result<DMatrix<f64>, ExprError> {
        self.check_declared(p.vars())?;
        let vars = p.vars();
        let n = vars.len();
        let mut h = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let di = self.derivative(&vars.names()[i]);
            for j in i..n {
                let v = di.derivative(&vars.names()[j]).eval_in(vars, p.values())?;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }

    fn check_declared(&self, vars: &Vars) -> Result<(), ExprError> {
        for name in self.variables() {
            if !vars.contains(name) {
                return Err(ExprError::MissingVariable(name.to_string()));
            }
        }
        Ok(())
    }
}

/// An expression bound to a variable set, with symbolic gradient and Hessian
/// trees differentiated once at construction. This is the oracle form used
/// by the solvers.
#[derive(Debug, Clone)]
pub struct ExprFunction {
    vars: Arc<Vars>,
    value: Expr,
    grad: Vec<Expr>,
    hess: Vec<Vec<Expr>>, // upper triangle, row i holds entries (i, i..n)
}

impl ExprFunction {
    pub fn new(expr: Expr, vars: Arc<Vars>) -> Result<Self, ExprError> {
        expr.check_declared(&vars)?;
        let n = vars.len();
        let grad: Vec<Expr> = vars.names().iter().map(|v| expr.derivative(v)).collect();
        let mut hess = Vec::with_capacity(n);
        for (i, gi) in grad.iter().enumerate() {
            let row: Vec<Expr> = (i..n).map(|j| gi.derivative(&vars.names()[j])).collect();
            hess.push(row);
        }
        Ok(ExprFunction {
            vars,
            value: expr,
            grad,
            hess,
        })
    }

    pub fn vars(&self) -> &Arc<Vars> {
        &self.vars
    }

    pub fn expr(&self) -> &Expr {
        &self.value
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.value.eval_in(&self.vars, x).expect("validated")
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.vars.len(),
            self.grad
                .iter()
                .map(|g| g.eval_in(&self.vars, x).expect("validated")),
        )
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.vars.len();
        let mut h = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.hess[i][j - i]
                    .eval_in(&self.vars, x)
                    .expect("validated");
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }
}

/// Parses an expression from JSON text. See the schema in [`expr_from_value`].
pub fn parse_expr(source: &str) -> Result<Expr, ExprError> {
    let v: Value = serde_json::from_str(source).map_err(|e| ExprError::Syntax {
        message: e.to_string(),
        line: e.line(),
        column: e.column(),
    })?;
    expr_from_value(&v, "$")
}

/// Maps a JSON value to an [`Expr`].
///
/// Schema: each node is an object with exactly one key from
/// `{const, var, add, mul, pow, neg, sin, cos, exp}`. `add` and `mul` take
/// an array of two or more children, folded left; `pow` takes
/// `[child, integer]` with a non-negative integer exponent.
pub fn expr_from_value(v: &Value, path: &str) -> Result<Expr, ExprError> {
    let obj = v.as_object().ok_or_else(|| ExprError::Schema {
        path: path.to_string(),
        message: "expected an object with exactly one operator key".to_string(),
    })?;
    if obj.len() != 1 {
        return Err(ExprError::Schema {
            path: path.to_string(),
            message: format!("expected exactly one operator key, found {}", obj.len()),
        });
    }
    let (op, arg) = obj.iter().next().unwrap();
    let sub = |suffix: &str| format!("{path}.{op}{suffix}");
    match op.as_str() {
        "const" => arg
            .as_f64()
            .map(Expr::Const)
            .ok_or_else(|| ExprError::Schema {
                path: sub(""),
                message: "const takes a number".to_string(),
            }),
        "var" => arg
            .as_str()
            .map(Expr::var)
            .ok_or_else(|| ExprError::Schema {
                path: sub(""),
                message: "var takes a string".to_string(),
            }),
        "add" | "mul" => {
            let children = arg.as_array().ok_or_else(|| ExprError::Schema {
                path: sub(""),
                message: format!("{op} takes an array of 2 or more children"),
            })?;
            if children.len() < 2 {
                return Err(ExprError::Schema {
                    path: sub(""),
                    message: format!("{op} takes 2 or more children, found {}", children.len()),
                });
            }
            let mut parsed = children
                .iter()
                .enumerate()
                .map(|(i, c)| expr_from_value(c, &sub(&format!("[{i}]"))))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter();
            let first = parsed.next().unwrap();
            Ok(parsed.fold(first, |acc, e| {
                if op == "add" {
                    Expr::add(acc, e)
                } else {
                    Expr::mul(acc, e)
                }
            }))
        }
        "pow" => {
            let pair = arg.as_array().ok_or_else(|| ExprError::Schema {
                path: sub(""),
                message: "pow takes [child, integer]".to_string(),
            })?;
            if pair.len() != 2 {
                return Err(ExprError::Schema {
                    path: sub(""),
                    message: format!("pow takes [child, integer], found {} entries", pair.len()),
                });
            }
            let base = expr_from_value(&pair[0], &sub("[0]"))?;
            let exp_num = pair[1].as_number().ok_or_else(|| ExprError::Schema {
                path: sub("[1]"),
                message: "pow exponent must be a number".to_string(),
            })?;
            if let Some(k) = exp_num.as_u64() {
                if k > u32::MAX as u64 {
                    return Err(ExprError::Schema {
                        path: sub("[1]"),
                        message: "pow exponent too large".to_string(),
                    });
                }
                Ok(Expr::pow(base, k as u32))
            } else if exp_num.as_i64().is_some() {
                Err(ExprError::NegativeExponent { path: sub("[1]") })
            } else {
                Err(ExprError::NonIntegerExponent { path: sub("[1]") })
            }
        }
        "neg" => Ok(Expr::neg(expr_from_value(arg, &sub(""))?)),
        "sin" => Ok(Expr::sin(expr_from_value(arg, &sub(""))?)),
        "cos" => Ok(Expr::cos(expr_from_value(arg, &sub(""))?)),
        "exp" => Ok(Expr::exp(expr_from_value(arg, &sub(""))?)),
        other => Err(ExprError::UnknownOperator {
            name: other.to_string(),
            path: path.to_string(),
        }),
    }
}

/// Serializes an expression back to the JSON schema. Binary `add`/`mul`
/// nodes are written with two children, so `parse(serialize(e)) == e`.
pub fn expr_to_value(e: &Expr) -> Value {
    use serde_json::json;
    match e {
        Expr::Const(c) => json!({ "const": c }),
        Expr::Var(n) => json!({ "var": n }),
        Expr::Add(a, b) => json!({ "add": [expr_to_value(a), expr_to_value(b)] }),
        Expr::Mul(a, b) => json!({ "mul": [expr_to_value(a), expr_to_value(b)] }),
        Expr::Pow(e, k) => json!({ "pow": [expr_to_value(e), k] }),
        Expr::Neg(e) => json!({ "neg": expr_to_value(e) }),
        Expr::Sin(e) => json!({ "sin": expr_to_value(e) }),
        Expr::Cos(e) => json!({ "cos": expr_to_value(e) }),
        Expr::Exp(e) => json!({ "exp": expr_to_value(e) }),
    }
}

pub fn serialize_expr(e: &Expr) -> String {
    expr_to_value(e).to_string()
}
