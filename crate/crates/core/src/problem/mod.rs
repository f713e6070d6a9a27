//! Solver-agnostic optimization problems.
//!
//! An [`OptProblem`] holds bounded continuous/binary variables, linear rows,
//! smooth nonlinear rows, complementarity pairs and an objective. It also
//! records which variables form the surrogate's inputs and outputs, the
//! boundary a larger model links against.

mod expr;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use expr::{Assignment, BinOp, DisplayExpr, Expr, ExprError, Func};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Domain {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub domain: Domain,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }

    /// Amount by which `lhs (sense) rhs` is violated; zero when satisfied.
    pub fn violation(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Sense::Le => (lhs - rhs).max(0.0),
            Sense::Ge => (rhs - lhs).max(0.0),
            Sense::Eq => (lhs - rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn lhs<A: Assignment + ?Sized>(&self, a: &A) -> Result<f64, ExprError> {
        self.terms.iter().try_fold(0.0, |acc, (v, c)| {
            a.value(*v).map(|x| acc + c * x).ok_or(ExprError::Unbound(*v))
        })
    }
}

#[derive(Debug, Clone)]
pub struct NonlinearConstraint {
    pub name: String,
    pub expr: Expr,
    pub sense: Sense,
    pub rhs: f64,
}

/// `a >= 0`, `b >= 0`, `a * b = 0`.
#[derive(Debug, Clone)]
pub struct Complementarity {
    pub name: String,
    pub a: Expr,
    pub b: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub sense: ObjectiveSense,
    pub expr: Expr,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            sense: ObjectiveSense::Minimize,
            expr: Expr::Const(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("name `{0}` is not a valid identifier")]
    InvalidName(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("variable `{name}`: bounds [{lb}, {ub}] are invalid")]
    InvalidBounds { name: String, lb: f64, ub: f64 },
    #[error("binary variable `{name}` has bounds [{lb}, {ub}] outside [0, 1]")]
    BinaryBounds { name: String, lb: f64, ub: f64 },
    #[error("`{owner}` references unknown variable {var}")]
    UnknownVariable { owner: String, var: VarId },
    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),
    #[error("`{0}` uses max(), which is reserved for oracle expressions")]
    MaxInConstraint(String),
}

/// Identifier grammar shared with the LP writer: a letter followed by
/// letters, digits, `_`, `[` or `]`, at most 255 characters.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    name.len() <= 255
        && chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '[' | ']'))
}

/// Merges repeated variables (first-appearance order) and drops zero
/// coefficients.
pub fn merge_terms(terms: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    let mut index: HashMap<VarId, usize> = HashMap::new();
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match index.get(&v) {
            Some(&i) => out[i].1 += c,
            None => {
                index.insert(v, out.len());
                out.push((v, c));
            }
        }
    }
    out.retain(|(_, c)| *c != 0.0);
    out
}

#[derive(Debug, Clone, Default)]
pub struct OptProblem {
    variables: Vec<Variable>,
    var_index: HashMap<String, VarId>,
    constraint_names: HashSet<String>,
    linear: Vec<LinearConstraint>,
    nonlinear: Vec<NonlinearConstraint>,
    complementarity: Vec<Complementarity>,
    objective: Objective,
    input_vars: Vec<VarId>,
    output_vars: Vec<VarId>,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConstraintCounts {
    pub linear: usize,
    pub nonlinear: usize,
    pub complementarity: usize,
    pub binaries: usize,
}

impl ConstraintCounts {
    pub fn total_rows(&self) -> usize {
        self.linear + self.nonlinear + self.complementarity
    }
}

impl OptProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }
    pub fn variable(&self, v: VarId) -> &Variable {
        &self.variables[v.0]
    }
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }
    pub fn linear_constraints(&self) -> &[LinearConstraint] {
        &self.linear
    }
    pub fn nonlinear_constraints(&self) -> &[NonlinearConstraint] {
        &self.nonlinear
    }
    pub fn complementarity_pairs(&self) -> &[Complementarity] {
        &self.complementarity
    }
    pub fn objective(&self) -> &Objective {
        &self.objective
    }
    pub fn input_vars(&self) -> &[VarId] {
        &self.input_vars
    }
    pub fn output_vars(&self) -> &[VarId] {
        &self.output_vars
    }
    /// Diagnostics collected while the problem was assembled.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.var_index.get(name).copied()
    }

    pub fn name_of(&self, v: VarId) -> &str {
        &self.variables[v.0].name
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.domain == Domain::Binary)
            .map(|(i, _)| VarId(i))
    }

    pub fn has_binaries(&self) -> bool {
        self.binaries().next().is_some()
    }

    pub fn is_linear(&self) -> bool {
        self.nonlinear.is_empty() && self.complementarity.is_empty()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        domain: Domain,
        lb: f64,
        ub: f64,
    ) -> Result<VarId, ProblemError> {
        let name = name.into();
        if !is_valid_name(&name) {
            return Err(ProblemError::InvalidName(name));
        }
        if self.var_index.contains_key(&name) || self.constraint_names.contains(&name) {
            return Err(ProblemError::DuplicateName(name));
        }
        if lb.is_nan() || ub.is_nan() || lb > ub || lb == f64::INFINITY || ub == f64::NEG_INFINITY {
            return Err(ProblemError::InvalidBounds { name, lb, ub });
        }
        if domain == Domain::Binary && (lb < 0.0 || ub > 1.0) {
            return Err(ProblemError::BinaryBounds { name, lb, ub });
        }
        let id = VarId(self.variables.len());
        self.var_index.insert(name.clone(), id);
        self.variables.push(Variable { name, domain, lb, ub });
        Ok(id)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> Result<VarId, ProblemError> {
        self.add_var(name, Domain::Continuous, lb, ub)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> Result<VarId, ProblemError> {
        self.add_var(name, Domain::Binary, 0.0, 1.0)
    }

    fn claim_constraint_name(&mut self, name: &str) -> Result<(), ProblemError> {
        if !is_valid_name(name) {
            return Err(ProblemError::InvalidName(name.to_string()));
        }
        if self.var_index.contains_key(name) || !self.constraint_names.insert(name.to_string()) {
            return Err(ProblemError::DuplicateName(name.to_string()));
        }
        Ok(())
    }

    fn check_vars<'a>(&self, owner: &str, vars: impl IntoIterator<Item = &'a VarId>) -> Result<(), ProblemError> {
        for v in vars {
            if v.0 >= self.variables.len() {
                return Err(ProblemError::UnknownVariable {
                    owner: owner.to_string(),
                    var: *v,
                });
            }
        }
        Ok(())
    }

    fn check_expr(&self, owner: &str, e: &Expr) -> Result<(), ProblemError> {
        if e.contains_max() {
            return Err(ProblemError::MaxInConstraint(owner.to_string()));
        }
        self.check_vars(owner, e.vars().iter())
    }

    pub fn add_linear(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<(), ProblemError> {
        let name = name.into();
        self.check_vars(&name, terms.iter().map(|(v, _)| v))?;
        if !rhs.is_finite() || terms.iter().any(|(_, c)| !c.is_finite()) {
            return Err(ProblemError::NonFinite(name));
        }
        self.claim_constraint_name(&name)?;
        self.linear.push(LinearConstraint {
            name,
            terms: merge_terms(terms),
            sense,
            rhs,
        });
        Ok(())
    }

    pub fn add_nonlinear(
        &mut self,
        name: impl Into<String>,
        expr: Expr,
        sense: Sense,
        rhs: f64,
    ) -> Result<(), ProblemError> {
        let name = name.into();
        self.check_expr(&name, &expr)?;
        if !rhs.is_finite() {
            return Err(ProblemError::NonFinite(name));
        }
        self.claim_constraint_name(&name)?;
        self.nonlinear.push(NonlinearConstraint { name, expr, sense, rhs });
        Ok(())
    }

    pub fn add_complementarity(&mut self, name: impl Into<String>, a: Expr, b: Expr) -> Result<(), ProblemError> {
        let name = name.into();
        self.check_expr(&name, &a)?;
        self.check_expr(&name, &b)?;
        self.claim_constraint_name(&name)?;
        self.complementarity.push(Complementarity { name, a, b });
        Ok(())
    }

    pub fn set_objective(&mut self, sense: ObjectiveSense, expr: Expr) -> Result<(), ProblemError> {
        self.check_expr("objective", &expr)?;
        self.objective = Objective { sense, expr };
        Ok(())
    }

    pub fn set_interface(&mut self, inputs: Vec<VarId>, outputs: Vec<VarId>) -> Result<(), ProblemError> {
        self.check_vars("interface", inputs.iter().chain(&outputs))?;
        self.input_vars = inputs;
        self.output_vars = outputs;
        Ok(())
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    /// Replaces a variable's bounds; used for fixing inputs and for
    /// branching.
    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) -> Result<(), ProblemError> {
        let var = &self.variables[v.0];
        if lb.is_nan() || ub.is_nan() || lb > ub {
            return Err(ProblemError::InvalidBounds {
                name: var.name.clone(),
                lb,
                ub,
            });
        }
        if var.domain == Domain::Binary && (lb < 0.0 || ub > 1.0) {
            return Err(ProblemError::BinaryBounds {
                name: var.name.clone(),
                lb,
                ub,
            });
        }
        let var = &mut self.variables[v.0];
        var.lb = lb;
        var.ub = ub;
        Ok(())
    }

    /// Resolves an interface name: `x[i]` is the i-th input, `y[j]` the j-th
    /// output; any other name is looked up as a variable.
    pub fn resolve(&self, name: &str) -> Option<VarId> {
        let indexed = |prefix: &str| -> Option<usize> { name.strip_prefix(prefix)?.strip_suffix(']')?.parse().ok() };
        if let Some(j) = indexed("y[") {
            if let Some(v) = self.output_vars.get(j) {
                return Some(*v);
            }
        }
        if let Some(i) = indexed("x[") {
            if let Some(v) = self.input_vars.get(i) {
                return Some(*v);
            }
        }
        self.var_by_name(name)
    }

    pub fn counts(&self) -> ConstraintCounts {
        ConstraintCounts {
            linear: self.linear.len(),
            nonlinear: self.nonlinear.len(),
            complementarity: self.complementarity.len(),
            binaries: self.binaries().count(),
        }
    }
}

/// Exact row counts by kind; each complementarity pair counts once.
pub fn count_constraints(p: &OptProblem) -> ConstraintCounts {
    p.counts()
}
