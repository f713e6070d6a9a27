use serde::Serialize;

use crate::problem::{Domain, OptProblem, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowKind {
    Linear,
    Nonlinear,
    /// One side of a complementarity pair, which must be nonnegative.
    ComplementaritySide,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowResidual {
    pub name: String,
    pub kind: RowKind,
    pub sense: Sense,
    /// `lhs - rhs`
    pub residual: f64,
    /// Zero when the row holds.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplementarityResidual {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub rows: Vec<RowResidual>,
    pub complementarity: Vec<ComplementarityResidual>,
    /// `(variable name, amount outside its bounds or off {0, 1})`
    pub bound_violations: Vec<(String, f64)>,
    /// Largest violation over rows and bounds; products are kept separate.
    pub max_violation: f64,
    pub max_product: f64,
}

impl ResidualReport {
    /// Names of rows violated by more than `tol`.
    pub fn violated(&self, tol: f64) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.violation > tol)
            .map(|r| r.name.as_str())
            .collect()
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max_violation <= tol && self.max_product <= tol
    }
}

/// Evaluates every constraint of `p` at `x` (indexed by variable id).
/// Missing values count as NaN and so show up as violations.
pub fn check_feasibility(p: &OptProblem, x: &[f64]) -> ResidualReport {
    let mut full = x.to_vec();
    full.resize(p.num_vars(), f64::NAN);
    let x = full.as_slice();

    let viol = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut rows = Vec::new();
    for c in p.linear_constraints() {
        let lhs = c.lhs(x).unwrap_or(f64::NAN);
        rows.push(RowResidual {
            name: c.name.clone(),
            kind: RowKind::Linear,
            sense: c.sense,
            residual: lhs - c.rhs,
            violation: viol(c.sense.violation(lhs, c.rhs)),
        });
    }
    for c in p.nonlinear_constraints() {
        let lhs = c.expr.eval(x).unwrap_or(f64::NAN);
        rows.push(RowResidual {
            name: c.name.clone(),
            kind: RowKind::Nonlinear,
            sense: c.sense,
            residual: lhs - c.rhs,
            violation: viol(c.sense.violation(lhs, c.rhs)),
        });
    }
    let mut complementarity = Vec::new();
    for c in p.complementarity_pairs() {
        let a = c.a.eval(x).unwrap_or(f64::NAN);
        let b = c.b.eval(x).unwrap_or(f64::NAN);
        for v in [a, b] {
            rows.push(RowResidual {
                name: c.name.clone(),
                kind: RowKind::ComplementaritySide,
                sense: Sense::Ge,
                residual: v,
                violation: viol(Sense::Ge.violation(v, 0.0)),
            });
        }
        complementarity.push(ComplementarityResidual {
            name: c.name.clone(),
            a,
            b,
            product: a * b,
        });
    }

    let mut bound_violations = Vec::new();
    for (var, v) in p.variables().iter().zip(x) {
        let mut off = viol((var.lb - v).max(v - var.ub).max(0.0));
        if var.domain == Domain::Binary {
            off = off.max(viol(v.min(1.0 - v).max(0.0)));
        }
        if off > 0.0 {
            bound_violations.push((var.name.clone(), off));
        }
    }

    let max_violation = rows
        .iter()
        .map(|r| r.violation)
        .chain(bound_violations.iter().map(|b| b.1))
        .fold(0.0, f64::max);
    let max_product = complementarity
        .iter()
        .map(|c| {
            if c.product.is_nan() {
                f64::INFINITY
            } else {
                c.product.abs()
            }
        })
        .fold(0.0, f64::max);
    ResidualReport {
        rows,
        complementarity,
        bound_violations,
        max_violation,
        max_product,
    }
}
