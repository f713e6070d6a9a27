use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

use super::VarId;
use crate::model::{sigmoid, softplus};
use crate::numfmt::g17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Ln,
    Tanh,
    Sigmoid,
    Softplus,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Exp, Func::Ln, Func::Tanh, Func::Sigmoid, Func::Softplus];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "log",
            Func::Tanh => "tanh",
            Func::Sigmoid => "sigmoid",
            Func::Softplus => "softplus",
        }
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Tanh => v.tanh(),
            Func::Sigmoid => sigmoid(v),
            Func::Softplus => softplus(v),
        }
    }

    /// Derivative at argument `v`, given the already computed value `f(v)`.
    fn derivative(self, v: f64, fv: f64) -> f64 {
        match self {
            Func::Exp => fv,
            Func::Ln => 1.0 / v,
            Func::Tanh => 1.0 - fv * fv,
            Func::Sigmoid => fv * (1.0 - fv),
            Func::Softplus => sigmoid(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    /// Maximum of two; only for oracle expressions, never in emitted
    /// constraints.
    Max,
}

/// Expression tree over problem variables. Subtrees are shared through
/// `Arc`, so nested substitution stays linear in memory.
#[derive(Debug, Clone)]
pub enum Expr {
    Const(f64),
    Var(VarId),
    Unary(Func, Arc<Expr>),
    Binary(BinOp, Arc<Expr>, Arc<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("variable {0} has no value in the assignment")]
    Unbound(VarId),
}

/// Source of variable values for evaluation.
pub trait Assignment {
    fn value(&self, v: VarId) -> Option<f64>;
}

impl Assignment for [f64] {
    fn value(&self, v: VarId) -> Option<f64> {
        self.get(v.0).copied()
    }
}

impl Assignment for Vec<f64> {
    fn value(&self, v: VarId) -> Option<f64> {
        self.get(v.0).copied()
    }
}

impl Assignment for HashMap<VarId, f64> {
    fn value(&self, v: VarId) -> Option<f64> {
        self.get(&v).copied()
    }
}

impl Assignment for BTreeMap<VarId, f64> {
    fn value(&self, v: VarId) -> Option<f64> {
        self.get(&v).copied()
    }
}

impl Expr {
    pub fn var(v: VarId) -> Self {
        Expr::Var(v)
    }

    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn apply(self, f: Func) -> Self {
        Expr::Unary(f, Arc::new(self))
    }

    pub fn max(self, other: Expr) -> Self {
        Expr::Binary(BinOp::Max, Arc::new(self), Arc::new(other))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Arc::new(a), Arc::new(b))
    }

    /// `constant + sum c_i v_i`, skipping zero coefficients and a zero
    /// constant, and writing unit coefficients without a product.
    pub fn linear(terms: &[(VarId, f64)], constant: f64) -> Self {
        let mut acc: Option<Expr> = None;
        for &(v, c) in terms {
            if c == 0.0 {
                continue;
            }
            acc = Some(match acc {
                None if c == 1.0 => Expr::Var(v),
                None => Expr::Const(c) * Expr::Var(v),
                Some(e) if c == 1.0 => e + Expr::Var(v),
                Some(e) if c == -1.0 => e - Expr::Var(v),
                Some(e) if c < 0.0 => e - Expr::Const(-c) * Expr::Var(v),
                Some(e) => e + Expr::Const(c) * Expr::Var(v),
            });
        }
        match acc {
            None => Expr::Const(constant),
            Some(e) if constant == 0.0 => e,
            Some(e) if constant < 0.0 => e - Expr::Const(-constant),
            Some(e) => e + Expr::Const(constant),
        }
    }

    pub fn eval<A: Assignment + ?Sized>(&self, a: &A) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => a.value(*v).ok_or(ExprError::Unbound(*v))?,
            Expr::Unary(f, e) => f.apply(e.eval(a)?),
            Expr::Binary(op, l, r) => {
                let (l, r) = (l.eval(a)?, r.eval(a)?);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => l / r,
                    BinOp::Max => l.max(r),
                }
            }
        })
    }

    /// Exact gradient by reverse accumulation over the expression DAG.
    pub fn grad<A: Assignment + ?Sized>(&self, a: &A) -> Result<BTreeMap<VarId, f64>, ExprError> {
        let tape = Tape::record(self);
        tape.gradient(a)
    }

    /// Variables referenced anywhere in the expression.
    pub fn vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            match e {
                Expr::Const(_) => {}
                Expr::Var(v) => {
                    out.insert(*v);
                }
                Expr::Unary(_, c) => stack.push(c),
                Expr::Binary(_, l, r) => {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        out
    }

    pub fn contains_max(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Unary(_, c) => c.contains_max(),
            Expr::Binary(op, l, r) => *op == BinOp::Max || l.contains_max() || r.contains_max(),
        }
    }

    /// Coefficients and constant when the expression is affine, merging
    /// repeated variables in first-appearance order.
    pub fn as_linear(&self) -> Option<(Vec<(VarId, f64)>, f64)> {
        fn go(e: &Expr, scale: f64, terms: &mut Vec<(VarId, f64)>, constant: &mut f64) -> bool {
            match e {
                Expr::Const(c) => {
                    *constant += scale * c;
                    true
                }
                Expr::Var(v) => {
                    terms.push((*v, scale));
                    true
                }
                Expr::Unary(..) => false,
                Expr::Binary(op, l, r) => match op {
                    BinOp::Add => go(l, scale, terms, constant) && go(r, scale, terms, constant),
                    BinOp::Sub => go(l, scale, terms, constant) && go(r, -scale, terms, constant),
                    BinOp::Mul => match (l.as_ref(), r.as_ref()) {
                        (Expr::Const(c), other) | (other, Expr::Const(c)) => go(other, scale * c, terms, constant),
                        _ => false,
                    },
                    BinOp::Div => match r.as_ref() {
                        Expr::Const(c) => go(l, scale / c, terms, constant),
                        _ => false,
                    },
                    BinOp::Max => false,
                },
            }
        }
        let mut terms = Vec::new();
        let mut constant = 0.0;
        go(self, 1.0, &mut terms, &mut constant).then(|| (super::merge_terms(terms), constant))
    }

    /// Infix rendering with variable names supplied by `name`.
    pub fn display<'a, F: Fn(VarId) -> String>(&'a self, name: &'a F) -> DisplayExpr<'a, F> {
        DisplayExpr { expr: self, name }
    }
}

impl From<VarId> for Expr {
    fn from(v: VarId) -> Self {
        Expr::Var(v)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::Const(c)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::Binary($op, Arc::new(self), Arc::new(rhs))
            }
        }
    };
}

binop!(Add, add, BinOp::Add);
binop!(Sub, sub, BinOp::Sub);
binop!(Mul, mul, BinOp::Mul);
binop!(Div, div, BinOp::Div);

enum TapeOp {
    Const(f64),
    Var(VarId),
    Unary(Func, usize),
    Binary(BinOp, usize, usize),
}

/// Topologically ordered node list; shared subtrees appear once.
struct Tape {
    ops: Vec<TapeOp>,
}

impl Tape {
    fn record(root: &Expr) -> Self {
        let mut tape = Tape { ops: Vec::new() };
        let mut seen: HashMap<*const Expr, usize> = HashMap::new();
        tape.push(root, &mut seen);
        tape
    }

    fn push_shared(&mut self, e: &Arc<Expr>, seen: &mut HashMap<*const Expr, usize>) -> usize {
        let key = Arc::as_ptr(e);
        if let Some(&i) = seen.get(&key) {
            return i;
        }
        let i = self.push(e, seen);
        seen.insert(key, i);
        i
    }

    fn push(&mut self, e: &Expr, seen: &mut HashMap<*const Expr, usize>) -> usize {
        let op = match e {
            Expr::Const(c) => TapeOp::Const(*c),
            Expr::Var(v) => TapeOp::Var(*v),
            Expr::Unary(f, c) => TapeOp::Unary(*f, self.push_shared(c, seen)),
            Expr::Binary(op, l, r) => {
                let l = self.push_shared(l, seen);
                let r = self.push_shared(r, seen);
                TapeOp::Binary(*op, l, r)
            }
        };
        self.ops.push(op);
        self.ops.len() - 1
    }

    fn gradient<A: Assignment + ?Sized>(&self, a: &A) -> Result<BTreeMap<VarId, f64>, ExprError> {
        let mut val = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            val.push(match *op {
                TapeOp::Const(c) => c,
                TapeOp::Var(v) => a.value(v).ok_or(ExprError::Unbound(v))?,
                TapeOp::Unary(f, c) => f.apply(val[c]),
                TapeOp::Binary(op, l, r) => match op {
                    BinOp::Add => val[l] + val[r],
                    BinOp::Sub => val[l] - val[r],
                    BinOp::Mul => val[l] * val[r],
                    BinOp::Div => val[l] / val[r],
                    BinOp::Max => val[l].max(val[r]),
                },
            });
        }
        let mut adj = vec![0.0; self.ops.len()];
        *adj.last_mut().expect("tape is nonempty") = 1.0;
        let mut out = BTreeMap::new();
        for (i, op) in self.ops.iter().enumerate().rev() {
            let g = adj[i];
            match *op {
                TapeOp::Const(_) => {}
                TapeOp::Var(v) => *out.entry(v).or_insert(0.0) += g,
                TapeOp::Unary(f, c) => adj[c] += g * f.derivative(val[c], val[i]),
                TapeOp::Binary(op, l, r) => match op {
                    BinOp::Add => {
                        adj[l] += g;
                        adj[r] += g;
                    }
                    BinOp::Sub => {
                        adj[l] += g;
                        adj[r] -= g;
                    }
                    BinOp::Mul => {
                        adj[l] += g * val[r];
                        adj[r] += g * val[l];
                    }
                    BinOp::Div => {
                        adj[l] += g / val[r];
                        adj[r] -= g * val[l] / (val[r] * val[r]);
                    }
                    BinOp::Max => {
                        if val[l] >= val[r] {
                            adj[l] += g;
                        } else {
                            adj[r] += g;
                        }
                    }
                },
            }
        }
        Ok(out)
    }
}

pub struct DisplayExpr<'a, F> {
    expr: &'a Expr,
    name: &'a F,
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Const(c) if *c < 0.0 => 0,
        _ => 3,
    }
}

impl<F: Fn(VarId) -> String> DisplayExpr<'_, F> {
    fn write(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e {
            Expr::Const(c) => f.write_str(&g17(*c)),
            Expr::Var(v) => f.write_str(&(self.name)(*v)),
            Expr::Unary(func, c) => {
                write!(f, "{}(", func.name())?;
                self.write(c, f)?;
                f.write_str(")")
            }
            Expr::Binary(BinOp::Max, l, r) => {
                f.write_str("max(")?;
                self.write(l, f)?;
                f.write_str(", ")?;
                self.write(r, f)?;
                f.write_str(")")
            }
            Expr::Binary(op, l, r) => {
                let (sym, prec) = match op {
                    BinOp::Add => (" + ", 1),
                    BinOp::Sub => (" - ", 1),
                    BinOp::Mul => (" * ", 2),
                    BinOp::Div => (" / ", 2),
                    BinOp::Max => unreachable!(),
                };
                let left_paren = precedence(l) < prec;
                let right_paren =
                    precedence(r) < prec || (precedence(r) == prec && matches!(op, BinOp::Sub | BinOp::Div));
                self.write_wrapped(l, left_paren, f)?;
                f.write_str(sym)?;
                self.write_wrapped(r, right_paren, f)
            }
        }
    }

    fn write_wrapped(&self, e: &Expr, paren: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if paren {
            f.write_str("(")?;
            self.write(e, f)?;
            f.write_str(")")
        } else {
            self.write(e, f)
        }
    }
}

impl<F: Fn(VarId) -> String> fmt::Display for DisplayExpr<'_, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, f)
    }
}
