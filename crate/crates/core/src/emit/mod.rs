//! Solver file writers, plus minimal readers used to check them.
//!
//! * [`emit_lp`]: CPLEX LP text, original names.
//! * [`emit_mps`]: fixed-field MPS with bracket-free aliases. MPS has no
//!   objective sense, so a maximization is written as the minimization of the
//!   negated objective (noted in a comment line).
//! * [`emit_nlp`]: an algebraic listing for any problem, including nonlinear
//!   rows and complementarity pairs. Identifiers are aliases.
//!
//! Aliases replace `[` with `_` and drop `]`, so `zhat[0][3]` becomes
//! `zhat_0_3`. A clash gets the smallest free `_N` suffix.

mod lp;
mod mps;
mod nlp;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::problem::{OptProblem, ProblemError, VarId};

pub use lp::{emit_lp, parse_lp};
pub use mps::{emit_mps, parse_mps};
pub use nlp::{emit_nlp, parse_nlp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmitError {
    #[error("the {format} format cannot carry {what}; use the nlp format instead")]
    Unsupported { format: Format, what: String },
    #[error("the {0} format needs at least one variable")]
    NoVariables(Format),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

fn parse_error(line: usize, message: impl Into<String>) -> EmitError {
    EmitError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Lp,
    Mps,
    Nlp,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Lp, Format::Mps, Format::Nlp];

    pub fn name(self) -> &'static str {
        match self {
            Format::Lp => "lp",
            Format::Mps => "mps",
            Format::Nlp => "nlp",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Format::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown format `{s}` (expected lp, mps or nlp)"))
    }
}

pub fn emit(p: &OptProblem, format: Format) -> Result<String, EmitError> {
    match format {
        Format::Lp => emit_lp(p),
        Format::Mps => emit_mps(p),
        Format::Nlp => Ok(emit_nlp(p)),
    }
}

pub fn parse(text: &str, format: Format) -> Result<OptProblem, EmitError> {
    match format {
        Format::Lp => parse_lp(text),
        Format::Mps => parse_mps(text),
        Format::Nlp => parse_nlp(text),
    }
}

/// `zhat[0][3]` -> `zhat_0_3`
pub fn alias(name: &str) -> String {
    name.chars()
        .filter_map(|c| match c {
            '[' => Some('_'),
            ']' => None,
            c => Some(c),
        })
        .collect()
}

/// Assigns unique file identifiers, in order, avoiding `reserved`.
struct Names {
    used: HashSet<String>,
}

impl Names {
    fn new(reserved: &[&str]) -> Self {
        Self {
            used: reserved.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn claim(&mut self, wanted: String) -> String {
        let mut name = wanted.clone();
        let mut n = 1;
        while name.len() > 255 || self.used.contains(&name) {
            let suffix = format!("_{n}");
            let mut base = wanted.clone();
            base.truncate(255 - suffix.len());
            name = base + &suffix;
            n += 1;
        }
        self.used.insert(name.clone());
        name
    }

    fn claim_all<'a>(&mut self, names: impl Iterator<Item = &'a str>, f: impl Fn(&str) -> String) -> Vec<String> {
        names.map(|n| self.claim(f(n))).collect()
    }
}

/// File identifiers for variables and rows of `p`.
struct Identifiers {
    vars: Vec<String>,
    rows: Vec<String>,
}

impl Identifiers {
    /// Variables and rows live in separate namespaces; `obj` is reserved for
    /// the objective row.
    fn new(p: &OptProblem, f: impl Fn(&str) -> String) -> Self {
        let vars = Names::new(&[]).claim_all(p.variables().iter().map(|v| v.name.as_str()), &f);
        let rows = Names::new(&["obj"]).claim_all(
            p.linear_constraints()
                .iter()
                .map(|c| c.name.as_str())
                .chain(p.nonlinear_constraints().iter().map(|c| c.name.as_str()))
                .chain(p.complementarity_pairs().iter().map(|c| c.name.as_str())),
            &f,
        );
        Self { vars, rows }
    }

    fn var(&self, v: VarId) -> &str {
        &self.vars[v.0]
    }
}

/// Linear objective terms and constant, or the reason there are none.
fn linear_objective(p: &OptProblem, format: Format) -> Result<(Vec<(VarId, f64)>, f64), EmitError> {
    if !p.nonlinear_constraints().is_empty() {
        return Err(EmitError::Unsupported {
            format,
            what: format!("{} nonlinear constraint(s)", p.nonlinear_constraints().len()),
        });
    }
    if !p.complementarity_pairs().is_empty() {
        return Err(EmitError::Unsupported {
            format,
            what: format!("{} complementarity pair(s)", p.complementarity_pairs().len()),
        });
    }
    if p.num_vars() == 0 {
        return Err(EmitError::NoVariables(format));
    }
    let (terms, constant) = p.objective().expr.as_linear().ok_or_else(|| EmitError::Unsupported {
        format,
        what: "a nonlinear objective".into(),
    })?;
    Ok((crate::problem::merge_terms(terms), constant))
}
