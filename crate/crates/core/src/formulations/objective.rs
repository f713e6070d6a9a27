use std::fmt;

use super::network::parse_indexed;
use super::{formulate, FormulationError, FormulationKind};
use crate::model::{Interval, NetworkDefinition};
use crate::numfmt::g17;
use crate::problem::{Expr, ObjectiveSense, OptProblem, VarId};

/// Linear objective over interface names, e.g. `y[1] - y[0]` or
/// `2*y[0] + 0.5*x[1] - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub sense: ObjectiveSense,
    pub terms: Vec<(String, f64)>,
    pub constant: f64,
}

impl ObjectiveSpec {
    pub fn single(sense: ObjectiveSense, name: impl Into<String>) -> Self {
        Self {
            sense,
            terms: vec![(name.into(), 1.0)],
            constant: 0.0,
        }
    }

    /// `maximize y[a] - y[b]`
    pub fn margin(a: usize, b: usize) -> Self {
        Self {
            sense: ObjectiveSense::Maximize,
            terms: vec![(format!("y[{a}]"), 1.0), (format!("y[{b}]"), -1.0)],
            constant: 0.0,
        }
    }

    /// Parses a sum of `[coef *] name` terms and numeric constants.
    pub fn parse(sense: ObjectiveSense, text: &str) -> Result<Self, FormulationError> {
        let bad = |msg: String| FormulationError::Objective(msg);
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(bad("empty objective".into()));
        }
        // Split at + and - that start a term (not inside an exponent).
        let mut pieces = Vec::new();
        let mut start = 0;
        let bytes = compact.as_bytes();
        for (i, &c) in bytes.iter().enumerate() {
            if (c == b'+' || c == b'-') && i > start && !matches!(bytes[i - 1], b'e' | b'E' | b'*') {
                pieces.push(&compact[start..i]);
                start = i;
            }
        }
        pieces.push(&compact[start..]);

        let mut spec = ObjectiveSpec {
            sense,
            terms: Vec::new(),
            constant: 0.0,
        };
        for piece in pieces {
            let (sign, body) = match piece.as_bytes()[0] {
                b'+' => (1.0, &piece[1..]),
                b'-' => (-1.0, &piece[1..]),
                _ => (1.0, piece),
            };
            if body.is_empty() {
                return Err(bad(format!("dangling sign in `{text}`")));
            }
            let (coef, name) = match body.split_once('*') {
                Some((c, n)) => (c.parse::<f64>().map_err(|_| bad(format!("bad coefficient `{c}`")))?, n),
                None => match body.parse::<f64>() {
                    Ok(c) => {
                        spec.constant += sign * c;
                        continue;
                    }
                    Err(_) => (1.0, body),
                },
            };
            if !coef.is_finite() {
                return Err(bad(format!("coefficient `{coef}` is not finite")));
            }
            if parse_indexed(name).is_none() {
                return Err(FormulationError::UnknownName(name.to_string()));
            }
            spec.terms.push((name.to_string(), sign * coef));
        }
        Ok(spec)
    }
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sense = match self.sense {
            ObjectiveSense::Maximize => "maximize",
            ObjectiveSense::Minimize => "minimize",
        };
        write!(f, "{sense} ")?;
        for (i, (name, c)) in self.terms.iter().enumerate() {
            match (i, *c < 0.0) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if c.abs() != 1.0 {
                write!(f, "{}*", g17(c.abs()))?;
            }
            f.write_str(name)?;
        }
        if self.constant != 0.0 {
            write!(
                f,
                " {} {}",
                if self.constant < 0.0 { "-" } else { "+" },
                g17(self.constant.abs())
            )?;
        }
        Ok(())
    }
}

/// Resolves `x[i]` and `y[j]` against the problem's interface.
fn interface_var(p: &OptProblem, name: &str) -> Result<VarId, FormulationError> {
    let unknown = || FormulationError::UnknownName(name.to_string());
    let (base, idx) = parse_indexed(name).ok_or_else(unknown)?;
    match (base, idx.as_slice()) {
        ("x", [i]) => p.input_vars().get(*i).copied().ok_or_else(unknown),
        ("y", [j]) => p.output_vars().get(*j).copied().ok_or_else(unknown),
        _ => Err(unknown()),
    }
}

/// Installs `spec` as the objective of `p`.
pub fn link_objective(mut p: OptProblem, spec: &ObjectiveSpec) -> Result<OptProblem, FormulationError> {
    let terms = spec
        .terms
        .iter()
        .map(|(name, c)| interface_var(&p, name).map(|v| (v, *c)))
        .collect::<Result<Vec<_>, _>>()?;
    let terms = crate::problem::merge_terms(terms);
    p.set_objective(spec.sense, Expr::linear(&terms, spec.constant))?;
    Ok(p)
}

/// Big-M problem asking how far `y[target] - y[true_label]` can be pushed
/// within an l-infinity ball of `radius` around `x0`, intersected with the
/// network's input box. A positive optimum means an input in the ball is
/// scored higher for `target` than for `true_label`.
pub fn adversarial_problem(
    net: &NetworkDefinition,
    x0: &[f64],
    true_label: usize,
    target: usize,
    radius: f64,
) -> Result<OptProblem, FormulationError> {
    let outputs = net.output_size();
    for label in [true_label, target] {
        if label >= outputs {
            return Err(FormulationError::LabelOutOfRange { label, outputs });
        }
    }
    if true_label == target {
        return Err(FormulationError::SameLabel(target));
    }
    if !radius.is_finite() || radius < 0.0 {
        return Err(FormulationError::BadRadius(radius));
    }
    if x0.len() != net.input_size() {
        return Err(crate::model::ModelError::InputLength {
            expected: net.input_size(),
            found: x0.len(),
        }
        .into());
    }
    let mut boxed = Vec::with_capacity(x0.len());
    for (index, (&value, b)) in x0.iter().zip(net.input_bounds()).enumerate() {
        if !value.is_finite() || !b.contains(value) {
            return Err(FormulationError::OutsideBounds { index, value });
        }
        let ball = Interval::new(value - radius, value + radius);
        boxed.push(ball.intersect(b).expect("x0 lies in both intervals"));
    }
    let local = net.with_input_bounds(boxed)?;
    let p = formulate(&local, FormulationKind::ReluBigM)?;
    link_objective(p, &ObjectiveSpec::margin(target, true_label))
}
