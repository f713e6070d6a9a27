//! Brute-force ground truth for the MILP formulations.

use serde::Serialize;

use super::simplex::{LinearProgram, LpStatus, Row};
use super::SolverError;
use crate::model::{Activation, NetworkDefinition, TreeEnsemble};
use crate::problem::{ObjectiveSense, Sense};

pub const MAX_ORACLE_RELUS: usize = 16;
pub const MAX_CELLS: u128 = 1_000_000;

/// Linear objective over a model's raw outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputObjective {
    pub sense: ObjectiveSense,
    pub coefs: Vec<f64>,
}

impl OutputObjective {
    pub fn maximize(coefs: Vec<f64>) -> Self {
        Self {
            sense: ObjectiveSense::Maximize,
            coefs,
        }
    }

    pub fn minimize(coefs: Vec<f64>) -> Self {
        Self {
            sense: ObjectiveSense::Minimize,
            coefs,
        }
    }

    /// `sense` the single output `j` of an `n`-output model.
    pub fn output(sense: ObjectiveSense, j: usize, n: usize) -> Self {
        let mut coefs = vec![0.0; n];
        coefs[j] = 1.0;
        Self { sense, coefs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub value: f64,
    /// A raw input attaining `value`.
    pub argument: Vec<f64>,
    /// Activation patterns or grid cells examined.
    pub enumerated: usize,
    pub feasible: usize,
}

/// Affine function of the raw inputs: `coefs . x + constant`.
#[derive(Clone)]
struct Affine {
    coefs: Vec<f64>,
    constant: f64,
}

impl Affine {
    fn zero(n: usize) -> Self {
        Self {
            coefs: vec![0.0; n],
            constant: 0.0,
        }
    }

    fn add_scaled(&mut self, other: &Affine, w: f64) {
        for (a, b) in self.coefs.iter_mut().zip(&other.coefs) {
            *a += w * b;
        }
        self.constant += w * other.constant;
    }

    fn row(&self, sense: Sense) -> Row {
        Row {
            coefs: self
                .coefs
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, c)| *c != 0.0)
                .collect(),
            sense,
            rhs: -self.constant,
        }
    }
}

/// Optimizes a linear function of the outputs of a ReLU network over its
/// input box by solving one LP per activation pattern. Each LP lives in the
/// raw input space only; the network is composed into affine maps under
/// the pattern's sign constraints.
pub fn relu_pattern_oracle(net: &NetworkDefinition, objective: &OutputObjective) -> Result<OracleResult, SolverError> {
    if objective.coefs.len() != net.output_size() {
        return Err(SolverError::ObjectiveLength {
            expected: net.output_size(),
            found: objective.coefs.len(),
        });
    }
    for layer in net.layers() {
        if !matches!(layer.activation, Activation::Relu | Activation::Linear) {
            return Err(SolverError::NotPiecewiseLinear(layer.activation.name().into()));
        }
    }
    let bounds = net.input_bounds();
    if let Some(i) = bounds.iter().position(|b| !b.is_finite()) {
        return Err(SolverError::NotFinite {
            name: format!("x[{i}]"),
        });
    }
    let m: usize = net
        .layers()
        .iter()
        .filter(|l| l.activation == Activation::Relu)
        .map(|l| l.output_size())
        .sum();
    if m > MAX_ORACLE_RELUS {
        return Err(SolverError::TooManyRelus {
            found: m,
            limit: MAX_ORACLE_RELUS,
        });
    }

    let n = net.input_size();
    let scaling = net.scaling();
    let inputs: Vec<Affine> = (0..n)
        .map(|i| {
            let mut a = Affine::zero(n);
            match scaling {
                Some(s) => {
                    let f = s.input_factor()[i];
                    a.coefs[i] = 1.0 / f;
                    a.constant = -s.input_offset()[i] / f;
                }
                None => a.coefs[i] = 1.0,
            }
            a
        })
        .collect();
    let affines: Vec<_> = net.layers().iter().map(|l| l.affine()).collect();
    let sign = match objective.sense {
        ObjectiveSense::Minimize => 1.0,
        ObjectiveSense::Maximize => -1.0,
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut feasible = 0;
    let patterns = 1usize << m;
    for pattern in 0..patterns {
        let mut rows = Vec::new();
        let mut post = inputs.clone();
        let mut bit = 0;
        for (layer, affine) in net.layers().iter().zip(&affines) {
            let mut next = Vec::with_capacity(affine.out_dim());
            for (row, b) in affine.rows.iter().zip(&affine.bias) {
                let mut pre = Affine::zero(n);
                pre.constant = *b;
                for &(j, w) in row {
                    pre.add_scaled(&post[j], w);
                }
                if layer.activation == Activation::Relu {
                    if pattern >> bit & 1 == 1 {
                        rows.push(pre.row(Sense::Ge));
                        next.push(pre);
                    } else {
                        rows.push(pre.row(Sense::Le));
                        next.push(Affine::zero(n));
                    }
                    bit += 1;
                } else {
                    next.push(pre);
                }
            }
            post = next;
        }
        let mut goal = Affine::zero(n);
        for (j, (c, out)) in objective.coefs.iter().zip(&post).enumerate() {
            let (off, fac) = scaling.map_or((0.0, 1.0), |s| (s.output_offset()[j], s.output_factor()[j]));
            goal.add_scaled(out, c * fac);
            goal.constant += c * off;
        }
        let lp = LinearProgram {
            cost: goal.coefs.iter().map(|c| sign * c).collect(),
            rows,
            lb: bounds.iter().map(|b| b.lo).collect(),
            ub: bounds.iter().map(|b| b.hi).collect(),
        };
        let sol = lp.solve();
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            // Bounded box: anything else is a solver breakdown.
            _ => return Err(SolverError::Numerical(format!("activation pattern {pattern}"))),
        }
        feasible += 1;
        let value = sign * sol.objective + goal.constant;
        let better = match &best {
            None => true,
            Some((v, _)) => sign * value < sign * *v,
        };
        if better {
            best = Some((value, sol.x));
        }
    }
    let (value, argument) = best.expect("the input box is nonempty, so some pattern is feasible");
    Ok(OracleResult {
        value,
        argument,
        enumerated: patterns,
        feasible,
    })
}

/// One representative point per cell of a feature's threshold grid: the
/// lower bound for the leftmost cell, midpoints between consecutive
/// thresholds, and the upper bound for the rightmost cell.
fn representatives(lo: f64, hi: f64, thresholds: &[f64]) -> Vec<f64> {
    let inside: Vec<f64> = thresholds.iter().copied().filter(|t| *t >= lo && *t < hi).collect();
    let mut reps = vec![lo];
    for w in inside.windows(2) {
        reps.push(0.5 * (w[0] + w[1]));
    }
    if !inside.is_empty() {
        reps.push(hi);
    }
    reps
}

/// Optimizes an ensemble's prediction by evaluating one point per cell of
/// the threshold grid. The prediction is constant on each cell.
pub fn gbt_cell_oracle(ens: &TreeEnsemble, sense: ObjectiveSense) -> Result<OracleResult, SolverError> {
    let thresholds = ens.thresholds();
    let reps: Vec<Vec<f64>> = ens
        .feature_bounds()
        .iter()
        .zip(&thresholds)
        .map(|(b, t)| representatives(b.lo, b.hi, t))
        .collect();
    let cells = reps.iter().map(|r| r.len() as u128).product::<u128>();
    if cells > MAX_CELLS {
        return Err(SolverError::TooManyCells(cells));
    }
    let mut index = vec![0usize; reps.len()];
    let mut x: Vec<f64> = reps.iter().map(|r| r[0]).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        let value = ens.predict(&x).expect("representative has the feature count");
        let better = match (&best, sense) {
            (None, _) => true,
            (Some((v, _)), ObjectiveSense::Maximize) => value > *v,
            (Some((v, _)), ObjectiveSense::Minimize) => value < *v,
        };
        if better {
            best = Some((value, x.clone()));
        }
        // Odometer increment over the cartesian product.
        let mut f = 0;
        loop {
            if f == reps.len() {
                let (value, argument) = best.expect("at least one cell");
                return Ok(OracleResult {
                    value,
                    argument,
                    enumerated: cells as usize,
                    feasible: cells as usize,
                });
            }
            index[f] += 1;
            if index[f] < reps[f].len() {
                x[f] = reps[f][index[f]];
                break;
            }
            index[f] = 0;
            x[f] = reps[f][0];
            f += 1;
        }
    }
}
