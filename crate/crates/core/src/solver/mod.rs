//! Desk-scale exact solving: a dense two-phase simplex, best-bound
//! branch-and-bound over binaries, complementarity by pattern enumeration,
//! and brute-force oracles for ReLU networks and tree ensembles.
//!
//! Everything here is deterministic. The simplex works on a dense tableau,
//! so problems much beyond a few hundred rows and columns get slow.

mod feasibility;
mod oracle;
pub mod simplex;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::problem::{Domain, Expr, ObjectiveSense, OptProblem, Sense, VarId};
use simplex::{LinearProgram, LpSolution, LpStatus, Row};

pub use feasibility::{check_feasibility, ComplementarityResidual, ResidualReport, RowKind, RowResidual};
pub use oracle::{gbt_cell_oracle, relu_pattern_oracle, OracleResult, OutputObjective};

pub const INTEGRALITY_TOL: f64 = 1e-6;
pub const DEFAULT_NODE_LIMIT: usize = 1_000_000;
/// Pattern enumeration over complementarity pairs is refused beyond this.
pub const MAX_COMPLEMENTARITY_PAIRS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::Unbounded => "Unbounded",
            SolveStatus::NodeLimit => "NodeLimit",
            SolveStatus::NumericalFailure => "NumericalFailure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub simplex_iterations: usize,
    pub nodes: usize,
    /// Incumbent objective values in the order they were found, in the
    /// internal minimization sense.
    pub incumbents: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// In the problem's own sense; `None` unless a solution was found.
    pub objective: Option<f64>,
    /// Indexed by variable id; empty when there is no solution.
    pub assignment: Vec<f64>,
    pub stats: SolveStats,
    /// Row multipliers for pure LPs (see [`simplex::LpSolution::duals`]),
    /// for the internal minimization.
    #[serde(skip)]
    pub duals: Vec<f64>,
}

impl SolveResult {
    fn without_solution(status: SolveStatus, stats: SolveStats) -> Self {
        Self {
            status,
            objective: None,
            assignment: Vec::new(),
            stats,
            duals: Vec::new(),
        }
    }

    pub fn value(&self, v: VarId) -> Option<f64> {
        self.assignment.get(v.0).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("the built-in solver handles linear problems only; `{0}` is nonlinear")]
    Nonlinear(String),
    #[error("complementarity pair `{0}` has a nonlinear side")]
    NonlinearComplementarity(String),
    #[error("{0} complementarity pairs exceed the enumeration limit of {MAX_COMPLEMENTARITY_PAIRS}")]
    TooManyPairs(usize),
    #[error("variable `{name}` has an infinite bound; the problem is not finite")]
    NotFinite { name: String },
    #[error("network has {found} ReLU neurons; pattern enumeration is limited to {limit}")]
    TooManyRelus { found: usize, limit: usize },
    #[error("network has a {0} activation; the pattern oracle needs ReLU or linear layers")]
    NotPiecewiseLinear(String),
    #[error("objective has {found} coefficients but the model has {expected} outputs")]
    ObjectiveLength { expected: usize, found: usize },
    #[error("numerical failure in {0}")]
    Numerical(String),
    #[error("threshold grid has {0} cells, above the enumeration limit of 1000000")]
    TooManyCells(u128),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub node_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            node_limit: DEFAULT_NODE_LIMIT,
        }
    }
}

/// Linear view of an [`OptProblem`], in minimization form.
struct Assembled {
    lp: LinearProgram,
    binaries: Vec<usize>,
    /// `+1` to minimize, `-1` when the problem maximizes.
    sign: f64,
    constant: f64,
}

fn assemble(p: &OptProblem) -> Result<Assembled, SolverError> {
    if let Some(c) = p.nonlinear_constraints().first() {
        return Err(SolverError::Nonlinear(c.name.clone()));
    }
    let objective = p.objective();
    let (terms, constant) = objective
        .expr
        .as_linear()
        .ok_or_else(|| SolverError::Nonlinear("objective".into()))?;
    let sign = match objective.sense {
        ObjectiveSense::Minimize => 1.0,
        ObjectiveSense::Maximize => -1.0,
    };
    let n = p.num_vars();
    let mut cost = vec![0.0; n];
    for (v, c) in terms {
        cost[v.0] += sign * c;
    }
    let rows = p
        .linear_constraints()
        .iter()
        .map(|c| Row {
            coefs: c.terms.iter().map(|(v, a)| (v.0, *a)).collect(),
            sense: c.sense,
            rhs: c.rhs,
        })
        .collect();
    let vars = p.variables();
    Ok(Assembled {
        lp: LinearProgram {
            cost,
            rows,
            lb: vars.iter().map(|v| v.lb).collect(),
            ub: vars.iter().map(|v| v.ub).collect(),
        },
        binaries: (0..n).filter(|j| vars[*j].domain == Domain::Binary).collect(),
        sign,
        constant,
    })
}

/// Solves a linear or mixed-binary problem, enumerating complementarity
/// patterns when present.
pub fn solve(p: &OptProblem, opts: &SolveOptions) -> Result<SolveResult, SolverError> {
    let assembled = assemble(p)?;
    let pairs = p.complementarity_pairs();
    if pairs.is_empty() {
        return Ok(finish(&assembled, branch_and_bound(&assembled, opts)));
    }
    if pairs.len() > MAX_COMPLEMENTARITY_PAIRS {
        return Err(SolverError::TooManyPairs(pairs.len()));
    }
    let mut sides = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let a = pair
            .a
            .as_linear()
            .ok_or_else(|| SolverError::NonlinearComplementarity(pair.name.clone()))?;
        let b = pair
            .b
            .as_linear()
            .ok_or_else(|| SolverError::NonlinearComplementarity(pair.name.clone()))?;
        sides.push([a, b]);
    }
    let row = |(terms, constant): &(Vec<(VarId, f64)>, f64), sense| Row {
        coefs: terms.iter().map(|(v, c)| (v.0, *c)).collect(),
        sense,
        rhs: -constant,
    };

    let mut best: Option<BranchOutcome> = None;
    let mut stats = SolveStats::default();
    let mut any_limit = false;
    let mut any_unbounded = false;
    let mut any_failure = false;
    for mask in 0u32..(1 << pairs.len()) {
        let mut sub = Assembled {
            lp: assembled.lp.clone(),
            binaries: assembled.binaries.clone(),
            sign: assembled.sign,
            constant: assembled.constant,
        };
        for (k, [a, b]) in sides.iter().enumerate() {
            // bit set: a = 0, otherwise b = 0
            let (zero, nonneg) = if mask >> k & 1 == 1 { (a, b) } else { (b, a) };
            sub.lp.rows.push(row(zero, Sense::Eq));
            sub.lp.rows.push(row(nonneg, Sense::Ge));
        }
        let outcome = branch_and_bound(&sub, opts);
        stats.simplex_iterations += outcome.stats.simplex_iterations;
        stats.nodes += outcome.stats.nodes;
        match outcome.status {
            SolveStatus::Optimal => {
                let improves = best.as_ref().is_none_or(|b| outcome.objective < b.objective);
                if improves {
                    stats.incumbents.push(outcome.objective);
                    best = Some(outcome);
                }
            }
            SolveStatus::NodeLimit => any_limit = true,
            SolveStatus::Unbounded => any_unbounded = true,
            SolveStatus::NumericalFailure => any_failure = true,
            SolveStatus::Infeasible => {}
        }
    }
    let status = if any_failure {
        SolveStatus::NumericalFailure
    } else if any_unbounded {
        SolveStatus::Unbounded
    } else if any_limit {
        SolveStatus::NodeLimit
    } else if best.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };
    let outcome = match best {
        Some(mut b) if status == SolveStatus::Optimal => {
            b.stats = stats;
            b
        }
        _ => BranchOutcome {
            status,
            objective: f64::NAN,
            x: Vec::new(),
            duals: Vec::new(),
            stats,
        },
    };
    Ok(finish(&assembled, outcome))
}

/// Solves a problem without binaries or complementarity pairs.
pub fn solve_lp(p: &OptProblem) -> Result<SolveResult, SolverError> {
    solve(p, &SolveOptions::default())
}

/// Solves a mixed-binary linear problem by branch-and-bound.
pub fn solve_milp(p: &OptProblem, opts: &SolveOptions) -> Result<SolveResult, SolverError> {
    solve(p, opts)
}

fn finish(a: &Assembled, outcome: BranchOutcome) -> SolveResult {
    if outcome.status != SolveStatus::Optimal {
        return SolveResult::without_solution(outcome.status, outcome.stats);
    }
    let mut x = outcome.x;
    for &j in &a.binaries {
        x[j] = x[j].round();
    }
    SolveResult {
        status: SolveStatus::Optimal,
        objective: Some(a.sign * outcome.objective + a.constant),
        assignment: x,
        stats: outcome.stats,
        duals: outcome.duals,
    }
}

struct BranchOutcome {
    status: SolveStatus,
    /// Internal minimization value, without the objective constant.
    objective: f64,
    x: Vec<f64>,
    duals: Vec<f64>,
    stats: SolveStats,
}

struct Node {
    bound: f64,
    seq: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: the smallest bound, then the oldest node, comes out first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn lp_status(s: LpStatus) -> SolveStatus {
    match s {
        LpStatus::Optimal => SolveStatus::Optimal,
        LpStatus::Infeasible => SolveStatus::Infeasible,
        LpStatus::Unbounded => SolveStatus::Unbounded,
        LpStatus::NumericalFailure => SolveStatus::NumericalFailure,
    }
}

/// Most fractional binary, ties to the lowest index.
fn branching_variable(x: &[f64], binaries: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        if frac > INTEGRALITY_TOL && best.is_none_or(|(_, f)| frac > f) {
            best = Some((j, frac));
        }
    }
    best.map(|(j, _)| j)
}

fn branch_and_bound(a: &Assembled, opts: &SolveOptions) -> BranchOutcome {
    let mut stats = SolveStats::default();
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        lb: a.lp.lb.clone(),
        ub: a.lp.ub.clone(),
    });
    let mut incumbent: Option<LpSolution> = None;
    let mut lp = a.lp.clone();

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            if node.bound >= inc.objective - gap_tolerance(inc.objective) {
                continue;
            }
        }
        if stats.nodes >= opts.node_limit {
            return BranchOutcome {
                status: SolveStatus::NodeLimit,
                objective: f64::NAN,
                x: Vec::new(),
                duals: Vec::new(),
                stats,
            };
        }
        stats.nodes += 1;
        lp.lb = node.lb;
        lp.ub = node.ub;
        let sol = lp.solve();
        stats.simplex_iterations += sol.iterations;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            other => {
                return BranchOutcome {
                    status: lp_status(other),
                    objective: f64::NAN,
                    x: Vec::new(),
                    duals: Vec::new(),
                    stats,
                }
            }
        }
        if let Some(inc) = &incumbent {
            if sol.objective >= inc.objective - gap_tolerance(inc.objective) {
                continue;
            }
        }
        match branching_variable(&sol.x, &a.binaries) {
            None => {
                let sol = polish(&mut lp, &a.binaries, sol, &mut stats);
                stats.incumbents.push(sol.objective);
                incumbent = Some(sol);
            }
            Some(j) => {
                for (lo, hi) in [(0.0, 0.0), (1.0, 1.0)] {
                    let mut lb = lp.lb.clone();
                    let mut ub = lp.ub.clone();
                    lb[j] = lo;
                    ub[j] = hi;
                    seq += 1;
                    heap.push(Node {
                        bound: sol.objective,
                        seq,
                        lb,
                        ub,
                    });
                }
            }
        }
    }

    match incumbent {
        Some(sol) => BranchOutcome {
            status: SolveStatus::Optimal,
            objective: sol.objective,
            x: sol.x,
            duals: sol.duals,
            stats,
        },
        None => BranchOutcome {
            status: SolveStatus::Infeasible,
            objective: f64::NAN,
            x: Vec::new(),
            duals: Vec::new(),
            stats,
        },
    }
}

/// Re-solves with every binary fixed at its rounded value, so a solution
/// whose binaries are integral only up to the tolerance becomes exact. Keeps
/// the original when the fixed problem fails.
fn polish(lp: &mut LinearProgram, binaries: &[usize], sol: LpSolution, stats: &mut SolveStats) -> LpSolution {
    if binaries.iter().all(|&j| sol.x[j] == sol.x[j].round()) {
        return sol;
    }
    let (lb, ub) = (lp.lb.clone(), lp.ub.clone());
    for &j in binaries {
        let v = sol.x[j].round();
        lp.lb[j] = v;
        lp.ub[j] = v;
    }
    let fixed = lp.solve();
    stats.simplex_iterations += fixed.iterations;
    lp.lb = lb;
    lp.ub = ub;
    if fixed.status == LpStatus::Optimal {
        fixed
    } else {
        sol
    }
}

/// Gap zero up to rounding in the last few digits.
fn gap_tolerance(incumbent: f64) -> f64 {
    1e-12 * incumbent.abs().max(1.0)
}

/// Convenience for tests and the CLI: a linear objective as an `Expr`.
pub fn linear_objective(terms: &[(VarId, f64)]) -> Expr {
    Expr::linear(terms, 0.0)
}
