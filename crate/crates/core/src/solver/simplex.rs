//! Two-phase primal simplex on a dense tableau with bounded variables.
//!
//! Variables are shifted so every structural column has lower bound zero
//! (free columns are split); finite upper bounds are handled by the
//! bounded ratio test instead of extra rows. Dantzig pricing is used until
//! [`BLAND_AFTER`] consecutive degenerate pivots, after which Bland's rule
//! takes over for the rest of the phase.

use crate::problem::Sense;

pub const PIVOT_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Phase-one infeasibility left over above this is reported as infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Consecutive degenerate pivots before switching to Bland's rule.
pub const BLAND_AFTER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min cost . x` subject to `rows` and `lb <= x <= ub`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub rows: Vec<Row>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row, in the sign convention of
    /// `min c.x` with `L(x, y) = c.x - y.(Ax - b)`: `y >= 0` on `>=` rows,
    /// `y <= 0` on `<=` rows.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    fn failed(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            duals: Vec::new(),
            iterations,
        }
    }
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| {
            let lhs: f64 = r.coefs.iter().map(|(j, a)| a * x[*j]).sum();
            r.sense.violation(lhs, r.rhs)
        });
        let bounds = x
            .iter()
            .enumerate()
            .map(|(j, v)| (self.lb[j] - v).max(v - self.ub[j]).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    pub fn solve(&self) -> LpSolution {
        if self.lb.iter().zip(&self.ub).any(|(l, u)| l > u) {
            return LpSolution::failed(LpStatus::Infeasible, 0);
        }
        Tableau::build(self).run(self)
    }
}

/// How a structural tableau column maps back to an original variable.
#[derive(Clone, Copy)]
struct ColumnMap {
    var: usize,
    /// `x_var += sign * column value`
    sign: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    Lower,
    Upper,
    /// Nonbasic artificial, never allowed to re-enter.
    Barred,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// Row-major `m x ncols`.
    t: Vec<f64>,
    /// Standardized original rows, kept for refreshing basic values.
    a: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    artificial_start: usize,
    /// Column that formed the initial (identity) basis of each row.
    initial: Vec<usize>,
    row_sign: Vec<f64>,
    columns: Vec<ColumnMap>,
    /// Constant part of each original variable: `x = shift + sum sign*col`.
    shift: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let mut columns = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut shift = vec![0.0; n];
        let mut var_cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for j in 0..n {
            let (l, u) = (lp.lb[j], lp.ub[j]);
            if l.is_finite() {
                shift[j] = l;
                var_cols[j].push(columns.len());
                columns.push(ColumnMap { var: j, sign: 1.0 });
                upper.push(u - l);
            } else if u.is_finite() {
                shift[j] = u;
                var_cols[j].push(columns.len());
                columns.push(ColumnMap { var: j, sign: -1.0 });
                upper.push(f64::INFINITY);
            } else {
                for sign in [1.0, -1.0] {
                    var_cols[j].push(columns.len());
                    columns.push(ColumnMap { var: j, sign });
                    upper.push(f64::INFINITY);
                }
            }
        }
        let n_struct = columns.len();
        let m = lp.rows.len();

        let mut a = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut senses = Vec::with_capacity(m);
        let mut row_sign = Vec::with_capacity(m);
        for row in &lp.rows {
            let mut rhs = row.rhs;
            let mut coefs = Vec::with_capacity(row.coefs.len() + 1);
            for &(j, c) in &row.coefs {
                rhs -= c * shift[j];
                for &col in &var_cols[j] {
                    coefs.push((col, c * columns[col].sign));
                }
            }
            let (sign, sense) = if rhs < 0.0 {
                let flipped = match row.sense {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
                (-1.0, flipped)
            } else {
                (1.0, row.sense)
            };
            for c in &mut coefs {
                c.1 *= sign;
            }
            a.push(coefs);
            b.push(rhs * sign);
            senses.push(sense);
            row_sign.push(sign);
        }

        // Slack/surplus columns, then artificials.
        let mut ncols = n_struct;
        let mut slack_of = vec![None; m];
        for (i, s) in senses.iter().enumerate() {
            if *s != Sense::Eq {
                slack_of[i] = Some(ncols);
                ncols += 1;
            }
        }
        let artificial_start = ncols;
        let mut initial = vec![0; m];
        for (i, s) in senses.iter().enumerate() {
            match s {
                Sense::Le => initial[i] = slack_of[i].expect("slack exists"),
                _ => {
                    initial[i] = ncols;
                    ncols += 1;
                }
            }
        }
        upper.resize(ncols, f64::INFINITY);

        for (i, s) in senses.iter().enumerate() {
            if let Some(col) = slack_of[i] {
                a[i].push((col, if *s == Sense::Le { 1.0 } else { -1.0 }));
            }
            if initial[i] >= artificial_start {
                a[i].push((initial[i], 1.0));
            }
        }

        let mut t = vec![0.0; m * ncols];
        for (i, row) in a.iter().enumerate() {
            for &(col, v) in row {
                t[i * ncols + col] += v;
            }
        }

        let mut cost = vec![0.0; ncols];
        for (col, map) in columns.iter().enumerate() {
            cost[col] = lp.cost[map.var] * map.sign;
        }

        let mut status = vec![Status::Lower; ncols];
        for &col in &initial {
            status[col] = Status::Basic;
        }

        Self {
            m,
            ncols,
            t,
            a,
            beta: b.clone(),
            b,
            basis: initial.clone(),
            status,
            upper,
            cost,
            d: vec![0.0; ncols],
            artificial_start,
            initial,
            row_sign,
            columns,
            shift,
            iterations: 0,
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn price(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
                for (dj, tij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
    }

    /// Recomputes basic values from the basis inverse held in the initial
    /// identity columns.
    fn refresh(&mut self) {
        let mut r = self.b.clone();
        for (i, row) in self.a.iter().enumerate() {
            for &(col, v) in row {
                if self.status[col] == Status::Upper {
                    r[i] -= v * self.upper[col];
                }
            }
        }
        for k in 0..self.m {
            self.beta[k] = (0..self.m).map(|i| self.at(k, self.initial[i]) * r[i]).sum();
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let p = self.t[r * nc + q];
        for v in &mut self.t[r * nc..(r + 1) * nc] {
            *v /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * nc);
        let (pivot_row, after) = rest.split_at_mut(nc);
        for row in before.chunks_exact_mut(nc).chain(after.chunks_exact_mut(nc)) {
            let f = row[q];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * pv;
                }
                row[q] = 0.0;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (dj, pv) in self.d.iter_mut().zip(pivot_row.iter()) {
                *dj -= f * pv;
            }
            self.d[q] = 0.0;
        }
    }

    /// Runs simplex iterations against the current `d`. Returns `Err` with
    /// the terminal status on unboundedness or iteration exhaustion.
    fn iterate(&mut self) -> Result<(), LpStatus> {
        let limit = 50 * (self.m + self.ncols) + 1000;
        let mut degenerate_run = 0;
        let mut bland = false;
        let mut steps = 0;
        loop {
            steps += 1;
            if steps > limit {
                return Err(LpStatus::NumericalFailure);
            }
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.ncols {
                let dj = self.d[j];
                let dir = match self.status[j] {
                    Status::Lower if dj < -OPTIMALITY_TOL && self.upper[j] > 0.0 => 1.0,
                    Status::Upper if dj > OPTIMALITY_TOL => -1.0,
                    _ => continue,
                };
                match entering {
                    None => entering = Some((j, dir)),
                    Some((best, _)) if !bland && dj.abs() > self.d[best].abs() => entering = Some((j, dir)),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(());
            };

            let mut step = self.upper[q];
            let mut leaving: Option<(usize, bool, f64)> = None; // (row, to_upper, |alpha|)
            for i in 0..self.m {
                let alpha = dir * self.at(i, q);
                let col = self.basis[i];
                let (ratio, to_upper) = if alpha > PIVOT_TOL {
                    (self.beta[i].max(0.0) / alpha, false)
                } else if alpha < -PIVOT_TOL && self.upper[col].is_finite() {
                    ((self.upper[col] - self.beta[i]).max(0.0) / -alpha, true)
                } else {
                    continue;
                };
                let better = match leaving {
                    None => ratio < step,
                    Some((r, _, best_alpha)) => {
                        if ratio < step - 1e-12 {
                            true
                        } else if ratio <= step + 1e-12 {
                            if bland {
                                col < self.basis[r]
                            } else {
                                alpha.abs() > best_alpha
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = step.min(ratio);
                    leaving = Some((i, to_upper, alpha.abs()));
                }
            }

            if step.is_infinite() {
                return Err(LpStatus::Unbounded);
            }
            self.iterations += 1;
            if step <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= BLAND_AFTER {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }

            for i in 0..self.m {
                let alpha = dir * self.at(i, q);
                if alpha != 0.0 {
                    self.beta[i] -= alpha * step;
                }
            }
            match leaving {
                None => {
                    self.status[q] = if dir > 0.0 { Status::Upper } else { Status::Lower };
                }
                Some((r, to_upper, _)) => {
                    let out = self.basis[r];
                    self.status[out] = if to_upper { Status::Upper } else { Status::Lower };
                    if out >= self.artificial_start && self.upper[out] == 0.0 {
                        self.status[out] = Status::Barred;
                    }
                    self.beta[r] = if dir > 0.0 { step } else { self.upper[q] - step };
                    self.basis[r] = q;
                    self.status[q] = Status::Basic;
                    self.pivot(r, q);
                }
            }
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpSolution {
        // Phase one: minimize the sum of artificials.
        if self.artificial_start < self.ncols {
            let mut phase_one = vec![0.0; self.ncols];
            for c in &mut phase_one[self.artificial_start..] {
                *c = 1.0;
            }
            self.price(&phase_one);
            if let Err(status) = self.iterate() {
                // Phase one is bounded below by zero.
                let status = if status == LpStatus::Unbounded {
                    LpStatus::NumericalFailure
                } else {
                    status
                };
                return LpSolution::failed(status, self.iterations);
            }
            self.refresh();
            let infeasibility: f64 = (0..self.m)
                .filter(|i| self.basis[*i] >= self.artificial_start)
                .map(|i| self.beta[i])
                .sum();
            let scale = 1.0 + self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if infeasibility > FEASIBILITY_TOL * scale {
                return LpSolution::failed(LpStatus::Infeasible, self.iterations);
            }
            for col in self.artificial_start..self.ncols {
                self.upper[col] = 0.0;
                if self.status[col] != Status::Basic {
                    self.status[col] = Status::Barred;
                }
            }
        }

        let cost = self.cost.clone();
        self.price(&cost);
        if let Err(status) = self.iterate() {
            return LpSolution::failed(status, self.iterations);
        }
        self.refresh();

        let mut col_value = vec![0.0; self.ncols];
        for (j, s) in self.status.iter().enumerate() {
            if *s == Status::Upper {
                col_value[j] = self.upper[j];
            }
        }
        for (i, &col) in self.basis.iter().enumerate() {
            col_value[col] = self.beta[i];
        }
        let mut x = self.shift.clone();
        for (col, map) in self.columns.iter().enumerate() {
            x[map.var] += map.sign * col_value[col];
        }
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(lp.lb[j], lp.ub[j]);
        }

        if lp.max_violation(&x) > FEASIBILITY_TOL {
            return LpSolution::failed(LpStatus::NumericalFailure, self.iterations);
        }

        // y_i = c_init - d_init with zero cost on initial basis columns.
        let duals = (0..self.m)
            .map(|i| -self.d[self.initial[i]] * self.row_sign[i])
            .collect();
        let objective = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpSolution {
            status: LpStatus::Optimal,
            x,
            objective,
            duals,
            iterations: self.iterations,
        }
    }
}
