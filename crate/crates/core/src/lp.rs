//! Dense two-phase simplex solver.
//!
//! Every LP in this crate is tiny (a few hundred rows at most), so the solver
//! works on a dense tableau and always uses Bland's rule for both the
//! entering and leaving variable. Free variables are split into a positive
//! and a negative part. Once an optimal basis is found, the basic solution is
//! recomputed from the original constraint matrix with a QR solve, which
//! removes most of the round-off accumulated by the tableau pivots.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Smallest tableau entry accepted as a pivot.
pub const PIVOT_TOL: f64 = 1e-11;
/// Primal feasibility tolerance shared by every caller.
pub const FEAS_TOL: f64 = 1e-7;
/// Largest accepted value of `n + constraints`.
pub const MAX_SIZE: usize = 5000;

const COST_TOL: f64 = 1e-10;
const RATIO_TIE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("problem too large: {0} variables + constraints (limit {MAX_SIZE})")]
    TooLarge(usize),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Lower bound of a variable. Upper bounds are always `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerBound {
    Zero,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub le_rows: Vec<Vec<f64>>,
    pub le_rhs: Vec<f64>,
    pub lower: Vec<LowerBound>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless `status` is `Optimal`.
    pub x: Vec<f64>,
    /// `NaN` unless `status` is `Optimal`.
    pub objective_value: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn with_status(status: LpStatus) -> Self {
        LpSolution {
            status,
            x: Vec::new(),
            objective_value: f64::NAN,
        }
    }
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            le_rows: Vec::new(),
            le_rhs: Vec::new(),
            lower: vec![LowerBound::Zero; n],
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.eq_rows.len() + self.le_rows.len()
    }

    pub fn free(mut self, j: usize) -> Self {
        self.lower[j] = LowerBound::Free;
        self
    }

    pub fn all_free(mut self) -> Self {
        self.lower.iter_mut().for_each(|l| *l = LowerBound::Free);
        self
    }

    /// Adds `row · x = rhs`.
    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    /// Adds `row · x <= rhs`.
    pub fn le(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.le_rows.push(row);
        self.le_rhs.push(rhs);
        self
    }

    /// Adds `row · x >= rhs`.
    pub fn ge(self, row: Vec<f64>, rhs: f64) -> Self {
        let neg = row.into_iter().map(|v| -v).collect();
        self.le(neg, -rhs)
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if n == 0 {
            return Err(LpError::Dimension("no variables".into()));
        }
        if self.lower.len() != n {
            return Err(LpError::Dimension(format!(
                "{} bounds for {n} variables",
                self.lower.len()
            )));
        }
        if self.eq_rows.len() != self.eq_rhs.len() || self.le_rows.len() != self.le_rhs.len() {
            return Err(LpError::Dimension("row/rhs count mismatch".into()));
        }
        for (i, row) in self.eq_rows.iter().chain(&self.le_rows).enumerate() {
            if row.len() != n {
                return Err(LpError::Dimension(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    row.len()
                )));
            }
        }
        let size = n + self.num_constraints();
        if size > MAX_SIZE {
            return Err(LpError::TooLarge(size));
        }
        Ok(())
    }

    /// Largest constraint or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let eq = self
            .eq_rows
            .iter()
            .zip(&self.eq_rhs)
            .map(|(row, b)| (dot(row) - b).abs());
        let le = self
            .le_rows
            .iter()
            .zip(&self.le_rhs)
            .map(|(row, b)| (dot(row) - b).max(0.0));
        let bounds = x.iter().zip(&self.lower).map(|(v, l)| match l {
            LowerBound::Zero => (-v).max(0.0),
            LowerBound::Free => 0.0,
        });
        eq.chain(le).chain(bounds).fold(0.0, f64::max)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

/// Solves `lp` with the two-phase simplex method under Bland's rule.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let std = StandardForm::from_lp(lp);
    let mut tab = Tableau::phase_one(&std);
    let limit = 50_000 + 200 * (std.rows + std.cols);

    match tab.run(limit)? {
        Outcome::Optimal => {}
        Outcome::Unbounded => {
            return Err(LpError::NumericalBreakdown(
                "phase one reported an unbounded ray".into(),
            ))
        }
    }
    if tab.objective_value() > FEAS_TOL {
        return Ok(LpSolution::with_status(LpStatus::Infeasible));
    }
    tab.drive_out_artificials();
    tab.install_costs(&std.cost);
    match tab.run(limit)? {
        Outcome::Optimal => {}
        Outcome::Unbounded => return Ok(LpSolution::with_status(LpStatus::Unbounded)),
    }

    let z = tab.refined_solution(&std);
    let x = std.recover(&z);
    let violation = lp.max_violation(&x);
    if violation > FEAS_TOL {
        return Err(LpError::NumericalBreakdown(format!(
            "final solution violates constraints by {violation:.3e}"
        )));
    }
    let objective_value = lp.objective_at(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective_value,
    })
}

/// `min cost·z  s.t.  a z = b, z >= 0, b >= 0`.
struct StandardForm {
    rows: usize,
    cols: usize,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    cost: Vec<f64>,
    /// For each original variable, its positive column and optional negative column.
    var_cols: Vec<(usize, Option<usize>)>,
    /// Column whose unit vector can start the basis for each row, if any.
    natural_basis: Vec<Option<usize>>,
}

impl StandardForm {
    fn from_lp(lp: &LinearProgram) -> Self {
        let mut var_cols = Vec::with_capacity(lp.num_vars());
        let mut next = 0;
        for l in &lp.lower {
            match l {
                LowerBound::Zero => {
                    var_cols.push((next, None));
                    next += 1;
                }
                LowerBound::Free => {
                    var_cols.push((next, Some(next + 1)));
                    next += 2;
                }
            }
        }
        let structural = next;
        let cols = structural + lp.le_rows.len();
        let rows = lp.num_constraints();
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; cols];
        for (j, &(p, m)) in var_cols.iter().enumerate() {
            cost[p] = sign * lp.objective[j];
            if let Some(m) = m {
                cost[m] = -sign * lp.objective[j];
            }
        }

        let mut a = Vec::with_capacity(rows);
        let mut b = Vec::with_capacity(rows);
        let mut natural_basis = Vec::with_capacity(rows);
        let expand = |row: &[f64]| {
            let mut out = vec![0.0; cols];
            for (j, &(p, m)) in var_cols.iter().enumerate() {
                out[p] = row[j];
                if let Some(m) = m {
                    out[m] = -row[j];
                }
            }
            out
        };
        for (row, &rhs) in lp.eq_rows.iter().zip(&lp.eq_rhs) {
            let mut r = expand(row);
            let mut rhs = rhs;
            if rhs < 0.0 {
                r.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
            }
            a.push(r);
            b.push(rhs);
            natural_basis.push(None);
        }
        for (k, (row, &rhs)) in lp.le_rows.iter().zip(&lp.le_rhs).enumerate() {
            let mut r = expand(row);
            let slack = structural + k;
            r[slack] = 1.0;
            let mut rhs = rhs;
            if rhs < 0.0 {
                r.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
                natural_basis.push(None);
            } else {
                natural_basis.push(Some(slack));
            }
            a.push(r);
            b.push(rhs);
        }
        StandardForm {
            rows,
            cols,
            a,
            b,
            cost,
            var_cols,
            natural_basis,
        }
    }

    fn recover(&self, z: &[f64]) -> Vec<f64> {
        self.var_cols
            .iter()
            .map(|&(p, m)| z[p] - m.map_or(0.0, |m| z[m]))
            .collect()
    }
}

enum Outcome {
    Optimal,
    Unbounded,
}

/// Dense tableau. Columns `0..cols` are structural and slack columns of the
/// standard form, followed by one artificial column per row that lacked a
/// natural basis column, followed by the right-hand side.
struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced costs, with `-objective` in the last entry.
    cost_row: Vec<f64>,
    basis: Vec<usize>,
    /// Columns `>= first_artificial` are artificial.
    first_artificial: usize,
    /// Artificial columns are barred from entering once phase one ends.
    allow_artificial: bool,
}

impl Tableau {
    fn phase_one(std: &StandardForm) -> Self {
        let n_art = std.natural_basis.iter().filter(|c| c.is_none()).count();
        let width = std.cols + n_art + 1;
        let rhs = width - 1;
        let mut rows = Vec::with_capacity(std.rows);
        let mut basis = Vec::with_capacity(std.rows);
        let mut cost_row = vec![0.0; width];
        let mut next_art = std.cols;
        for i in 0..std.rows {
            let mut row = vec![0.0; width];
            row[..std.cols].copy_from_slice(&std.a[i]);
            row[rhs] = std.b[i];
            match std.natural_basis[i] {
                Some(col) => basis.push(col),
                None => {
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                    // Phase-one cost is the sum of artificials; price it out.
                    for (c, v) in cost_row.iter_mut().zip(&row) {
                        *c -= v;
                    }
                    cost_row[next_art - 1] = 0.0;
                }
            }
            rows.push(row);
        }
        Tableau {
            rows,
            cost_row,
            basis,
            first_artificial: std.cols,
            allow_artificial: true,
        }
    }

    fn width(&self) -> usize {
        self.cost_row.len()
    }

    fn rhs(&self) -> usize {
        self.width() - 1
    }

    fn objective_value(&self) -> f64 {
        -self.cost_row[self.rhs()]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                row[c] = 0.0;
            }
        }
        let f = self.cost_row[c];
        if f != 0.0 {
            self.cost_row
                .iter_mut()
                .zip(&pivot_row)
                .for_each(|(v, p)| *v -= f * p);
            self.cost_row[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn entering(&self) -> Option<usize> {
        let end = if self.allow_artificial {
            self.rhs()
        } else {
            self.first_artificial
        };
        (0..end).find(|&j| self.cost_row[j] < -COST_TOL)
    }

    fn leaving(&self, c: usize) -> Result<Option<usize>, LpError> {
        let rhs = self.rhs();
        let mut best: Option<(usize, f64)> = None;
        let mut max_small = 0.0f64;
        for (i, row) in self.rows.iter().enumerate() {
            let a = row[c];
            if a <= PIVOT_TOL {
                if a > 0.0 {
                    max_small = max_small.max(a);
                }
                continue;
            }
            let ratio = row[rhs].max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    let tie = (ratio - br).abs() <= RATIO_TIE * br.abs().max(1.0);
                    if (tie && self.basis[i] < self.basis[bi]) || (!tie && ratio < br) {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        if best.is_none() && max_small > 1e-13 {
            return Err(LpError::NumericalBreakdown(format!(
                "column {c} only offers pivots below {PIVOT_TOL:e} (largest {max_small:.3e})"
            )));
        }
        Ok(best.map(|(i, _)| i))
    }

    fn run(&mut self, limit: usize) -> Result<Outcome, LpError> {
        for _ in 0..limit {
            let Some(c) = self.entering() else {
                return Ok(Outcome::Optimal);
            };
            match self.leaving(c)? {
                Some(r) => self.pivot(r, c),
                None => return Ok(Outcome::Unbounded),
            }
        }
        Err(LpError::NumericalBreakdown(format!(
            "no convergence after {limit} pivots"
        )))
    }

    /// Pivots zero-level artificials out of the basis, dropping rows that
    /// turn out to be linearly dependent.
    fn drive_out_artificials(&mut self) {
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] < self.first_artificial {
                r += 1;
                continue;
            }
            let candidate = (0..self.first_artificial)
                .filter(|&j| self.rows[r][j].abs() > PIVOT_TOL)
                .max_by(|&a, &b| {
                    self.rows[r][a]
                        .abs()
                        .partial_cmp(&self.rows[r][b].abs())
                        .unwrap()
                });
            match candidate {
                Some(c) => {
                    self.pivot(r, c);
                    r += 1;
                }
                None => {
                    self.rows.remove(r);
                    self.basis.remove(r);
                }
            }
        }
        self.allow_artificial = false;
    }

    fn install_costs(&mut self, cost: &[f64]) {
        let mut row = vec![0.0; self.width()];
        row[..cost.len()].copy_from_slice(cost);
        for (i, &bcol) in self.basis.iter().enumerate() {
            let cb = if bcol < cost.len() { cost[bcol] } else { 0.0 };
            if cb != 0.0 {
                for (v, a) in row.iter_mut().zip(&self.rows[i]) {
                    *v -= cb * a;
                }
            }
        }
        for &bcol in &self.basis {
            row[bcol] = 0.0;
        }
        self.cost_row = row;
    }

    /// Basic solution recomputed from the original rows. Falls back to the
    /// tableau values when the basis matrix is singular or the re-solve
    /// leaves the non-negative orthant.
    fn refined_solution(&self, std: &StandardForm) -> Vec<f64> {
        let rhs = self.rhs();
        let mut z = vec![0.0; std.cols];
        for (i, &bcol) in self.basis.iter().enumerate() {
            if bcol < std.cols {
                z[bcol] = self.rows[i][rhs].max(0.0);
            }
        }
        let k = self.basis.len();
        if k == 0 || k > std.rows {
            return z;
        }
        // Least-squares over all original rows keeps dropped redundant rows consistent.
        let mut bmat = DMatrix::<f64>::zeros(std.rows, k);
        for (col, &bcol) in self.basis.iter().enumerate() {
            for i in 0..std.rows {
                bmat[(i, col)] = std.a[i][bcol];
            }
        }
        let bvec = DVector::from_vec(std.b.clone());
        let qr = bmat.clone().qr();
        let rhs_vec = qr.q().transpose() * &bvec;
        let Some(xb) = qr.r().solve_upper_triangular(&rhs_vec) else {
            return z;
        };
        if xb.iter().any(|v| !v.is_finite() || *v < -1e-9) {
            return z;
        }
        let mut refined = vec![0.0; std.cols];
        for (col, &bcol) in self.basis.iter().enumerate() {
            refined[bcol] = xb[col].max(0.0);
        }
        let resid = |w: &[f64]| {
            (0..std.rows)
                .map(|i| {
                    (std.a[i].iter().zip(w).map(|(a, v)| a * v).sum::<f64>() - std.b[i]).abs()
                })
                .fold(0.0, f64::max)
        };
        if resid(&refined) <= resid(&z) {
            refined
        } else {
            z
        }
    }
}
