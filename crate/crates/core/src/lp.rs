//! Dense linear programming.
//!
//! Every optimization in the crate goes through [`solve`]. Programs are stated in a
//! general form (free or lower-bounded variables, equality rows and `<=` rows) and
//! reduced to standard form for a two-phase revised simplex method that keeps an
//! explicit basis inverse. Tall programs (many rows, few variables) are solved through
//! their dual so the basis stays small; the primal point is read off the simplex
//! multipliers.
//!
//! Pricing is Dantzig's most-negative reduced cost. After a run of degenerate pivots
//! the solver falls back to Bland's smallest-index rule until the objective moves,
//! which rules out cycling. Every choice is index-ordered, so identical programs give
//! identical pivot sequences and bit-identical results.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_INTERVAL: usize = 64;
const DEGENERATE_STALL: usize = 24;
/// Relative primal residual above which a reported optimum is rejected.
const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("numerical breakdown in simplex: {0}")]
    Numerical(String),
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point; meaningful only when `status` is `Optimal`.
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Which formulation the simplex method runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Route {
    /// Pick the formulation with the smaller basis.
    #[default]
    Auto,
    Primal,
    Dual,
}

/// `minimize c·z  s.t.  A_eq z = b_eq,  A_le z <= b_le,  z_j >= l_j` (free when unset).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    eq_rows: Vec<Vec<f64>>,
    eq_rhs: Vec<f64>,
    le_rows: Vec<Vec<f64>>,
    le_rhs: Vec<f64>,
    lower: Vec<Option<f64>>,
}

impl LinearProgram {
    /// A program over `num_vars` free variables with zero objective and no rows.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            le_rows: Vec::new(),
            le_rhs: Vec::new(),
            lower: vec![None; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rows.len()
    }

    pub fn num_le(&self) -> usize {
        self.le_rows.len()
    }

    pub fn minimize(&mut self, objective: Vec<f64>) -> &mut Self {
        self.objective = objective;
        self
    }

    pub fn maximize(&mut self, objective: Vec<f64>) -> &mut Self {
        self.objective = objective.into_iter().map(|c| -c).collect();
        self
    }

    pub fn set_objective_coeff(&mut self, var: usize, coeff: f64) -> &mut Self {
        self.objective[var] = coeff;
        self
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.le_rows.push(row);
        self.le_rhs.push(rhs);
        self
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_le(row.into_iter().map(|a| -a).collect(), -rhs)
    }

    pub fn set_lower_bound(&mut self, var: usize, bound: f64) -> &mut Self {
        self.lower[var] = Some(bound);
        self
    }

    pub fn set_nonnegative(&mut self, vars: std::ops::Range<usize>) -> &mut Self {
        for j in vars {
            self.lower[j] = Some(0.0);
        }
        self
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars;
        if self.objective.len() != n {
            return Err(LpError::Malformed(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                n
            )));
        }
        let rows = self.eq_rows.iter().chain(self.le_rows.iter());
        for (i, row) in rows.enumerate() {
            if row.len() != n {
                return Err(LpError::Malformed(format!(
                    "row {i} has {} entries for {n} variables",
                    row.len()
                )));
            }
            if row.iter().any(|a| !a.is_finite()) {
                return Err(LpError::Malformed(format!("row {i} has a non-finite coefficient")));
            }
        }
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        if !finite(&self.objective) || !finite(&self.eq_rhs) || !finite(&self.le_rhs) {
            return Err(LpError::Malformed("non-finite objective or right-hand side".into()));
        }
        if self.lower.iter().flatten().any(|l| !l.is_finite()) {
            return Err(LpError::Malformed("non-finite lower bound".into()));
        }
        Ok(())
    }

    fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, z)| a * z).sum::<f64>();
        let mut worst: f64 = 0.0;
        for (row, &b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((dot(row) - b).abs() / (1.0 + b.abs()));
        }
        for (row, &b) in self.le_rows.iter().zip(&self.le_rhs) {
            worst = worst.max((dot(row) - b).max(0.0) / (1.0 + b.abs()));
        }
        for (xj, l) in x.iter().zip(&self.lower) {
            if let Some(l) = l {
                worst = worst.max((l - xj).max(0.0) / (1.0 + l.abs()));
            }
        }
        worst
    }

    fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, z)| c * z).sum()
    }

    /// Lagrangian dual in standard form, over `w >= 0` for every `<=` row and lower bound
    /// and split multipliers for every equality row. One equality row per primal variable.
    fn dual(&self) -> LinearProgram {
        let n = self.num_vars;
        let bounds: Vec<(usize, f64)> = self
            .lower
            .iter()
            .enumerate()
            .filter_map(|(j, l)| l.map(|l| (j, l)))
            .collect();
        let n_le = self.le_rows.len() + bounds.len();
        let n_eq = self.eq_rows.len();
        let dim = n_le + 2 * n_eq;
        let mut dual = LinearProgram::new(dim);
        let mut cost = Vec::with_capacity(dim);
        cost.extend_from_slice(&self.le_rhs);
        cost.extend(bounds.iter().map(|&(_, l)| -l));
        cost.extend_from_slice(&self.eq_rhs);
        cost.extend(self.eq_rhs.iter().map(|b| -b));
        dual.minimize(cost);
        for j in 0..n {
            let mut row = vec![0.0; dim];
            for (i, le) in self.le_rows.iter().enumerate() {
                row[i] = le[j];
            }
            for (k, &(var, _)) in bounds.iter().enumerate() {
                if var == j {
                    row[self.le_rows.len() + k] = -1.0;
                }
            }
            for (e, eq) in self.eq_rows.iter().enumerate() {
                row[n_le + e] = eq[j];
                row[n_le + n_eq + e] = -eq[j];
            }
            dual.add_eq(row, -self.objective[j]);
        }
        dual.set_nonnegative(0..dim);
        dual
    }
}

/// Solve with the automatically chosen formulation.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_via(lp, Route::Auto)
}

pub fn solve_via(lp: &LinearProgram, route: Route) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let route = match route {
        Route::Auto => {
            let rows = lp.num_eq() + lp.num_le();
            let bounded = lp.lower.iter().filter(|l| l.is_some()).count();
            // The dual basis has one row per variable; bounds become dual columns.
            if lp.num_vars > 0 && 2 * lp.num_vars < rows && bounded <= lp.num_vars {
                Route::Dual
            } else {
                Route::Primal
            }
        }
        r => r,
    };
    let solution = match route {
        Route::Dual => solve_dual_route(lp)?,
        _ => {
            let raw = solve_primal_route(lp)?;
            LpSolution {
                status: raw.status,
                objective: if raw.status == LpStatus::Optimal {
                    lp.objective_value(&raw.x)
                } else {
                    0.0
                },
                x: raw.x,
                iterations: raw.iterations,
            }
        }
    };
    if solution.status == LpStatus::Optimal {
        let violation = lp.max_violation(&solution.x);
        if !(violation <= RESIDUAL_TOL) {
            return Err(LpError::Numerical(format!(
                "reported optimum violates constraints by {violation:.3e}"
            )));
        }
    }
    Ok(solution)
}

fn solve_dual_route(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let dual = lp.dual();
    let raw = solve_primal_route(&dual)?;
    match raw.status {
        LpStatus::Optimal => {
            // Multipliers of the dual's equality rows are the primal variables.
            let x = raw.eq_duals;
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective: lp.objective_value(&x),
                x,
                iterations: raw.iterations,
            })
        }
        LpStatus::Unbounded => Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: vec![0.0; lp.num_vars],
            objective: 0.0,
            iterations: raw.iterations,
        }),
        LpStatus::Infeasible => {
            // Primal is infeasible or unbounded; the zero-objective dual is always
            // feasible and is unbounded exactly when the primal is infeasible.
            let mut probe = lp.clone();
            probe.objective = vec![0.0; lp.num_vars];
            let check = solve_primal_route(&probe.dual())?;
            let status = match check.status {
                LpStatus::Optimal => LpStatus::Unbounded,
                LpStatus::Unbounded => LpStatus::Infeasible,
                LpStatus::Infeasible => {
                    return Err(LpError::Numerical(
                        "zero-objective dual reported infeasible".into(),
                    ))
                }
            };
            Ok(LpSolution {
                status,
                x: vec![0.0; lp.num_vars],
                objective: 0.0,
                iterations: raw.iterations + check.iterations,
            })
        }
    }
}

struct RawSolution {
    status: LpStatus,
    x: Vec<f64>,
    eq_duals: Vec<f64>,
    iterations: usize,
}

#[derive(Clone, Copy)]
enum VarMap {
    Shifted { col: usize, lower: f64 },
    Split { pos: usize, neg: usize },
}

/// `min c·x  s.t.  A x = b,  x >= 0` with `b >= 0` and a slack or artificial
/// column available as the starting basis for every row.
struct StandardForm {
    rows: usize,
    cols: usize,
    /// Column-major coefficients.
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    artificial_start: usize,
    initial_basis: Vec<usize>,
    /// Per-row factor mapping standard-form multipliers back to original rows.
    row_factor: Vec<f64>,
    col_scale: Vec<f64>,
    var_map: Vec<VarMap>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let n_eq = lp.eq_rows.len();
        let n_le = lp.le_rows.len();
        let rows = n_eq + n_le;

        let mut var_map = Vec::with_capacity(lp.num_vars);
        let mut structural = 0;
        for l in &lp.lower {
            match l {
                Some(lower) => {
                    var_map.push(VarMap::Shifted { col: structural, lower: *lower });
                    structural += 1;
                }
                None => {
                    var_map.push(VarMap::Split { pos: structural, neg: structural + 1 });
                    structural += 2;
                }
            }
        }

        // Structural block, row-major while scaling.
        let mut dense = vec![0.0; rows * structural];
        let mut rhs = vec![0.0; rows];
        let originals = lp.eq_rows.iter().zip(&lp.eq_rhs).chain(lp.le_rows.iter().zip(&lp.le_rhs));
        for (i, (row, &b)) in originals.enumerate() {
            let mut shifted = b;
            for (j, &a) in row.iter().enumerate() {
                match var_map[j] {
                    VarMap::Shifted { col, lower } => {
                        dense[i * structural + col] = a;
                        shifted -= a * lower;
                    }
                    VarMap::Split { pos, neg } => {
                        dense[i * structural + pos] = a;
                        dense[i * structural + neg] = -a;
                    }
                }
            }
            rhs[i] = shifted;
        }

        let mut row_factor = vec![1.0; rows];
        for i in 0..rows {
            let row = &mut dense[i * structural..(i + 1) * structural];
            let max = row.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            let mut scale = if max > 0.0 { 1.0 / max } else { 1.0 };
            if rhs[i] < 0.0 {
                scale = -scale;
            }
            row.iter_mut().for_each(|a| *a *= scale);
            rhs[i] *= scale;
            row_factor[i] = scale;
        }

        let mut col_scale = vec![1.0; structural];
        for (j, s) in col_scale.iter_mut().enumerate() {
            let max = (0..rows).fold(0.0f64, |m, i| m.max(dense[i * structural + j].abs()));
            if max > 0.0 {
                *s = 1.0 / max;
            }
        }

        // Slack columns for `<=` rows; rows needing an artificial start are those
        // without a slack or whose slack was negated.
        let mut slack_of_row = vec![None; rows];
        let mut cols = structural;
        for i in n_eq..rows {
            slack_of_row[i] = Some(cols);
            cols += 1;
        }
        let artificial_start = cols;
        let mut initial_basis = vec![0; rows];
        let mut artificial_rows = Vec::new();
        for i in 0..rows {
            match slack_of_row[i] {
                Some(s) if row_factor[i] > 0.0 => initial_basis[i] = s,
                _ => {
                    initial_basis[i] = cols;
                    artificial_rows.push(i);
                    cols += 1;
                }
            }
        }

        let mut a = vec![0.0; rows * cols];
        for j in 0..structural {
            for i in 0..rows {
                a[j * rows + i] = dense[i * structural + j] * col_scale[j];
            }
        }
        for i in n_eq..rows {
            let s = slack_of_row[i].unwrap();
            a[s * rows + i] = row_factor[i].signum();
        }
        for (k, &i) in artificial_rows.iter().enumerate() {
            a[(artificial_start + k) * rows + i] = 1.0;
        }

        let mut c = vec![0.0; cols];
        for (j, map) in var_map.iter().enumerate() {
            match *map {
                VarMap::Shifted { col, .. } => c[col] = lp.objective[j] * col_scale[col],
                VarMap::Split { pos, neg } => {
                    c[pos] = lp.objective[j] * col_scale[pos];
                    c[neg] = -lp.objective[j] * col_scale[neg];
                }
            }
        }

        Self {
            rows,
            cols,
            a,
            b: rhs,
            c,
            artificial_start,
            initial_basis,
            row_factor,
            col_scale,
            var_map,
        }
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.a[j * self.rows..(j + 1) * self.rows]
    }
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

struct Simplex<'a> {
    sf: &'a StandardForm,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Row-major basis inverse.
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
    max_iterations: usize,
}

impl<'a> Simplex<'a> {
    fn new(sf: &'a StandardForm) -> Self {
        let m = sf.rows;
        let mut binv = vec![0.0; m * m];
        let mut is_basic = vec![false; sf.cols];
        for (i, &j) in sf.initial_basis.iter().enumerate() {
            // Initial basis columns are unit vectors (+1 by construction).
            binv[i * m + i] = 1.0 / sf.a[j * m + i];
            is_basic[j] = true;
        }
        let xb = sf.b.clone();
        Self {
            sf,
            basis: sf.initial_basis.clone(),
            is_basic,
            binv,
            xb,
            iterations: 0,
            since_refactor: 0,
            max_iterations: 50_000 + 50 * (sf.rows + sf.cols),
        }
    }

    fn multipliers(&self, costs: &[f64]) -> Vec<f64> {
        let m = self.sf.rows;
        let mut pi = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let cb = costs[j];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (p, r) in pi.iter_mut().zip(row) {
                    *p += cb * r;
                }
            }
        }
        pi
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let m = self.sf.rows;
        (0..m)
            .map(|i| {
                self.binv[i * m..(i + 1) * m]
                    .iter()
                    .zip(col)
                    .map(|(b, a)| b * a)
                    .sum()
            })
            .collect()
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.sf.rows;
        if m == 0 {
            return Ok(());
        }
        let basis_matrix = DMatrix::from_fn(m, m, |i, k| self.sf.a[self.basis[k] * m + i]);
        let inverse = basis_matrix
            .try_inverse()
            .ok_or_else(|| LpError::Numerical("singular basis on refactorization".into()))?;
        for i in 0..m {
            for k in 0..m {
                self.binv[i * m + k] = inverse[(i, k)];
            }
        }
        let xb = self.ftran(&self.sf.b);
        for (x, v) in self.xb.iter_mut().zip(xb) {
            if v < -1e-6 * (1.0 + v.abs()) {
                return Err(LpError::Numerical(format!(
                    "basic variable drifted to {v:.3e} after refactorization"
                )));
            }
            *x = v.max(0.0);
        }
        self.since_refactor = 0;
        Ok(())
    }

    /// Basic values and multipliers from LU solves of the final basis, each with one
    /// step of iterative refinement.
    fn final_solve(&mut self, costs: &[f64]) -> Result<Vec<f64>, LpError> {
        let m = self.sf.rows;
        if m == 0 {
            return Ok(Vec::new());
        }
        let basis_matrix = DMatrix::from_fn(m, m, |i, k| self.sf.a[self.basis[k] * m + i]);
        let b = DVector::from_column_slice(&self.sf.b);
        let cb = DVector::from_fn(m, |k, _| costs[self.basis[k]]);
        let singular = || LpError::Numerical("singular final basis".into());
        let lu = basis_matrix.clone().lu();
        let mut xb = lu.solve(&b).ok_or_else(singular)?;
        xb += lu.solve(&(&b - &basis_matrix * &xb)).ok_or_else(singular)?;
        let lut = basis_matrix.transpose().lu();
        let mut pi = lut.solve(&cb).ok_or_else(singular)?;
        pi += lut.solve(&(&cb - basis_matrix.transpose() * &pi)).ok_or_else(singular)?;
        for (x, v) in self.xb.iter_mut().zip(xb.iter()) {
            *x = v.max(0.0);
        }
        Ok(pi.iter().copied().collect())
    }

    fn pivot(&mut self, leave: usize, enter: usize, alpha: &[f64]) {
        let m = self.sf.rows;
        let piv = alpha[leave];
        let (before, rest) = self.binv.split_at_mut(leave * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        pivot_row.iter_mut().for_each(|v| *v /= piv);
        self.xb[leave] /= piv;
        let x_enter = self.xb[leave];
        for (i, &f) in alpha.iter().enumerate() {
            if i == leave || f == 0.0 {
                continue;
            }
            let row = if i < leave {
                &mut before[i * m..(i + 1) * m]
            } else {
                let k = i - leave - 1;
                &mut after[k * m..(k + 1) * m]
            };
            for (r, p) in row.iter_mut().zip(pivot_row.iter()) {
                *r -= f * p;
            }
            self.xb[i] -= f * x_enter;
            if self.xb[i] < 0.0 && self.xb[i] > -FEASIBILITY_TOL {
                self.xb[i] = 0.0;
            }
        }
        self.is_basic[self.basis[leave]] = false;
        self.is_basic[enter] = true;
        self.basis[leave] = enter;
        self.since_refactor += 1;
    }

    fn run_phase(&mut self, costs: &[f64]) -> Result<PhaseOutcome, LpError> {
        let sf = self.sf;
        let m = sf.rows;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            if self.since_refactor >= REFACTOR_INTERVAL {
                self.refactor()?;
            }
            let pi = self.multipliers(costs);

            let mut enter = None;
            let mut best = 0.0;
            for j in 0..sf.artificial_start {
                if self.is_basic[j] {
                    continue;
                }
                let col = sf.column(j);
                let dj = costs[j] - pi.iter().zip(col).map(|(p, a)| p * a).sum::<f64>();
                if dj < -OPTIMALITY_TOL * (1.0 + costs[j].abs()) && dj < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = dj;
                }
            }
            let Some(q) = enter else {
                return Ok(PhaseOutcome::Optimal);
            };

            let alpha = self.ftran(sf.column(q));
            let leave = if bland {
                // Minimum ratio, ties broken by smallest basic variable index.
                let mut choice: Option<(usize, f64)> = None;
                for i in 0..m {
                    if alpha[i] > PIVOT_TOL {
                        let ratio = self.xb[i].max(0.0) / alpha[i];
                        choice = match choice {
                            None => Some((i, ratio)),
                            Some((r, best)) => {
                                if ratio < best - 1e-12
                                    || (ratio <= best + 1e-12 && self.basis[i] < self.basis[r])
                                {
                                    Some((i, ratio))
                                } else {
                                    Some((r, best))
                                }
                            }
                        };
                    }
                }
                choice.map(|(i, _)| i)
            } else {
                // Harris two-pass ratio test.
                let mut bound = f64::INFINITY;
                for i in 0..m {
                    if alpha[i] > PIVOT_TOL {
                        bound = bound.min((self.xb[i].max(0.0) + FEASIBILITY_TOL) / alpha[i]);
                    }
                }
                let mut choice: Option<usize> = None;
                for i in 0..m {
                    if alpha[i] > PIVOT_TOL && self.xb[i].max(0.0) / alpha[i] <= bound {
                        if choice.map_or(true, |r| alpha[i] > alpha[r]) {
                            choice = Some(i);
                        }
                    }
                }
                choice
            };
            let Some(r) = leave else {
                return Ok(PhaseOutcome::Unbounded);
            };

            let step = self.xb[r].max(0.0) / alpha[r];
            if step <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_STALL {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            self.xb[r] = self.xb[r].max(0.0);
            self.pivot(r, q, &alpha);
            self.iterations += 1;
        }
    }

    /// Pivot zero-level artificials out of the basis where a structural column allows.
    fn drive_out_artificials(&mut self) {
        let sf = self.sf;
        let m = sf.rows;
        for r in 0..m {
            if self.basis[r] < sf.artificial_start {
                continue;
            }
            let row = &self.binv[r * m..(r + 1) * m];
            let mut best: Option<(usize, f64)> = None;
            for j in 0..sf.artificial_start {
                if self.is_basic[j] {
                    continue;
                }
                let v: f64 = row.iter().zip(sf.column(j)).map(|(b, a)| b * a).sum();
                if v.abs() > 1e-7 && best.map_or(true, |(_, b)| v.abs() > b.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                self.xb[r] = 0.0;
                let alpha = self.ftran(sf.column(j));
                self.pivot(r, j, &alpha);
            }
        }
    }
}

fn solve_primal_route(lp: &LinearProgram) -> Result<RawSolution, LpError> {
    let sf = StandardForm::build(lp);
    let mut simplex = Simplex::new(&sf);
    let n_eq = lp.eq_rows.len();

    if sf.artificial_start < sf.cols {
        let phase1: Vec<f64> = (0..sf.cols)
            .map(|j| if j >= sf.artificial_start { 1.0 } else { 0.0 })
            .collect();
        if let PhaseOutcome::Unbounded = simplex.run_phase(&phase1)? {
            return Err(LpError::Numerical("phase one reported an unbounded ray".into()));
        }
        simplex.refactor()?;
        let infeasibility: f64 = simplex
            .basis
            .iter()
            .zip(&simplex.xb)
            .filter(|(&j, _)| j >= sf.artificial_start)
            .map(|(_, x)| x)
            .sum();
        let b_scale = sf.b.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        if infeasibility > FEASIBILITY_TOL * b_scale {
            return Ok(RawSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; lp.num_vars],
                eq_duals: vec![0.0; n_eq],
                iterations: simplex.iterations,
            });
        }
        simplex.drive_out_artificials();
        simplex.refactor()?;
    }

    let outcome = simplex.run_phase(&sf.c)?;
    if let PhaseOutcome::Unbounded = outcome {
        return Ok(RawSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; lp.num_vars],
            eq_duals: vec![0.0; n_eq],
            iterations: simplex.iterations,
        });
    }
    let pi = simplex.final_solve(&sf.c)?;

    let mut values = vec![0.0; sf.cols];
    for (&j, &x) in simplex.basis.iter().zip(&simplex.xb) {
        values[j] = x;
    }
    let x = sf
        .var_map
        .iter()
        .map(|map| match *map {
            VarMap::Shifted { col, lower } => lower + values[col] * sf.col_scale[col],
            VarMap::Split { pos, neg } => {
                values[pos] * sf.col_scale[pos] - values[neg] * sf.col_scale[neg]
            }
        })
        .collect();
    let eq_duals = (0..n_eq).map(|i| pi[i] * sf.row_factor[i]).collect();
    Ok(RawSolution {
        status: LpStatus::Optimal,
        x,
        eq_duals,
        iterations: simplex.iterations,
    })
}
