//! Dense bounded-variable simplex.
//!
//! Rows are `aᵀz ≤ b` or `aᵀz = b`; each gets a slack `s` with
//! `aᵀz + s = b`, `s ∈ [0, ∞)` or `[0, 0]`. Variable bounds are handled
//! implicitly: nonbasic variables sit at one of their bounds.
//!
//! The solver keeps the full tableau `B⁻¹[A I]` instead of a factorization.
//! That makes the warm starts the relaxations need cheap: appending a cut row,
//! moving a bound, or swapping the objective each touch the tableau once and
//! resume from the previous basis.
//!
//! A cold start puts every boxed variable at the bound its cost prefers, which
//! is dual feasible, and runs the dual simplex to primal feasibility; costs of
//! variables that cannot be placed that way are temporarily zeroed. The primal
//! simplex then finishes with the true costs.

use crate::error::{Error, Result};

/// Iteration cap across both phases of one solve.
pub const MAX_ITERATIONS: usize = 50_000;
/// Degenerate pivots tolerated before switching to Bland's rule.
pub const DEGENERATE_LIMIT: usize = 1_000;

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
/// Pivots between drift checks.
const CHECK_PERIOD: usize = 100;
const NONBASIC: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    /// Sparse `(column, coefficient)`; repeated columns are summed.
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub sense: RowSense,
}

impl LinearRow {
    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        LinearRow {
            coeffs,
            rhs,
            sense: RowSense::Le,
        }
    }

    pub fn from_dense(coeffs: &[f64], rhs: f64, sense: RowSense) -> Self {
        LinearRow {
            coeffs: coeffs
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(j, a)| (j, *a))
                .collect(),
            rhs,
            sense,
        }
    }

    pub fn activity(&self, z: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * z[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub rows: Vec<LinearRow>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.cost.len();
        for (len, what) in [(self.var_lower.len(), "var_lower"), (self.var_upper.len(), "var_upper")] {
            if len != n {
                return Err(Error::InvalidArgument(format!("{what} has {len} entries, expected {n}")));
            }
        }
        if self.cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("LP cost".into()));
        }
        for j in 0..n {
            if self.var_lower[j] > self.var_upper[j] || self.var_lower[j].is_nan() || self.var_upper[j].is_nan() {
                return Err(Error::InvalidArgument(format!("LP bounds of column {j} are inverted")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::NonFinite(format!("LP row {r} rhs")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(Error::IndexOutOfRange {
                        what: "LP column",
                        index: j,
                        len: n,
                    });
                }
                if !a.is_finite() {
                    return Err(Error::NonFinite(format!("LP row {r}")));
                }
            }
        }
        Ok(())
    }
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
    pub x: Vec<f64>,
    pub objective: f64,
    /// `λ_r` with the Lagrangian `cᵀz + Σ λ_r (a_rᵀz − b_r)`; `λ_r ≥ 0` on `≤`
    /// rows at optimality.
    pub duals: Vec<f64>,
    /// Reduced costs of the structural columns.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

/// Warm-startable simplex state.
#[derive(Debug, Clone)]
pub struct Simplex {
    n_struct: usize,
    rows: Vec<LinearRow>,
    cost: Vec<f64>,
    /// Bounds of all columns: structurals, then one slack per row.
    lower: Vec<f64>,
    upper: Vec<f64>,
    tab: Vec<Vec<f64>>,
    beta: Vec<f64>,
    head: Vec<usize>,
    pos: Vec<usize>,
    value: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
    total_pivots: usize,
    degenerate: usize,
    bland: bool,
    max_iterations: usize,
    status: Option<LpStatus>,
}

impl Simplex {
    pub fn new(problem: &LpProblem) -> Result<Self> {
        problem.validate()?;
        let n = problem.num_vars();
        let mut s = Simplex {
            n_struct: n,
            rows: Vec::with_capacity(problem.rows.len()),
            cost: problem.cost.clone(),
            lower: problem.var_lower.clone(),
            upper: problem.var_upper.clone(),
            tab: Vec::with_capacity(problem.rows.len()),
            beta: Vec::with_capacity(problem.rows.len()),
            head: Vec::with_capacity(problem.rows.len()),
            pos: vec![NONBASIC; n],
            value: vec![0.0; n],
            d: problem.cost.clone(),
            iterations: 0,
            total_pivots: 0,
            degenerate: 0,
            bland: false,
            max_iterations: MAX_ITERATIONS,
            status: None,
        };
        for j in 0..n {
            s.value[j] = s.preferred_bound(j);
        }
        for row in &problem.rows {
            s.push_row(row.clone());
        }
        Ok(s)
    }

    pub fn num_vars(&self) -> usize {
        self.n_struct
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    /// Total pivots performed over the lifetime of this state.
    /// Caps the iterations of each [`Simplex::solve`] call (default
    /// [`MAX_ITERATIONS`]); exceeding it returns [`Error::LpStalled`].
    pub fn set_iteration_limit(&mut self, limit: usize) {
        self.max_iterations = limit.max(1);
    }

    pub fn pivots(&self) -> usize {
        self.total_pivots
    }

    pub fn status(&self) -> Option<LpStatus> {
        self.status
    }

    fn width(&self) -> usize {
        self.n_struct + self.rows.len()
    }

    fn cost_of(&self, j: usize) -> f64 {
        if j < self.n_struct {
            self.cost[j]
        } else {
            0.0
        }
    }

    /// Bound a nonbasic column should sit at given its reduced cost.
    fn preferred_bound(&self, j: usize) -> f64 {
        let (lo, hi) = (self.lower[j], self.upper[j]);
        let prefer_upper = self.d[j] < 0.0;
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => {
                if prefer_upper {
                    hi
                } else {
                    lo
                }
            }
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    }

    fn push_row(&mut self, row: LinearRow) {
        let w = self.width();
        let mut t = vec![0.0; w + 1];
        for &(j, a) in &row.coeffs {
            t[j] += a;
        }
        t[w] = 1.0;
        for &(j, _) in &row.coeffs {
            let i = self.pos[j];
            if i != NONBASIC {
                let f = t[j];
                if f != 0.0 {
                    let src = &self.tab[i];
                    for (tk, sk) in t.iter_mut().zip(src.iter()) {
                        *tk -= f * sk;
                    }
                    t[j] = 0.0;
                }
            }
        }
        for r in self.tab.iter_mut() {
            r.push(0.0);
        }
        let activity: f64 = row.coeffs.iter().map(|&(j, a)| a * self.var_value(j)).sum();
        self.beta.push(row.rhs - activity);
        self.tab.push(t);
        self.head.push(w);
        self.pos.push(self.rows.len());
        self.lower.push(0.0);
        self.upper.push(match row.sense {
            RowSense::Le => f64::INFINITY,
            RowSense::Eq => 0.0,
        });
        self.value.push(0.0);
        self.d.push(0.0);
        self.rows.push(row);
    }

    /// Appends a row; the next [`Simplex::solve`] restores optimality from the
    /// current basis.
    pub fn add_row(&mut self, row: LinearRow) -> Result<()> {
        for &(j, a) in &row.coeffs {
            if j >= self.n_struct {
                return Err(Error::IndexOutOfRange {
                    what: "LP column",
                    index: j,
                    len: self.n_struct,
                });
            }
            if !a.is_finite() {
                return Err(Error::NonFinite("LP row".into()));
            }
        }
        if !row.rhs.is_finite() {
            return Err(Error::NonFinite("LP row rhs".into()));
        }
        self.push_row(row);
        self.status = None;
        Ok(())
    }

    /// Drops rows whose slack is basic and for which `drop(row_index)` holds.
    /// Returns the indices (in the old numbering) of rows that were removed.
    pub fn remove_rows(&mut self, drop: impl Fn(usize) -> bool) -> Vec<usize> {
        let old_rows = self.rows.len();
        let removable: Vec<bool> = (0..old_rows)
            .map(|r| {
                let col = self.n_struct + r;
                self.pos[col] != NONBASIC && drop(r)
            })
            .collect();
        if !removable.iter().any(|&b| b) {
            return Vec::new();
        }
        let removed: Vec<usize> = (0..old_rows).filter(|&r| removable[r]).collect();
        // old column -> kept?
        let w = self.width();
        let keep_col: Vec<bool> = (0..w)
            .map(|c| c < self.n_struct || !removable[c - self.n_struct])
            .collect();
        let mut new_index = vec![NONBASIC; w];
        let mut next = 0;
        for c in 0..w {
            if keep_col[c] {
                new_index[c] = next;
                next += 1;
            }
        }
        let drop_tab_rows: Vec<bool> = (0..old_rows)
            .map(|i| {
                let h = self.head[i];
                h >= self.n_struct && removable[h - self.n_struct]
            })
            .collect();
        let mut tab = Vec::with_capacity(self.tab.len());
        let mut beta = Vec::new();
        let mut head = Vec::new();
        for i in 0..old_rows {
            if drop_tab_rows[i] {
                continue;
            }
            let row: Vec<f64> = self.tab[i]
                .iter()
                .enumerate()
                .filter(|(c, _)| keep_col[*c])
                .map(|(_, v)| *v)
                .collect();
            tab.push(row);
            beta.push(self.beta[i]);
            head.push(new_index[self.head[i]]);
        }
        let filter = |v: &Vec<f64>| -> Vec<f64> {
            v.iter()
                .enumerate()
                .filter(|(c, _)| keep_col[*c])
                .map(|(_, x)| *x)
                .collect()
        };
        self.lower = filter(&self.lower);
        self.upper = filter(&self.upper);
        self.value = filter(&self.value);
        self.d = filter(&self.d);
        self.rows = self
            .rows
            .drain(..)
            .enumerate()
            .filter(|(r, _)| !removable[*r])
            .map(|(_, row)| row)
            .collect();
        self.tab = tab;
        self.beta = beta;
        self.head = head;
        self.pos = vec![NONBASIC; self.width()];
        for (i, &h) in self.head.iter().enumerate() {
            self.pos[h] = i;
        }
        removed
    }

    /// Changes the bounds of a structural column.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) -> Result<()> {
        if j >= self.n_struct {
            return Err(Error::IndexOutOfRange {
                what: "LP column",
                index: j,
                len: self.n_struct,
            });
        }
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidArgument(format!("inverted bounds for column {j}")));
        }
        self.lower[j] = lo;
        self.upper[j] = hi;
        if self.pos[j] == NONBASIC {
            let old = self.value[j];
            let at_bound = old == lo || old == hi || (old == 0.0 && !lo.is_finite() && !hi.is_finite());
            let new = if at_bound { old } else { self.preferred_bound(j) };
            self.move_nonbasic(j, new);
        }
        self.status = None;
        Ok(())
    }

    /// Replaces the objective; the basis is kept.
    pub fn set_cost(&mut self, cost: &[f64]) -> Result<()> {
        if cost.len() != self.n_struct {
            return Err(Error::Dimension {
                expected: self.n_struct,
                found: cost.len(),
            });
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("LP cost".into()));
        }
        self.cost.copy_from_slice(cost);
        self.recompute_reduced_costs();
        self.status = None;
        Ok(())
    }

    fn move_nonbasic(&mut self, j: usize, new: f64) {
        let delta = new - self.value[j];
        if delta != 0.0 {
            for (i, row) in self.tab.iter().enumerate() {
                let a = row[j];
                if a != 0.0 {
                    self.beta[i] -= a * delta;
                }
            }
            self.value[j] = new;
        }
    }

    fn var_value(&self, j: usize) -> f64 {
        match self.pos[j] {
            NONBASIC => self.value[j],
            i => self.beta[i],
        }
    }

    fn recompute_reduced_costs(&mut self) {
        let w = self.width();
        let mut d: Vec<f64> = (0..w).map(|j| self.cost_of(j)).collect();
        for (i, row) in self.tab.iter().enumerate() {
            let cb = self.cost_of(self.head[i]);
            if cb != 0.0 {
                for (dj, t) in d.iter_mut().zip(row.iter()) {
                    *dj -= cb * t;
                }
            }
        }
        for &h in &self.head {
            d[h] = 0.0;
        }
        self.d = d;
    }

    fn recompute_basic_values(&mut self) {
        let n = self.n_struct;
        let nonbasic: Vec<(usize, f64)> = (0..self.width())
            .filter(|&j| self.pos[j] == NONBASIC && self.value[j] != 0.0)
            .map(|j| (j, self.value[j]))
            .collect();
        for (i, row) in self.tab.iter().enumerate() {
            let mut v = 0.0;
            for (r, rowdef) in self.rows.iter().enumerate() {
                v += row[n + r] * rowdef.rhs;
            }
            for &(j, x) in &nonbasic {
                v -= row[j] * x;
            }
            self.beta[i] = v;
        }
    }

    fn original_rows(&self) -> Vec<Vec<f64>> {
        let n = self.n_struct;
        let w = n + self.rows.len();
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let mut t = vec![0.0; w];
                for &(j, a) in &row.coeffs {
                    t[j] += a;
                }
                t[n + r] = 1.0;
                t
            })
            .collect()
    }

    /// Rebuilds the tableau from the original rows for the current basis,
    /// pivoting on the largest remaining entry. A numerically singular basis
    /// is replaced by the all-slack basis.
    fn refactor(&mut self) -> Result<()> {
        let m = self.rows.len();
        let mut mat = self.original_rows();
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut order = vec![0usize; m];
        for _ in 0..m {
            let mut best = (NONBASIC, NONBASIC, 0.0);
            for (r, row) in mat.iter().enumerate() {
                if row_done[r] {
                    continue;
                }
                for (i, &col) in self.head.iter().enumerate() {
                    if !col_done[i] && row[col].abs() > best.2 {
                        best = (r, i, row[col].abs());
                    }
                }
            }
            let (r, i, size) = best;
            if r == NONBASIC || size < 1e-11 {
                self.reset_to_slack_basis();
                return Ok(());
            }
            row_done[r] = true;
            col_done[i] = true;
            order[i] = r;
            let col = self.head[i];
            let piv = mat[r][col];
            let pr: Vec<f64> = mat[r].iter().map(|v| v / piv).collect();
            for (k, row) in mat.iter_mut().enumerate() {
                if k == r {
                    continue;
                }
                let f = row[col];
                if f != 0.0 {
                    for (a, b) in row.iter_mut().zip(&pr) {
                        *a -= f * b;
                    }
                    row[col] = 0.0;
                }
            }
            mat[r] = pr;
            mat[r][col] = 1.0;
        }
        let mut tab = Vec::with_capacity(m);
        for &r in &order {
            tab.push(std::mem::take(&mut mat[r]));
        }
        self.tab = tab;
        self.recompute_basic_values();
        self.recompute_reduced_costs();
        Ok(())
    }

    /// Makes every slack basic; structurals become nonbasic at their current
    /// value clamped into bounds (free columns at the value itself).
    fn reset_to_slack_basis(&mut self) {
        let n = self.n_struct;
        let m = self.rows.len();
        for j in 0..n {
            if self.pos[j] != NONBASIC {
                self.value[j] = self.var_value(j);
            }
            let (lo, hi) = (self.lower[j], self.upper[j]);
            let v = self.value[j];
            self.value[j] = if v < lo {
                lo
            } else if v > hi {
                hi
            } else if lo.is_finite() && hi.is_finite() {
                if v - lo <= hi - v { lo } else { hi }
            } else if lo.is_finite() {
                lo
            } else if hi.is_finite() {
                hi
            } else {
                0.0
            };
            self.pos[j] = NONBASIC;
        }
        self.tab = self.original_rows();
        self.head = (n..n + m).collect();
        for r in 0..m {
            self.pos[n + r] = r;
        }
        self.recompute_basic_values();
        self.recompute_reduced_costs();
    }

    fn pivot(&mut self, r: usize, q: usize, target: f64) {
        let a = self.tab[r][q];
        let delta = (self.beta[r] - target) / a;
        if delta != 0.0 {
            for (i, row) in self.tab.iter().enumerate() {
                let t = row[q];
                if t != 0.0 {
                    self.beta[i] -= t * delta;
                }
            }
        }
        let leaving = self.head[r];
        self.value[leaving] = target;
        self.pos[leaving] = NONBASIC;
        self.value[q] += delta;
        self.beta[r] = self.value[q];
        self.head[r] = q;
        self.pos[q] = r;

        let inv = 1.0 / a;
        let mut pr = std::mem::take(&mut self.tab[r]);
        for v in pr.iter_mut() {
            *v *= inv;
        }
        pr[q] = 1.0;
        for (i, row) in self.tab.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[q];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(pr.iter()) {
                    *x -= f * p;
                }
                row[q] = 0.0;
            }
        }
        let dq = self.d[q];
        if dq != 0.0 {
            for (dj, p) in self.d.iter_mut().zip(pr.iter()) {
                *dj -= dq * p;
            }
        }
        self.d[q] = 0.0;
        self.tab[r] = pr;
        self.iterations += 1;
        self.total_pivots += 1;
    }

    fn tick(&mut self) -> Result<()> {
        if self.iterations >= self.max_iterations {
            return Err(Error::LpStalled(self.iterations));
        }
        Ok(())
    }

    fn infeasibility(&self, i: usize) -> f64 {
        let h = self.head[i];
        let b = self.beta[i];
        let (lo, hi) = (self.lower[h], self.upper[h]);
        if b < lo - PRIMAL_TOL * (1.0 + lo.abs()) {
            lo - b
        } else if b > hi + PRIMAL_TOL * (1.0 + hi.abs()) {
            b - hi
        } else {
            0.0
        }
    }

    /// Every [`CHECK_PERIOD`] pivots, refactors when the rows have drifted.
    /// Returns true if it did, in which case the caller restarts its phase.
    fn maybe_refactor(&mut self) -> Result<bool> {
        if self.iterations == 0 || !self.iterations.is_multiple_of(CHECK_PERIOD) {
            return Ok(false);
        }
        if self.max_row_residual() <= 1e-9 {
            return Ok(false);
        }
        self.refactor()?;
        Ok(true)
    }

    /// Dual simplex until primal feasible. `Some(false)` on infeasibility,
    /// `None` after a refactorization.
    fn dual_phase(&mut self) -> Result<Option<bool>> {
        loop {
            self.tick()?;
            if self.maybe_refactor()? {
                return Ok(None);
            }
            let mut leave = NONBASIC;
            let mut worst = 0.0;
            for i in 0..self.head.len() {
                let v = self.infeasibility(i);
                if v > 0.0 {
                    let better = if self.bland {
                        leave == NONBASIC || self.head[i] < self.head[leave]
                    } else {
                        v > worst
                    };
                    if better {
                        worst = v;
                        leave = i;
                    }
                }
            }
            if leave == NONBASIC {
                return Ok(Some(true));
            }
            let h = self.head[leave];
            let to_lower = self.beta[leave] < self.lower[h];
            let target = if to_lower { self.lower[h] } else { self.upper[h] };
            let row = &self.tab[leave];
            let row_max = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let piv_tol = PIVOT_TOL * row_max.max(1.0);
            // candidates (j, |a|, ratio, relaxed ratio)
            let mut cands: Vec<(usize, f64, f64, f64)> = Vec::new();
            for j in 0..row.len() {
                if self.pos[j] != NONBASIC || self.lower[j] == self.upper[j] {
                    continue;
                }
                let a = row[j];
                if a.abs() < piv_tol {
                    continue;
                }
                // basic value moves by −a·Δ_j
                let dir = if to_lower { -a.signum() } else { a.signum() };
                let v = self.value[j];
                let can = if dir > 0.0 { v < self.upper[j] } else { v > self.lower[j] };
                if !can {
                    continue;
                }
                let dd = (self.d[j] * dir).max(0.0);
                cands.push((j, a.abs(), dd / a.abs(), (dd + DUAL_TOL) / a.abs()));
            }
            let mut enter = NONBASIC;
            let mut best_ratio = f64::INFINITY;
            if self.bland {
                for &(j, _, ratio, _) in &cands {
                    if ratio < best_ratio - 1e-12 {
                        enter = j;
                        best_ratio = ratio;
                    }
                }
            } else {
                let bound = cands.iter().map(|c| c.3).fold(f64::INFINITY, f64::min);
                let mut best_abs = 0.0;
                for &(j, size, ratio, _) in &cands {
                    if ratio <= bound && size > best_abs {
                        enter = j;
                        best_ratio = ratio;
                        best_abs = size;
                    }
                }
            }
            if enter == NONBASIC {
                return Ok(Some(false));
            }
            if best_ratio <= 1e-12 {
                self.note_degenerate();
            }
            self.pivot(leave, enter, target);
        }
    }

    fn note_degenerate(&mut self) {
        self.degenerate += 1;
        if self.degenerate > DEGENERATE_LIMIT {
            self.bland = true;
        }
    }

    /// Primal simplex from a primal feasible basis. `Some(false)` if
    /// unbounded, `None` after a refactorization.
    fn primal_phase(&mut self) -> Result<Option<bool>> {
        loop {
            self.tick()?;
            if self.maybe_refactor()? {
                return Ok(None);
            }
            let mut enter = NONBASIC;
            let mut best = 0.0;
            let mut dir = 0.0;
            for j in 0..self.d.len() {
                if self.pos[j] != NONBASIC {
                    continue;
                }
                let dj = self.d[j];
                let v = self.value[j];
                let (ok, s) = if dj < -DUAL_TOL && v < self.upper[j] {
                    (true, 1.0)
                } else if dj > DUAL_TOL && v > self.lower[j] {
                    (true, -1.0)
                } else {
                    (false, 0.0)
                };
                if ok && (enter == NONBASIC || (!self.bland && dj.abs() > best)) {
                    enter = j;
                    best = dj.abs();
                    dir = s;
                    if self.bland {
                        break;
                    }
                }
            }
            if enter == NONBASIC {
                return Ok(Some(true));
            }
            let q = enter;
            let range = self.upper[q] - self.lower[q];
            let col_max = self.tab.iter().fold(0.0f64, |a, row| a.max(row[q].abs()));
            let piv_tol = PIVOT_TOL * col_max.max(1.0);
            // candidates (row, |a|, step limit, relaxed limit, target)
            let mut cands: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
            for (i, row) in self.tab.iter().enumerate() {
                let a = row[q];
                if a.abs() < piv_tol {
                    continue;
                }
                let rate = -a * dir;
                let h = self.head[i];
                if rate < 0.0 {
                    let lo = self.lower[h];
                    if !lo.is_finite() {
                        continue;
                    }
                    let tol = PRIMAL_TOL * (1.0 + lo.abs());
                    let room = self.beta[i] - lo;
                    cands.push((i, a.abs(), room.max(0.0) / -rate, (room + tol).max(0.0) / -rate, lo));
                } else {
                    let hi = self.upper[h];
                    if !hi.is_finite() {
                        continue;
                    }
                    let tol = PRIMAL_TOL * (1.0 + hi.abs());
                    let room = hi - self.beta[i];
                    cands.push((i, a.abs(), room.max(0.0) / rate, (room + tol).max(0.0) / rate, hi));
                }
            }
            let mut theta = range;
            let mut leave = NONBASIC;
            let mut leave_target = 0.0;
            if self.bland {
                for &(i, _, lim, _, target) in &cands {
                    let take = lim < theta - 1e-12
                        || (lim <= theta + 1e-12 && leave != NONBASIC && self.head[i] < self.head[leave]);
                    if take {
                        theta = lim;
                        leave = i;
                        leave_target = target;
                    }
                }
            } else {
                let bound = cands.iter().map(|c| c.3).fold(f64::INFINITY, f64::min);
                if range > bound {
                    let mut best_abs = 0.0;
                    for &(i, size, lim, _, target) in &cands {
                        if lim <= bound && size > best_abs {
                            best_abs = size;
                            theta = lim;
                            leave = i;
                            leave_target = target;
                        }
                    }
                }
            }
            if !theta.is_finite() {
                return Ok(Some(false));
            }
            if theta <= 1e-12 {
                self.note_degenerate();
            }
            if leave == NONBASIC {
                // bound flip
                let new = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                self.move_nonbasic(q, new);
                self.iterations += 1;
            } else {
                self.pivot(leave, q, leave_target);
            }
        }
    }

    /// Makes nonbasic columns dual feasible by moving them to the preferred
    /// bound; columns that cannot be placed get their cost shifted. Returns
    /// whether any shift happened.
    fn prepare_dual(&mut self) -> bool {
        let mut shifted = false;
        for j in 0..self.width() {
            if self.pos[j] != NONBASIC {
                continue;
            }
            let dj = self.d[j];
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo == hi {
                continue;
            }
            if dj < -DUAL_TOL {
                if hi.is_finite() {
                    self.move_nonbasic(j, hi);
                } else {
                    self.d[j] = 0.0;
                    shifted = true;
                }
            } else if dj > DUAL_TOL {
                if lo.is_finite() {
                    self.move_nonbasic(j, lo);
                } else {
                    self.d[j] = 0.0;
                    shifted = true;
                }
            } else if !lo.is_finite() && !hi.is_finite() {
                self.d[j] = 0.0;
            }
        }
        shifted
    }

    fn primal_feasible(&self) -> bool {
        (0..self.head.len()).all(|i| self.infeasibility(i) == 0.0)
    }

    fn max_row_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            let s = self.var_value(self.n_struct + r);
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * self.var_value(j)).sum::<f64>() + s;
            worst = worst.max((lhs - row.rhs).abs() / (1.0 + row.rhs.abs()));
        }
        worst
    }

    fn run(&mut self) -> Result<LpStatus> {
        self.degenerate = 0;
        self.bland = false;
        loop {
            if !self.primal_feasible() {
                self.prepare_dual();
                match self.dual_phase()? {
                    None => continue,
                    Some(false) => return Ok(LpStatus::Infeasible),
                    Some(true) => self.recompute_reduced_costs(),
                }
            }
            match self.primal_phase()? {
                None => continue,
                Some(false) => return Ok(LpStatus::Unbounded),
                Some(true) => return Ok(LpStatus::Optimal),
            }
        }
    }

    /// Solves from the current basis.
    pub fn solve(&mut self) -> Result<LpStatus> {
        self.iterations = 0;
        let mut status = self.run()?;
        for _ in 0..3 {
            self.recompute_basic_values();
            self.recompute_reduced_costs();
            if status == LpStatus::Optimal && self.primal_feasible() && self.max_row_residual() <= 1e-9 {
                break;
            }
            if status != LpStatus::Optimal {
                break;
            }
            if self.max_row_residual() > 1e-9 {
                self.refactor()?;
            }
            status = self.run()?;
        }
        self.status = Some(status);
        Ok(status)
    }

    /// Current structural values.
    pub fn x(&self) -> Vec<f64> {
        (0..self.n_struct).map(|j| self.var_value(j)).collect()
    }

    pub fn objective(&self) -> f64 {
        (0..self.n_struct).map(|j| self.cost[j] * self.var_value(j)).sum()
    }

    pub fn solution(&self) -> LpSolution {
        let status = self.status.unwrap_or(LpStatus::Infeasible);
        let x = self.x();
        LpSolution {
            status,
            objective: if status == LpStatus::Optimal { self.objective() } else { f64::NAN },
            duals: (0..self.rows.len()).map(|r| self.d[self.n_struct + r]).collect(),
            reduced_costs: self.d[..self.n_struct].to_vec(),
            x,
            iterations: self.iterations,
        }
    }

    /// Slack of row `r` (`b_r − a_rᵀz`).
    pub fn slack(&self, r: usize) -> f64 {
        self.var_value(self.n_struct + r)
    }

    /// Whether the slack of row `r` is basic (the row is not binding in the
    /// basis).
    pub fn row_is_basic(&self, r: usize) -> bool {
        self.pos[self.n_struct + r] != NONBASIC
    }
}

/// One-shot solve.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    let mut s = Simplex::new(problem)?;
    s.solve()?;
    Ok(s.solution())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_var(cost: f64, rows: Vec<LinearRow>) -> LpProblem {
        LpProblem {
            cost: vec![cost],
            rows,
            var_lower: vec![0.0],
            var_upper: vec![f64::INFINITY],
        }
    }

    #[test]
    fn trivial_examples() {
        let sol = solve_lp(&one_var(-1.0, vec![LinearRow::le(vec![(0, 1.0)], 1.0)])).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.objective + 1.0).abs() < 1e-12);
        assert!((sol.duals[0] - 1.0).abs() < 1e-12);

        let sol = solve_lp(&one_var(0.0, vec![LinearRow::le(vec![(0, 1.0)], -1.0)])).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);

        let sol = solve_lp(&one_var(-1.0, vec![])).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_free_columns() {
        // min x + y, x − y = 1, x free, y ∈ [0, 3]
        let p = LpProblem {
            cost: vec![1.0, 1.0],
            rows: vec![LinearRow {
                coeffs: vec![(0, 1.0), (1, -1.0)],
                rhs: 1.0,
                sense: RowSense::Eq,
            }],
            var_lower: vec![f64::NEG_INFINITY, 0.0],
            var_upper: vec![f64::INFINITY, 3.0],
        };
        let sol = solve_lp(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-12, "{sol:?}");
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && sol.x[1].abs() < 1e-12);
    }

    /// Random boxed LP with `n` columns and `m` rows that contains the origin
    /// strictly when `feasible`.
    fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LpProblem {
        let rows = (0..m)
            .map(|_| {
                let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                LinearRow::from_dense(&a, rng.gen_range(-3.0..6.0), RowSense::Le)
            })
            .collect();
        LpProblem {
            cost: (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            rows,
            var_lower: (0..n).map(|_| rng.gen_range(-2.0..0.0)).collect(),
            var_upper: (0..n).map(|_| rng.gen_range(0.5..3.0)).collect(),
        }
    }

    /// Brute-force optimum over all vertices: every choice of `n` active
    /// constraints among rows and bounds.
    pub(crate) fn vertex_oracle(p: &LpProblem) -> Option<f64> {
        let n = p.num_vars();
        let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
        for row in &p.rows {
            let mut a = vec![0.0; n];
            for &(j, v) in &row.coeffs {
                a[j] += v;
            }
            planes.push((a, row.rhs));
        }
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            planes.push((e.clone(), p.var_upper[j]));
            planes.push((e, p.var_lower[j]));
        }
        let total = planes.len();
        let mut best: Option<f64> = None;
        let mut choice: Vec<usize> = (0..n).collect();
        loop {
            if let Some(x) = solve_square(&choice.iter().map(|&k| planes[k].clone()).collect::<Vec<_>>()) {
                let feasible = p.rows.iter().all(|r| r.activity(&x) <= r.rhs + 1e-9)
                    && (0..n).all(|j| x[j] >= p.var_lower[j] - 1e-9 && x[j] <= p.var_upper[j] + 1e-9);
                if feasible {
                    let obj: f64 = p.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
                    best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                }
            }
            // next combination in lexicographic order
            let Some(k) = (0..n).rev().find(|&t| choice[t] < total - n + t) else {
                return best;
            };
            choice[k] += 1;
            for t in (k + 1)..n {
                choice[t] = choice[t - 1] + 1;
            }
        }
    }

    fn solve_square(planes: &[(Vec<f64>, f64)]) -> Option<Vec<f64>> {
        let n = planes.len();
        let mut a: Vec<Vec<f64>> = planes
            .iter()
            .map(|(row, b)| {
                let mut r = row.clone();
                r.push(*b);
                r
            })
            .collect();
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
            if a[p][c].abs() < 1e-10 {
                return None;
            }
            a.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
    }

    fn check_certificate(p: &LpProblem, sol: &LpSolution) {
        // primal feasibility
        for row in &p.rows {
            assert!(row.activity(&sol.x) <= row.rhs + 1e-7);
        }
        // dual feasibility and strong duality:
        // cᵀz = −Σ λ_r b_r + Σ_j d_j z_j with d_j ≥ 0 at lower, ≤ 0 at upper
        let mut dual_obj = 0.0;
        for (row, lam) in p.rows.iter().zip(&sol.duals) {
            assert!(*lam >= -1e-7);
            // complementary slackness
            assert!(lam * (row.rhs - row.activity(&sol.x)) <= 1e-7);
            dual_obj -= lam * row.rhs;
        }
        for j in 0..p.num_vars() {
            let d = sol.reduced_costs[j];
            if d > 1e-7 {
                assert!((sol.x[j] - p.var_lower[j]).abs() < 1e-7);
                dual_obj += d * p.var_lower[j];
            } else if d < -1e-7 {
                assert!((sol.x[j] - p.var_upper[j]).abs() < 1e-7);
                dual_obj += d * p.var_upper[j];
            }
        }
        assert!((dual_obj - sol.objective).abs() <= 1e-7 * (1.0 + sol.objective.abs()), "{dual_obj} vs {}", sol.objective);
    }

    #[test]
    fn matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut optimal = 0;
        for _ in 0..60 {
            let p = random_lp(&mut rng, 4, 6);
            let sol = solve_lp(&p).unwrap();
            match vertex_oracle(&p) {
                Some(v) => {
                    assert_eq!(sol.status, LpStatus::Optimal);
                    assert!((sol.objective - v).abs() <= 1e-7 * (1.0 + v.abs()), "{} vs {v}", sol.objective);
                    check_certificate(&p, &sol);
                    optimal += 1;
                }
                None => assert_eq!(sol.status, LpStatus::Infeasible),
            }
        }
        assert!(optimal > 20);
    }

    #[test]
    fn warm_add_row_matches_cold() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..40 {
            let mut p = random_lp(&mut rng, 5, 4);
            let mut s = Simplex::new(&p).unwrap();
            let first = s.solve().unwrap();
            let extra: Vec<LinearRow> = (0..3)
                .map(|_| {
                    let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-5.0..5.0)).collect();
                    LinearRow::from_dense(&a, rng.gen_range(-1.0..4.0), RowSense::Le)
                })
                .collect();
            for row in &extra {
                s.add_row(row.clone()).unwrap();
            }
            let warm = s.solve().unwrap();
            p.rows.extend(extra);
            let cold = solve_lp(&p).unwrap();
            assert_eq!(warm, cold.status);
            if warm == LpStatus::Optimal {
                assert_eq!(first, LpStatus::Optimal);
                assert!((s.objective() - cold.objective).abs() < 1e-7 * (1.0 + cold.objective.abs()));
                check_certificate(&p, &s.solution());
            }
        }
    }

    #[test]
    fn warm_bounds_and_cost_match_cold() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for _ in 0..40 {
            let mut p = random_lp(&mut rng, 5, 5);
            let mut s = Simplex::new(&p).unwrap();
            s.solve().unwrap();
            let j = rng.gen_range(0..5);
            let mid = 0.5 * (p.var_lower[j] + p.var_upper[j]);
            s.set_bounds(j, p.var_lower[j], mid).unwrap();
            p.var_upper[j] = mid;
            let cost: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            s.set_cost(&cost).unwrap();
            p.cost = cost;
            let warm = s.solve().unwrap();
            let cold = solve_lp(&p).unwrap();
            assert_eq!(warm, cold.status);
            if warm == LpStatus::Optimal {
                assert!((s.objective() - cold.objective).abs() < 1e-7 * (1.0 + cold.objective.abs()));
            }
        }
    }

    #[test]
    fn removing_inactive_rows_keeps_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = random_lp(&mut rng, 4, 8);
            let mut s = Simplex::new(&p).unwrap();
            if s.solve().unwrap() != LpStatus::Optimal {
                continue;
            }
            let before = s.objective();
            let removed = s.remove_rows(|_| true);
            assert_eq!(s.num_rows() + removed.len(), 8);
            assert_eq!(s.solve().unwrap(), LpStatus::Optimal);
            assert!((s.objective() - before).abs() < 1e-7 * (1.0 + before.abs()));
        }
    }

    proptest::proptest! {
        #[test]
        fn valid_cut_never_lowers_minimum(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_lp(&mut rng, 3, 3);
            let base = solve_lp(&p).unwrap();
            proptest::prop_assume!(base.status == LpStatus::Optimal);
            let mut q = p.clone();
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            q.rows.push(LinearRow::from_dense(&a, rng.gen_range(-1.0..1.0), RowSense::Le));
            let cut = solve_lp(&q).unwrap();
            if cut.status == LpStatus::Optimal {
                proptest::prop_assert!(cut.objective >= base.objective - 1e-9);
            }
        }
    }
}
