use nalgebra::{DMatrix, DVector};

use super::{LinearProgram, LpBackend, LpSolution, LpStatus, Relation};
use crate::error::Result;

/// Two-phase dense tableau simplex. Entering columns follow Bland's rule.
///
/// Every row gets an artificial column, so the final tableau holds `B⁻¹`
/// in those columns and the duals fall out of their reduced costs.
#[derive(Clone, Debug)]
pub struct DenseSimplex {
    pub pivot_tol: f64,
    pub opt_tol: f64,
    pub max_pivots: Option<usize>,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex {
            pivot_tol: 1e-9,
            opt_tol: 1e-10,
            max_pivots: None,
        }
    }
}

/// Slack allowed in the first pass of the ratio test.
const HARRIS_TOL: f64 = 1e-9;

/// How an original variable is expressed through nonnegative columns.
#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// `x = lo + s`
    Shift { col: usize, lo: f64 },
    /// `x = hi - s`
    Mirror { col: usize, hi: f64 },
    /// `x = s⁺ - s⁻`
    Split { pos: usize, neg: usize },
}

struct Standard {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    offset: f64,
    flip: Vec<f64>,
    maps: Vec<VarMap>,
}

impl Standard {
    /// `None` when the variable bounds alone are inconsistent.
    fn build(lp: &LinearProgram) -> Option<Standard> {
        let mut maps = Vec::with_capacity(lp.num_vars());
        let mut ncols = 0;
        let mut bound_rows = Vec::new();
        for &(lo, hi) in &lp.bounds {
            if lo > hi {
                return None;
            }
            let map = if lo.is_finite() {
                let col = ncols;
                ncols += 1;
                if hi.is_finite() {
                    bound_rows.push((col, hi - lo));
                }
                VarMap::Shift { col, lo }
            } else if hi.is_finite() {
                let col = ncols;
                ncols += 1;
                VarMap::Mirror { col, hi }
            } else {
                let pos = ncols;
                ncols += 2;
                VarMap::Split { pos, neg: pos + 1 }
            };
            maps.push(map);
        }
        let n_slack = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count() + bound_rows.len();
        let width = ncols + n_slack;

        let mut cost = vec![0.0; width];
        let mut offset = 0.0;
        for (j, map) in maps.iter().enumerate() {
            let c = lp.objective[j];
            match *map {
                VarMap::Shift { col, lo } => {
                    cost[col] += c;
                    offset += c * lo;
                }
                VarMap::Mirror { col, hi } => {
                    cost[col] -= c;
                    offset += c * hi;
                }
                VarMap::Split { pos, neg } => {
                    cost[pos] += c;
                    cost[neg] -= c;
                }
            }
        }

        let mut rows = Vec::with_capacity(lp.constraints.len() + bound_rows.len());
        let mut rhs = Vec::with_capacity(rows.capacity());
        let mut slack = ncols;
        for con in &lp.constraints {
            let mut row = vec![0.0; width];
            let mut b = con.rhs;
            for (j, map) in maps.iter().enumerate() {
                let a = con.coeffs[j];
                if a == 0.0 {
                    continue;
                }
                match *map {
                    VarMap::Shift { col, lo } => {
                        row[col] += a;
                        b -= a * lo;
                    }
                    VarMap::Mirror { col, hi } => {
                        row[col] -= a;
                        b -= a * hi;
                    }
                    VarMap::Split { pos, neg } => {
                        row[pos] += a;
                        row[neg] -= a;
                    }
                }
            }
            match con.relation {
                Relation::Le => {
                    row[slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            rows.push(row);
            rhs.push(b);
        }
        for (col, ub) in bound_rows {
            let mut row = vec![0.0; width];
            row[col] = 1.0;
            row[slack] = 1.0;
            slack += 1;
            rows.push(row);
            rhs.push(ub);
        }

        let mut flip = vec![1.0; rows.len()];
        for (i, row) in rows.iter_mut().enumerate() {
            if rhs[i] < 0.0 {
                flip[i] = -1.0;
                rhs[i] = -rhs[i];
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
        Some(Standard {
            rows,
            rhs,
            cost,
            offset,
            flip,
            maps,
        })
    }
}

struct Tableau {
    m: usize,
    /// Structural + slack columns.
    n: usize,
    width: usize,
    data: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    Limit,
}

impl Tableau {
    fn new(std: &Standard) -> Tableau {
        let m = std.rows.len();
        let n = std.cost.len();
        let width = n + m + 1;
        let mut data = vec![0.0; m * width];
        for (i, row) in std.rows.iter().enumerate() {
            let base = i * width;
            data[base..base + n].copy_from_slice(row);
            data[base + n + i] = 1.0;
            data[base + width - 1] = std.rhs[i];
        }
        Tableau {
            m,
            n,
            width,
            data,
            obj: vec![0.0; width],
            basis: (n..n + m).collect(),
            pivots: 0,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    /// Reduced-cost row for column costs `cost` (length `width - 1`).
    fn price(&mut self, cost: &[f64]) {
        let w = self.width;
        let mut obj = vec![0.0; w];
        obj[..w - 1].copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.data[i * w..(i + 1) * w];
                for (o, v) in obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        self.obj = obj;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.data[r * w + c];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f != 0.0 {
                for (v, pr) in self.data[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.data[i * w + c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pr) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Leaving row by Bland's rule: minimum ratio, ties to the smallest basic index.
    fn bland_row(&self, c: usize, cfg: &DenseSimplex) -> Option<usize> {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.at(i, c);
            if a > cfg.pivot_tol {
                // Round-off can leave tiny negative right-hand sides.
                let ratio = self.rhs(i).max(0.0) / a;
                leave = match leave {
                    Some((r, best)) if ratio > best + 1e-12 => Some((r, best)),
                    Some((r, best)) if ratio >= best - 1e-12 && self.basis[r] < self.basis[i] => Some((r, best)),
                    Some((_, best)) if ratio >= best - 1e-12 => Some((i, best.min(ratio))),
                    _ => Some((i, ratio)),
                };
            }
        }
        leave.map(|(r, _)| r)
    }

    /// Harris two-pass ratio test: among rows within `HARRIS_TOL` of the
    /// minimum ratio, take the largest pivot element.
    fn harris_row(&self, c: usize, cfg: &DenseSimplex) -> Option<usize> {
        let mut bound = f64::INFINITY;
        for i in 0..self.m {
            let a = self.at(i, c);
            if a > cfg.pivot_tol {
                bound = bound.min((self.rhs(i).max(0.0) + HARRIS_TOL) / a);
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.at(i, c);
            if a > cfg.pivot_tol && self.rhs(i).max(0.0) / a <= bound {
                best = match best {
                    Some((r, ar)) if ar > a || (ar == a && self.basis[r] < self.basis[i]) => Some((r, ar)),
                    _ => Some((i, a)),
                };
            }
        }
        best.map(|(r, _)| r)
    }

    /// Rebuild the constraint rows for the current basis from the original
    /// data, discarding accumulated round-off. False if the basis is singular.
    fn reinvert(&mut self, std: &Standard) -> bool {
        let (m, n, w) = (self.m, self.n, self.width);
        let column = |i: usize, col: usize| {
            if col < n {
                std.rows[i][col]
            } else if col - n == i {
                1.0
            } else {
                0.0
            }
        };
        let basis = DMatrix::from_fn(m, m, |i, k| column(i, self.basis[k]));
        let full = DMatrix::from_fn(m, w, |i, j| if j == w - 1 { std.rhs[i] } else { column(i, j) });
        let Some(solved) = basis.lu().solve(&full) else {
            return false;
        };
        if solved.iter().any(|v| !v.is_finite()) {
            return false;
        }
        for i in 0..m {
            for j in 0..w {
                self.data[i * w + j] = solved[(i, j)];
            }
        }
        for (i, &col) in self.basis.iter().enumerate() {
            for k in 0..m {
                self.data[k * w + col] = if k == i { 1.0 } else { 0.0 };
            }
        }
        true
    }

    /// Dual simplex pivots over columns `0..allowed` until every basic value
    /// is at least `-tol`. False if a row has no admissible entering column.
    fn dual_cleanup(&mut self, allowed: usize, cfg: &DenseSimplex, tol: f64, limit: usize) -> bool {
        while self.pivots < limit {
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let v = self.rhs(i);
                if v < -tol && leave.is_none_or(|(_, b)| v < b) {
                    leave = Some((i, v));
                }
            }
            let Some((r, _)) = leave else {
                return true;
            };
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..allowed {
                let a = self.at(r, j);
                if a < -cfg.pivot_tol {
                    let ratio = self.obj[j].max(0.0) / -a;
                    if enter.is_none_or(|(_, b)| ratio < b) {
                        enter = Some((j, ratio));
                    }
                }
            }
            let Some((c, _)) = enter else {
                return false;
            };
            self.pivot(r, c);
        }
        false
    }

    /// One simplex phase, then drift cleanup: rebuild from the original rows,
    /// restore primal feasibility by dual pivots and re-check optimality.
    #[allow(clippy::too_many_arguments)]
    fn phase(
        &mut self,
        std: &Standard,
        cost: &[f64],
        allowed: usize,
        cfg: &DenseSimplex,
        limit: usize,
        feas_tol: f64,
        bounded: bool,
    ) -> Outcome {
        self.price(cost);
        match self.run(allowed, cfg, limit, bounded) {
            Outcome::Optimal => {}
            other => return other,
        }
        for _ in 0..3 {
            if !self.reinvert(std) {
                break;
            }
            self.price(cost);
            let before = self.pivots;
            if !self.dual_cleanup(allowed, cfg, feas_tol, limit) {
                break;
            }
            match self.run(allowed, cfg, limit, bounded) {
                Outcome::Optimal => {}
                other => return other,
            }
            if self.pivots == before {
                break;
            }
        }
        Outcome::Optimal
    }

    /// Simplex iterations over columns `0..allowed`, entering by Bland's
    /// rule. The Harris ratio test keeps pivots well conditioned; after a run
    /// of pivots without objective progress the leaving row switches to
    /// Bland's rule for the rest of the run, which rules out cycling. A
    /// column with no pivot candidate that is not a clean ray (or any such
    /// column, with `bounded`) is passed over until the next pivot.
    fn run(&mut self, allowed: usize, cfg: &DenseSimplex, limit: usize, bounded: bool) -> Outcome {
        let mut skipped = vec![false; allowed];
        let mut stalled = 0;
        let stall = 2 * self.m + 10;
        let mut best = self.obj[self.width - 1];
        loop {
            if self.pivots >= limit {
                return Outcome::Limit;
            }
            let entering = (0..allowed).find(|&j| !skipped[j] && self.obj[j] < -cfg.opt_tol);
            let Some(c) = entering else {
                return Outcome::Optimal;
            };
            let leave = if stalled < stall {
                self.harris_row(c, cfg)
            } else {
                self.bland_row(c, cfg)
            };
            match leave {
                Some(r) => {
                    self.pivot(r, c);
                    skipped.iter_mut().for_each(|s| *s = false);
                    // Progress is measured against the best objective so far;
                    // once stalled, the Bland leaving rule stays on.
                    let z = self.obj[self.width - 1];
                    if stalled < stall && z > best + 1e-12 * (1.0 + best.abs()) {
                        stalled = 0;
                    } else {
                        stalled += 1;
                    }
                    best = best.max(z);
                }
                // Positive entries below the pivot tolerance are round-off, not a ray.
                None if bounded || (0..self.m).any(|i| self.at(i, c) > 0.0) => skipped[c] = true,
                None => return Outcome::Unbounded,
            }
        }
    }
}

/// Primal values and row multipliers read off the final tableau. The
/// reduced cost of artificial `i` is `-y_i`.
fn tableau_solution(tab: &Tableau) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (tab.m, tab.n);
    let mut z = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            z[b] = tab.rhs(i).max(0.0);
        }
    }
    let y = (0..m).map(|i| -tab.obj[n + i]).collect();
    (z, y)
}

/// Recompute the basic solution and multipliers for the final basis from
/// the original rows, discarding accumulated tableau round-off.
fn refine(std: &Standard, tab: &Tableau) -> Option<(Vec<f64>, Vec<f64>)> {
    let (m, n) = (tab.m, tab.n);
    if m == 0 {
        return None;
    }
    let basis = DMatrix::from_fn(m, m, |i, k| {
        let col = tab.basis[k];
        if col < n {
            std.rows[i][col]
        } else if col - n == i {
            1.0
        } else {
            0.0
        }
    });
    let lu = basis.clone().lu();
    let xb = lu.solve(&DVector::from_column_slice(&std.rhs))?;
    let cb = DVector::from_iterator(m, tab.basis.iter().map(|&c| if c < n { std.cost[c] } else { 0.0 }));
    let y = basis.transpose().lu().solve(&cb)?;
    if xb.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    let mut z = vec![0.0; n];
    for (k, &col) in tab.basis.iter().enumerate() {
        if col < n {
            z[col] = xb[k].max(0.0);
        }
    }
    Some((z, y.iter().copied().collect()))
}

impl DenseSimplex {
    fn failed(lp: &LinearProgram, status: LpStatus, pivots: usize) -> LpSolution {
        LpSolution {
            status,
            x: vec![f64::NAN; lp.num_vars()],
            duals: vec![f64::NAN; lp.constraints.len()],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            pivots,
        }
    }
}

impl LpBackend for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution> {
        lp.validate()?;
        let Some(std) = Standard::build(lp) else {
            return Ok(Self::failed(lp, LpStatus::Infeasible, 0));
        };
        let mut tab = Tableau::new(&std);
        let (m, n) = (tab.m, tab.n);
        let limit = self.max_pivots.unwrap_or(1000 + 50 * (m + n));

        let scale = 1.0 + std.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let feas_tol = 1e-13 * scale;

        // Phase 1: minimize the sum of artificials.
        let mut phase1_cost = vec![0.0; n + m];
        phase1_cost[n..].iter_mut().for_each(|c| *c = 1.0);
        match tab.phase(&std, &phase1_cost, n + m, self, limit, feas_tol, true) {
            Outcome::Optimal => {}
            Outcome::Unbounded => unreachable!("phase 1 runs in bounded mode"),
            Outcome::Limit => return Ok(Self::failed(lp, LpStatus::IterationLimit, tab.pivots)),
        }
        if -tab.obj[tab.width - 1] > 1e-9 * scale {
            return Ok(Self::failed(lp, LpStatus::Infeasible, tab.pivots));
        }
        // Drive remaining artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= n {
                if let Some(c) = (0..n).find(|&j| tab.at(r, j).abs() > self.pivot_tol) {
                    tab.pivot(r, c);
                }
            }
        }

        // Phase 2 on the structural and slack columns only.
        let mut phase2_cost = vec![0.0; n + m];
        phase2_cost[..n].copy_from_slice(&std.cost);
        match tab.phase(&std, &phase2_cost, n, self, limit, feas_tol, false) {
            Outcome::Optimal => {}
            Outcome::Unbounded => return Ok(Self::failed(lp, LpStatus::Unbounded, tab.pivots)),
            Outcome::Limit => return Ok(Self::failed(lp, LpStatus::IterationLimit, tab.pivots)),
        }

        let (z, y) = refine(&std, &tab).unwrap_or_else(|| tableau_solution(&tab));
        let x: Vec<f64> = std
            .maps
            .iter()
            .map(|map| match *map {
                VarMap::Shift { col, lo } => lo + z[col],
                VarMap::Mirror { col, hi } => hi - z[col],
                VarMap::Split { pos, neg } => z[pos] - z[neg],
            })
            .collect();
        let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();

        let dual_objective = std.offset + y.iter().zip(&std.rhs).map(|(a, b)| a * b).sum::<f64>();
        let duals = (0..lp.constraints.len()).map(|i| -(y[i] * std.flip[i])).collect();

        Ok(LpSolution {
            status: LpStatus::Optimal,
            x,
            duals,
            objective,
            dual_objective,
            pivots: tab.pivots,
        })
    }
}
