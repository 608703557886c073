//! Weak learning over shapelets `u = Σ_z α_z Φ(z)`.
//!
//! The weak learner maximizes the weighted edge
//! `Σ_i d_i y_i max_{x∈B_i} k_xᵀα` over either the Gram ball `αᵀKα ≤ 1`
//! or the ℓ1 ball `‖α‖₁ ≤ 1`. Writing the negated edge as `F − G`, with
//! `F` the negative-bag maxima and `G` the positive-bag maxima, both convex,
//! the DC iteration fixes the positive-bag maximizers (linearizing `G`) and
//! solves the remaining convex problem exactly.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{Bag, InstancePool, Label, Sample};
use crate::error::{invalid, Error, Result};
use crate::kernel::{dot, gram_matrix, GramMatrix, KernelRows, KernelSpec};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation};

/// Tolerance on `αᵀKα ≤ 1`.
pub const L2_FEAS_TOL: f64 = 1e-6;
/// Tolerance on `‖α‖₁ ≤ 1`.
pub const L1_FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    /// `αᵀKα ≤ 1`
    #[serde(rename = "l2")]
    L2Gram,
    /// `‖α‖₁ ≤ 1`
    #[serde(rename = "l1")]
    L1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeletCoeffs {
    pub alpha: Vec<f64>,
    pub norm: NormKind,
}

impl ShapeletCoeffs {
    pub fn new(alpha: Vec<f64>, norm: NormKind) -> Self {
        ShapeletCoeffs { alpha, norm }
    }

    pub fn zeros(n: usize, norm: NormKind) -> Self {
        ShapeletCoeffs::new(vec![0.0; n], norm)
    }

    pub fn l1_norm(&self) -> f64 {
        self.alpha.iter().map(|a| a.abs()).sum()
    }

    pub fn gram_norm_sq(&self, gram: &DMatrix<f64>) -> f64 {
        let a = nalgebra::DVector::from_column_slice(&self.alpha);
        (a.transpose() * gram * &a)[(0, 0)]
    }

    /// Whether `alpha` lies in its ball. The Gram matrix is needed for the
    /// L2 kind only.
    pub fn is_feasible(&self, gram: Option<&DMatrix<f64>>) -> bool {
        if self.alpha.iter().any(|a| !a.is_finite()) {
            return false;
        }
        match self.norm {
            NormKind::L1 => self.l1_norm() <= 1.0 + L1_FEAS_TOL,
            NormKind::L2Gram => gram.is_some_and(|g| self.gram_norm_sq(g) <= 1.0 + L2_FEAS_TOL),
        }
    }

    /// Indices and values of the nonzero entries.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.alpha
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(i, a)| (i, *a))
    }
}

/// A distribution over bags inside the capped simplex `0 ≤ d_i ≤ 1/(νm)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightDist(Vec<f64>);

impl WeightDist {
    pub fn uniform(m: usize) -> Self {
        WeightDist(vec![1.0 / m as f64; m])
    }

    pub fn new(d: Vec<f64>, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(invalid("nu", format!("must lie in (0, 1], got {nu}")));
        }
        if d.is_empty() {
            return Err(invalid("d", "empty distribution"));
        }
        let cap = 1.0 / (nu * d.len() as f64);
        let sum: f64 = d.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid("d", format!("must sum to 1, sums to {sum}")));
        }
        if let Some(v) = d.iter().find(|v| !(**v >= 0.0 && **v <= cap + 1e-9)) {
            return Err(invalid("d", format!("entry {v} outside [0, {cap}]")));
        }
        Ok(WeightDist(d))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `max_{x∈bag} Σ_z α_z K(z, x)` and the smallest maximizing index.
pub fn shapelet_score(
    alpha: &ShapeletCoeffs,
    bag: &Bag,
    pool: &InstancePool,
    kernel: &KernelSpec,
) -> Result<(f64, usize)> {
    if bag.is_empty() {
        return Err(Error::Validation("bag is empty".into()));
    }
    if alpha.alpha.len() != pool.len() {
        return Err(Error::LengthMismatch {
            expected: pool.len(),
            got: alpha.alpha.len(),
        });
    }
    let support: Vec<(usize, f64)> = alpha.nonzeros().collect();
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, x) in bag.instances.iter().enumerate() {
        let mut s = 0.0;
        for &(z, a) in &support {
            s += a * kernel.eval(pool.get(z), x)?;
        }
        if s > best.0 {
            best = (s, k);
        }
    }
    Ok(best)
}

/// Weighted edge `Σ_i d_i y_i max_{x∈B_i} k_xᵀα`.
pub fn edge(
    alpha: &ShapeletCoeffs,
    sample: &Sample,
    d: &WeightDist,
    pool: &InstancePool,
    kernel: &KernelSpec,
) -> Result<f64> {
    if d.len() != sample.len() {
        return Err(Error::LengthMismatch {
            expected: sample.len(),
            got: d.len(),
        });
    }
    let mut total = 0.0;
    for (lb, &di) in sample.items().iter().zip(d.as_slice()) {
        if di == 0.0 {
            continue;
        }
        let (score, _) = shapelet_score(alpha, &lb.bag, pool, kernel)?;
        total += di * lb.label.sign() * score;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakConfig {
    pub norm: NormKind,
    /// Stop when the objective decreases by at most this much.
    pub epsilon: f64,
    pub max_outer: usize,
    /// Number of one-hot starting points (best first). 1 runs a single DC descent.
    pub restarts: usize,
}

impl Default for WeakConfig {
    fn default() -> Self {
        WeakConfig {
            norm: NormKind::L1,
            epsilon: 1e-4,
            max_outer: 50,
            restarts: 1,
        }
    }
}

impl WeakConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(invalid("epsilon", "must be positive"));
        }
        if self.max_outer == 0 {
            return Err(invalid("max_outer", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakResult {
    pub alpha: ShapeletCoeffs,
    /// Objective `−edge(α_t)` for the starting point and every accepted step.
    pub objective_trace: Vec<f64>,
    pub edge: f64,
    /// Number of linearized subproblems solved on the winning descent.
    pub iterations: usize,
}

/// Feature coordinates for the span of the pool: `g_x = Λ^{-1/2} Vᵀ k_x`,
/// so that `k_xᵀα = g_xᵀβ` and `αᵀKα = ‖β‖²` with `α = Tᵀβ`.
#[derive(Clone, Debug)]
struct FeatureMap {
    /// Rows of `T`, each of length `P`.
    transform: Vec<Vec<f64>>,
}

impl FeatureMap {
    fn new(gram: &GramMatrix) -> Result<Self> {
        gram.check_psd()?;
        let eig = SymmetricEigen::new(gram.entries.clone());
        let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let p = gram.size();
        let transform = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > 1e-10 * max.max(f64::MIN_POSITIVE))
            .map(|i| {
                let scale = 1.0 / eig.eigenvalues[i].sqrt();
                (0..p).map(|z| scale * eig.eigenvectors[(z, i)]).collect()
            })
            .collect();
        Ok(FeatureMap { transform })
    }

    fn project(&self, k: &[f64]) -> Vec<f64> {
        self.transform.iter().map(|t| dot(t, k)).collect()
    }

    fn alpha_of(&self, beta: &[f64]) -> Vec<f64> {
        let p = self.transform.first().map_or(0, Vec::len);
        let mut alpha = vec![0.0; p];
        for (t, b) in self.transform.iter().zip(beta) {
            for (a, tz) in alpha.iter_mut().zip(t) {
                *a += tz * b;
            }
        }
        alpha
    }
}

/// Precomputed state for repeated weak learning on one sample and pool.
#[derive(Clone, Debug)]
pub struct WeakLearner {
    labels: Vec<Label>,
    rows: Vec<KernelRows>,
    pool_size: usize,
    /// `K(z, z)` per pool entry.
    diag: Vec<f64>,
    features: Option<FeatureMap>,
    gram: Option<GramMatrix>,
    config: WeakConfig,
}

impl WeakLearner {
    pub fn new(sample: &Sample, pool: &InstancePool, kernel: &KernelSpec, config: WeakConfig) -> Result<Self> {
        let rows = KernelRows::compute_all(kernel, pool, sample.bags())?;
        Self::from_rows(sample.labels().collect(), rows, pool, kernel, config)
    }

    pub(crate) fn from_rows(
        labels: Vec<Label>,
        rows: Vec<KernelRows>,
        pool: &InstancePool,
        kernel: &KernelSpec,
        config: WeakConfig,
    ) -> Result<Self> {
        config.validate()?;
        if pool.is_empty() {
            return Err(Error::Validation("instance pool is empty".into()));
        }
        let diag = pool
            .instances()
            .iter()
            .map(|z| kernel.eval(z, z))
            .collect::<Result<Vec<f64>>>()?;
        let (features, gram) = match config.norm {
            NormKind::L2Gram => {
                let gram = gram_matrix(kernel, pool)?;
                (Some(FeatureMap::new(&gram)?), Some(gram))
            }
            NormKind::L1 => (None, None),
        };
        Ok(WeakLearner {
            labels,
            rows,
            pool_size: pool.len(),
            diag,
            features,
            gram,
            config,
        })
    }

    pub fn config(&self) -> &WeakConfig {
        &self.config
    }

    pub fn gram(&self) -> Option<&GramMatrix> {
        self.gram.as_ref()
    }

    pub fn rows(&self) -> &[KernelRows] {
        &self.rows
    }

    fn check_d(&self, d: &WeightDist) -> Result<()> {
        if d.len() != self.labels.len() {
            return Err(Error::LengthMismatch {
                expected: self.labels.len(),
                got: d.len(),
            });
        }
        Ok(())
    }

    /// Scores `h(B_i)` for every bag.
    pub fn scores(&self, alpha: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.max_score(alpha).0).collect()
    }

    pub fn edge(&self, alpha: &[f64], d: &WeightDist) -> f64 {
        self.rows
            .iter()
            .zip(&self.labels)
            .zip(d.as_slice())
            .filter(|(_, &di)| di != 0.0)
            .map(|((r, y), di)| di * y.sign() * r.max_score(alpha).0)
            .sum()
    }

    /// All signed one-hot candidates `(edge, pool index, sign)`, scaled into
    /// the active ball, in pool order with `+` before `−`.
    fn one_hot_candidates(&self, d: &WeightDist) -> Vec<(f64, usize, f64)> {
        let p = self.pool_size;
        let mut plus = vec![0.0; p];
        let mut minus = vec![0.0; p];
        let mut maxs = vec![f64::NEG_INFINITY; p];
        let mut mins = vec![f64::INFINITY; p];
        for ((rows, y), &di) in self.rows.iter().zip(&self.labels).zip(d.as_slice()) {
            if di == 0.0 {
                continue;
            }
            maxs.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            mins.iter_mut().for_each(|v| *v = f64::INFINITY);
            for row in rows.rows() {
                for z in 0..p {
                    maxs[z] = maxs[z].max(row[z]);
                    mins[z] = mins[z].min(row[z]);
                }
            }
            let w = di * y.sign();
            for z in 0..p {
                plus[z] += w * maxs[z];
                minus[z] -= w * mins[z];
            }
        }
        let mut out = Vec::with_capacity(2 * p);
        for z in 0..p {
            let scale = match self.config.norm {
                NormKind::L1 => 1.0,
                NormKind::L2Gram => {
                    if self.diag[z] <= 0.0 {
                        continue;
                    }
                    1.0 / self.diag[z].sqrt()
                }
            };
            out.push((scale * plus[z], z, scale));
            out.push((scale * minus[z], z, -scale));
        }
        out
    }

    /// Best signed one-hot shapelet; ties go to the lowest pool index, then `+`.
    pub fn init_one_hot(&self, d: &WeightDist) -> Result<ShapeletCoeffs> {
        self.check_d(d)?;
        let candidates = self.one_hot_candidates(d);
        let best = ranked(&candidates)
            .into_iter()
            .next()
            .ok_or_else(|| Error::Kernel("no pool instance has positive self-similarity".into()))?;
        let mut alpha = vec![0.0; self.pool_size];
        alpha[best.1] = best.2;
        Ok(ShapeletCoeffs::new(alpha, self.config.norm))
    }

    /// Linearization constant `c = Σ_{k:y_k=+1} d_k k_{x*_k}`.
    fn linear_term(&self, maximizers: &[Option<usize>], d: &WeightDist) -> Result<Vec<f64>> {
        self.check_d(d)?;
        if maximizers.len() != self.labels.len() {
            return Err(Error::LengthMismatch {
                expected: self.labels.len(),
                got: maximizers.len(),
            });
        }
        let mut c = vec![0.0; self.pool_size];
        for (i, (y, m)) in self.labels.iter().zip(maximizers).enumerate() {
            if *y != Label::Positive {
                continue;
            }
            let x = m.ok_or_else(|| Error::Validation(format!("positive bag {i} has no fixed maximizer")))?;
            if x >= self.rows[i].n_instances() {
                return Err(Error::Validation(format!("maximizer {x} out of range for bag {i}")));
            }
            let di = d.as_slice()[i];
            for (cz, k) in c.iter_mut().zip(self.rows[i].row(x)) {
                *cz += di * k;
            }
        }
        Ok(c)
    }

    /// Value of the linearized objective `−cᵀα + Σ_{r:y_r=−1} d_r max_x k_xᵀα`.
    fn linearized_value(&self, c: &[f64], alpha: &[f64], d: &WeightDist) -> f64 {
        let neg: f64 = self
            .rows
            .iter()
            .zip(&self.labels)
            .zip(d.as_slice())
            .filter(|((_, y), &di)| **y == Label::Negative && di != 0.0)
            .map(|((r, _), di)| di * r.max_score(alpha).0)
            .sum();
        neg - dot(c, alpha)
    }

    fn maximizers(&self, alpha: &[f64]) -> Vec<Option<usize>> {
        self.rows
            .iter()
            .zip(&self.labels)
            .map(|(r, y)| (*y == Label::Positive).then(|| r.max_score(alpha).1))
            .collect()
    }

    /// Solve the ℓ1-ball linearized subproblem as an LP over split variables
    /// `α = α⁺ − α⁻`, adding negative-bag rows `k_xᵀα ≤ λ_r` lazily until
    /// none is violated.
    pub fn subproblem_l1(
        &self,
        maximizers: &[Option<usize>],
        d: &WeightDist,
        hint: Option<&[f64]>,
    ) -> Result<(ShapeletCoeffs, f64)> {
        let c = self.linear_term(maximizers, d)?;
        let p = self.pool_size;
        let negatives: Vec<(usize, f64)> = self
            .labels
            .iter()
            .zip(d.as_slice())
            .enumerate()
            .filter(|(_, (y, &di))| **y == Label::Negative && di > 0.0)
            .map(|(i, (_, &di))| (i, di))
            .collect();
        let nvars = 2 * p + negatives.len();
        let mut objective = vec![0.0; nvars];
        for z in 0..p {
            objective[z] = -c[z];
            objective[p + z] = c[z];
        }
        for (r, &(_, dr)) in negatives.iter().enumerate() {
            objective[2 * p + r] = dr;
        }
        let zero = vec![0.0; p];
        let start = hint.unwrap_or(&zero);
        let mut active: Vec<(usize, usize)> = negatives
            .iter()
            .enumerate()
            .map(|(r, &(i, _))| (r, self.rows[i].max_score(start).1))
            .collect();

        let max_rounds = 1 + self.rows.iter().map(KernelRows::n_instances).sum::<usize>();
        for _ in 0..max_rounds {
            let mut lp = LinearProgram::new(objective.clone());
            for r in 0..negatives.len() {
                lp.bound(2 * p + r, f64::NEG_INFINITY, f64::INFINITY);
            }
            let mut ball = vec![1.0; 2 * p];
            ball.resize(nvars, 0.0);
            lp.constrain(ball, Relation::Le, 1.0);
            for &(r, x) in &active {
                let k = self.rows[negatives[r].0].row(x);
                let mut row = vec![0.0; nvars];
                row[..p].copy_from_slice(k);
                for z in 0..p {
                    row[p + z] = -k[z];
                }
                row[2 * p + r] = -1.0;
                lp.constrain(row, Relation::Le, 0.0);
            }
            let sol = solve_lp(&lp)?;
            if sol.status != LpStatus::Optimal {
                return Err(Error::Solver(format!(
                    "l1 weak-learning subproblem ended with status {:?}",
                    sol.status
                )));
            }
            let alpha: Vec<f64> = (0..p).map(|z| sol.x[z] - sol.x[p + z]).collect();
            let mut added = false;
            for (r, &(i, _)) in negatives.iter().enumerate() {
                let (s, x) = self.rows[i].max_score(&alpha);
                if s > sol.x[2 * p + r] + 1e-9 && !active.contains(&(r, x)) {
                    active.push((r, x));
                    added = true;
                }
            }
            if !added {
                let alpha = project_l1(alpha);
                let value = self.linearized_value(&c, &alpha, d);
                return Ok((ShapeletCoeffs::new(alpha, NormKind::L1), value));
            }
        }
        Err(Error::Solver("l1 constraint generation did not converge".into()))
    }

    /// Solve the Gram-ball linearized subproblem.
    ///
    /// In feature coordinates the problem is
    /// `min_{‖β‖≤1} −c̃ᵀβ + Σ_r d_r max_{x∈B_r} g_xᵀβ`, whose dual is the
    /// minimum-norm problem `max_μ −‖c̃ − Σ_r d_r G_r μ_r‖` over one simplex
    /// per negative bag. The dual is solved by accelerated projected
    /// gradient and `β = v/‖v‖` recovered from the residual `v`.
    pub fn subproblem_l2(&self, maximizers: &[Option<usize>], d: &WeightDist) -> Result<(ShapeletCoeffs, f64)> {
        let fm = self
            .features
            .as_ref()
            .ok_or_else(|| invalid("norm", "learner was not built for the l2 variant"))?;
        let c = self.linear_term(maximizers, d)?;
        let c_feat = fm.project(&c);
        let groups: Vec<(f64, Vec<Vec<f64>>)> = self
            .rows
            .iter()
            .zip(&self.labels)
            .zip(d.as_slice())
            .filter(|((_, y), &di)| **y == Label::Negative && di > 0.0)
            .map(|((rows, _), &di)| (di, rows.rows().map(|k| fm.project(k)).collect()))
            .collect();
        let beta = min_norm_direction(&c_feat, &groups);
        let mut alpha = fm.alpha_of(&beta);
        if let Some(g) = &self.gram {
            let sq = ShapeletCoeffs::new(alpha.clone(), NormKind::L2Gram).gram_norm_sq(&g.entries);
            if sq > 1.0 {
                let s = 1.0 / sq.sqrt();
                alpha.iter_mut().for_each(|a| *a *= s);
            }
        }
        let value = self.linearized_value(&c, &alpha, d);
        Ok((ShapeletCoeffs::new(alpha, NormKind::L2Gram), value))
    }

    fn subproblem(&self, maximizers: &[Option<usize>], d: &WeightDist, hint: &[f64]) -> Result<ShapeletCoeffs> {
        match self.config.norm {
            NormKind::L1 => self.subproblem_l1(maximizers, d, Some(hint)).map(|r| r.0),
            NormKind::L2Gram => self.subproblem_l2(maximizers, d).map(|r| r.0),
        }
    }

    /// DC descent from `alpha0`.
    pub fn descend(&self, d: &WeightDist, alpha0: ShapeletCoeffs) -> Result<WeakResult> {
        self.check_d(d)?;
        if alpha0.alpha.len() != self.pool_size {
            return Err(Error::LengthMismatch {
                expected: self.pool_size,
                got: alpha0.alpha.len(),
            });
        }
        let mut alpha = alpha0;
        let mut f_prev = -self.edge(&alpha.alpha, d);
        let mut trace = vec![f_prev];
        let mut iterations = 0;
        for _ in 0..self.config.max_outer {
            let maximizers = self.maximizers(&alpha.alpha);
            let next = self.subproblem(&maximizers, d, &alpha.alpha)?;
            iterations += 1;
            let f = -self.edge(&next.alpha, d);
            if f > f_prev {
                break;
            }
            alpha = next;
            trace.push(f);
            if f_prev - f <= self.config.epsilon {
                break;
            }
            f_prev = f;
        }
        let edge = -trace[trace.len() - 1];
        Ok(WeakResult {
            alpha,
            objective_trace: trace,
            edge,
            iterations,
        })
    }

    /// Run the DC weak learner from the best one-hot shapelet(s) and keep
    /// the descent with the largest final edge.
    pub fn learn(&self, d: &WeightDist) -> Result<WeakResult> {
        self.check_d(d)?;
        let candidates = self.one_hot_candidates(d);
        let starts = ranked(&candidates);
        if starts.is_empty() {
            return Err(Error::Kernel("no pool instance has positive self-similarity".into()));
        }
        let mut best: Option<WeakResult> = None;
        for &(_, z, s) in starts.iter().take(self.config.restarts) {
            let mut alpha = vec![0.0; self.pool_size];
            alpha[z] = s;
            let res = self.descend(d, ShapeletCoeffs::new(alpha, self.config.norm))?;
            if best.as_ref().is_none_or(|b| res.edge > b.edge) {
                best = Some(res);
            }
        }
        Ok(best.expect("at least one start"))
    }
}

/// Candidates sorted by edge descending, stable so earlier entries win ties.
fn ranked(candidates: &[(f64, usize, f64)]) -> Vec<(f64, usize, f64)> {
    let mut v = candidates.to_vec();
    v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    v
}

/// Rescale onto the ℓ1 ball if rounding pushed the norm past 1.
fn project_l1(mut alpha: Vec<f64>) -> Vec<f64> {
    let n: f64 = alpha.iter().map(|a| a.abs()).sum();
    if n > 1.0 {
        alpha.iter_mut().for_each(|a| *a /= n);
    }
    alpha
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

/// Solve `min_{‖β‖≤1} −cᵀβ + Σ_r d_r max_{g∈G_r} gᵀβ` via its min-norm dual.
fn min_norm_direction(c: &[f64], groups: &[(f64, Vec<Vec<f64>>)]) -> Vec<f64> {
    let norm = |v: &[f64]| dot(v, v).sqrt();
    let primal = |beta: &[f64]| -> f64 {
        let neg: f64 = groups
            .iter()
            .map(|(dr, g)| dr * g.iter().map(|x| dot(x, beta)).fold(f64::NEG_INFINITY, f64::max))
            .sum();
        neg - dot(c, beta)
    };
    let direction = |v: &[f64]| -> Vec<f64> {
        let n = norm(v);
        if n > 0.0 {
            v.iter().map(|x| x / n).collect()
        } else {
            vec![0.0; v.len()]
        }
    };
    if groups.is_empty() {
        return direction(c);
    }
    // residual v = c − Σ_r d_r G_r μ_r
    let residual = |mu: &[Vec<f64>]| -> Vec<f64> {
        let mut v = c.to_vec();
        for ((dr, g), m) in groups.iter().zip(mu) {
            for (x, &w) in g.iter().zip(m) {
                if w != 0.0 {
                    for (vk, xk) in v.iter_mut().zip(x) {
                        *vk -= dr * w * xk;
                    }
                }
            }
        }
        v
    };
    let phi = |v: &[f64]| 0.5 * dot(v, v);
    let grad = |v: &[f64]| -> Vec<Vec<f64>> {
        groups
            .iter()
            .map(|(dr, g)| g.iter().map(|x| -dr * dot(x, v)).collect())
            .collect()
    };

    let mut mu: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, g)| vec![1.0 / g.len() as f64; g.len()])
        .collect();
    let mut y = mu.clone();
    let mut t = 1.0f64;
    // Lipschitz estimate ‖A‖² ≤ Σ_r d_r² Σ_x ‖g_x‖², refined by backtracking.
    let mut lip: f64 = groups
        .iter()
        .map(|(dr, g)| dr * dr * g.iter().map(|x| dot(x, x)).sum::<f64>())
        .sum::<f64>()
        .max(1e-300)
        * 0.25;

    let mut best_beta = direction(c);
    let mut best_primal = primal(&best_beta);
    let mut best_dual = f64::NEG_INFINITY;
    for it in 0..20_000 {
        let vy = residual(&y);
        let fy = phi(&vy);
        let gy = grad(&vy);
        let next = loop {
            let mut cand: Vec<Vec<f64>> = y
                .iter()
                .zip(&gy)
                .map(|(m, g)| m.iter().zip(g).map(|(a, b)| a - b / lip).collect())
                .collect();
            cand.iter_mut().for_each(|m| project_simplex(m));
            let vc = residual(&cand);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((cm, ym), gm) in cand.iter().zip(&y).zip(&gy) {
                for ((a, b), g) in cm.iter().zip(ym).zip(gm) {
                    lin += g * (a - b);
                    sq += (a - b) * (a - b);
                }
            }
            if phi(&vc) <= fy + lin + 0.5 * lip * sq + 1e-15 || lip > 1e300 {
                break (cand, vc);
            }
            lip *= 2.0;
        };
        let (cand, vc) = next;
        // Adaptive restart when the objective goes up.
        let v_mu = residual(&mu);
        let t_next = if phi(&vc) > phi(&v_mu) {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        let momentum = if t_next == 1.0 { 0.0 } else { (t - 1.0) / t_next };
        y = cand
            .iter()
            .zip(&mu)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + momentum * (p - q)).collect())
            .collect();
        mu = cand;
        t = t_next;

        let dual = -norm(&vc);
        best_dual = best_dual.max(dual);
        let beta = direction(&vc);
        let pv = primal(&beta);
        if pv < best_primal {
            best_primal = pv;
            best_beta = beta;
        }
        let gap = best_primal - best_dual;
        if gap <= 1e-10 * (1.0 + best_primal.abs()) || (it > 200 && gap <= 1e-12) {
            break;
        }
    }
    best_beta
}

/// Best signed one-hot shapelet for the given weights.
pub fn init_one_hot(
    sample: &Sample,
    d: &WeightDist,
    pool: &InstancePool,
    kernel: &KernelSpec,
    norm: NormKind,
) -> Result<ShapeletCoeffs> {
    let cfg = WeakConfig {
        norm,
        ..WeakConfig::default()
    };
    WeakLearner::new(sample, pool, kernel, cfg)?.init_one_hot(d)
}

/// Exact solution of the ℓ1-ball linearized subproblem for fixed
/// positive-bag maximizers (`Some` for every positive bag).
pub fn linearized_subproblem_l1(
    fixed_maximizers: &[Option<usize>],
    sample: &Sample,
    d: &WeightDist,
    pool: &InstancePool,
    kernel: &KernelSpec,
) -> Result<ShapeletCoeffs> {
    let learner = WeakLearner::new(sample, pool, kernel, WeakConfig::default())?;
    learner.subproblem_l1(fixed_maximizers, d, None).map(|r| r.0)
}

/// Gram-ball linearized subproblem for fixed positive-bag maximizers.
pub fn linearized_subproblem_l2(
    fixed_maximizers: &[Option<usize>],
    sample: &Sample,
    d: &WeightDist,
    pool: &InstancePool,
    gram: &GramMatrix,
) -> Result<ShapeletCoeffs> {
    if gram.size() != pool.len() {
        return Err(Error::LengthMismatch {
            expected: pool.len(),
            got: gram.size(),
        });
    }
    let cfg = WeakConfig {
        norm: NormKind::L2Gram,
        ..WeakConfig::default()
    };
    let learner = WeakLearner::new(sample, pool, &gram.kernel, cfg)?;
    learner.subproblem_l2(fixed_maximizers, d).map(|r| r.0)
}

/// DC weak learning from the best one-hot start.
pub fn dc_weak_learn(
    sample: &Sample,
    d: &WeightDist,
    pool: &InstancePool,
    kernel: &KernelSpec,
    config: WeakConfig,
) -> Result<WeakResult> {
    WeakLearner::new(sample, pool, kernel, config)?.learn(d)
}
