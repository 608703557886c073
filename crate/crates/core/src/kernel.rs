//! Kernel evaluation, Gram matrices and per-bag kernel rows.
//!
//! The Gaussian kernel uses the multiplier convention
//! `K(a, b) = exp(-sigma * ||a - b||^2)`; `sigma` is *not* a bandwidth.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Bag, Instance, InstancePool};
use crate::error::{invalid, Error, Result};

/// Relative tolerance for the PSD check: `min_eig >= -PSD_TOL * max_eig`.
pub const PSD_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Gaussian,
    Precomputed,
}

/// A user-supplied square kernel matrix. Instances are row indices into it.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputedGram {
    matrix: DMatrix<f64>,
}

impl PrecomputedGram {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::Kernel(format!(
                "precomputed Gram must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Kernel("precomputed Gram has non-finite entries".into()));
        }
        if !is_symmetric(&matrix, SYMMETRY_TOL) {
            return Err(Error::Kernel("precomputed Gram is not symmetric".into()));
        }
        Ok(PrecomputedGram { matrix })
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.size();
        if i >= n || j >= n {
            return Err(Error::Kernel(format!(
                "index ({i}, {j}) outside precomputed Gram of size {n}"
            )));
        }
        Ok(self.matrix[(i, j)])
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    Linear,
    Gaussian { sigma: f64 },
    Precomputed(Arc<PrecomputedGram>),
}

/// Serializable part of a [`KernelSpec`]; a precomputed matrix is never embedded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelDescriptor {
    pub kind: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be a positive finite real, got {sigma}")));
        }
        Ok(KernelSpec::Gaussian { sigma })
    }

    pub fn precomputed(gram: PrecomputedGram) -> Self {
        KernelSpec::Precomputed(Arc::new(gram))
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            KernelSpec::Linear => KernelKind::Linear,
            KernelSpec::Gaussian { .. } => KernelKind::Gaussian,
            KernelSpec::Precomputed(_) => KernelKind::Precomputed,
        }
    }

    pub fn descriptor(&self) -> KernelDescriptor {
        KernelDescriptor {
            kind: self.kind(),
            sigma: match self {
                KernelSpec::Gaussian { sigma } => Some(*sigma),
                _ => None,
            },
        }
    }

    /// Rebuild a spec from its descriptor. Precomputed kernels need the matrix.
    pub fn from_descriptor(desc: &KernelDescriptor, gram: Option<Arc<PrecomputedGram>>) -> Result<Self> {
        match desc.kind {
            KernelKind::Linear => Ok(KernelSpec::Linear),
            KernelKind::Gaussian => {
                let sigma = desc
                    .sigma
                    .ok_or_else(|| invalid("sigma", "gaussian kernel requires sigma"))?;
                KernelSpec::gaussian(sigma)
            }
            KernelKind::Precomputed => gram
                .map(KernelSpec::Precomputed)
                .ok_or_else(|| Error::Kernel("precomputed kernel requires a Gram matrix".into())),
        }
    }

    /// Evaluate on two instances of any kind. Precomputed kernels interpret
    /// the instances as row-index handles.
    pub fn eval(&self, a: &Instance, b: &Instance) -> Result<f64> {
        match self {
            KernelSpec::Precomputed(gram) => {
                let (i, j) = match (a.as_index(), b.as_index()) {
                    (Some(i), Some(j)) => (i, j),
                    _ => return Err(Error::Kernel("precomputed kernel instances must be row indices".into())),
                };
                gram.get(i, j)
            }
            _ => {
                if a.dim() != b.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: a.dim(),
                        got: b.dim(),
                    });
                }
                Ok(self.eval_values(a.values(), b.values()))
            }
        }
    }

    /// Raw-vector evaluation for linear and Gaussian kernels. Dimensions are
    /// assumed equal. Precomputed kernels return NaN.
    pub(crate) fn eval_values(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Gaussian { sigma } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-sigma * sq).exp()
            }
            KernelSpec::Precomputed(_) => f64::NAN,
        }
    }
}

/// Kernel value between two raw instances.
///
/// Precomputed kernels are rejected here: they can only be evaluated through
/// row indices (see [`KernelSpec::eval`]).
pub fn kernel_eval(spec: &KernelSpec, a: &Instance, b: &Instance) -> Result<f64> {
    if let KernelSpec::Precomputed(_) = spec {
        return Err(Error::Kernel(
            "precomputed kernel cannot evaluate raw instances; use row indices".into(),
        ));
    }
    spec.eval(a, b)
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Dense kernel matrix over an instance pool.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub kernel: KernelSpec,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        is_symmetric(&self.entries, tol)
    }

    /// `(min, max)` eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.entries.clone());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    pub fn is_psd(&self) -> bool {
        let (min, max) = self.eigen_range();
        min >= -PSD_TOL * max.abs().max(f64::MIN_POSITIVE)
    }

    pub fn check_psd(&self) -> Result<()> {
        let (min, max) = self.eigen_range();
        if min >= -PSD_TOL * max.abs().max(f64::MIN_POSITIVE) {
            Ok(())
        } else {
            Err(Error::Kernel(format!(
                "Gram matrix is not positive semidefinite (min eigenvalue {min:e}, max {max:e})"
            )))
        }
    }

    /// Largest diagonal entry, i.e. the squared feature-norm bound over the pool.
    pub fn diag_max(&self) -> f64 {
        self.entries
            .diagonal()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn gram_matrix(spec: &KernelSpec, pool: &InstancePool) -> Result<GramMatrix> {
    if pool.is_empty() {
        return Err(Error::Validation("instance pool is empty".into()));
    }
    let n = pool.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..=i)
                .map(|j| spec.eval(pool.get(i), pool.get(j)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut entries = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            entries[(i, j)] = *v;
            entries[(j, i)] = *v;
        }
    }
    Ok(GramMatrix {
        entries,
        kernel: spec.clone(),
    })
}

/// Kernel values between every instance of one bag and every pool instance,
/// row-major: row `x` is the vector `k_x` with `k_x[z] = K(z, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelRows {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl KernelRows {
    pub fn compute(spec: &KernelSpec, pool: &InstancePool, bag: &Bag) -> Result<Self> {
        if bag.is_empty() {
            return Err(Error::Validation("bag is empty".into()));
        }
        let p = pool.len();
        if !matches!(spec, KernelSpec::Precomputed(_)) {
            for inst in &bag.instances {
                if inst.dim() != pool.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: pool.dim(),
                        got: inst.dim(),
                    });
                }
            }
        }
        let mut data = Vec::with_capacity(bag.len() * p);
        for x in &bag.instances {
            for z in pool.instances() {
                data.push(match spec {
                    KernelSpec::Precomputed(_) => spec.eval(z, x)?,
                    _ => spec.eval_values(z.values(), x.values()),
                });
            }
        }
        Ok(KernelRows { n: bag.len(), p, data })
    }

    /// Rows for many bags, computed in parallel.
    pub fn compute_all<'a>(
        spec: &KernelSpec,
        pool: &InstancePool,
        bags: impl IntoIterator<Item = &'a Bag>,
    ) -> Result<Vec<KernelRows>> {
        let bags: Vec<&Bag> = bags.into_iter().collect();
        bags.par_iter().map(|b| KernelRows::compute(spec, pool, b)).collect()
    }

    pub fn n_instances(&self) -> usize {
        self.n
    }

    pub fn pool_size(&self) -> usize {
        self.p
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.p..(x + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.p)
    }

    /// `k_x . alpha` for instance `x`.
    pub fn score(&self, x: usize, alpha: &[f64]) -> f64 {
        dot(self.row(x), alpha)
    }

    /// Max score over the bag and the smallest index attaining it.
    pub fn max_score(&self, alpha: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (x, row) in self.rows().enumerate() {
            let s = dot(row, alpha);
            if s > best.0 {
                best = (s, x);
            }
        }
        best
    }

    /// Min score over the bag and the smallest index attaining it.
    pub fn min_score(&self, alpha: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (x, row) in self.rows().enumerate() {
            let s = dot(row, alpha);
            if s < best.0 {
                best = (s, x);
            }
        }
        best
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
