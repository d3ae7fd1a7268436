//! Dense complex kernel: LU solves with one refinement sweep, singular
//! values, nonsymmetric and Hermitian eigensolvers.
//!
//! Everything runs with sequential inner parallelism so that results do not
//! depend on the size of the rayon pool; callers parallelize over
//! independent problems instead.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, Side};
use thiserror::Error;

pub use faer::c64;

pub type CMat = Mat<c64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("eigensolver did not converge ({0})")]
    EigFailure(String),
    #[error("singular value decomposition did not converge ({0})")]
    SvdFailure(String),
}

pub fn zeros(nrows: usize, ncols: usize) -> CMat {
    Mat::zeros(nrows, ncols)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })
}

pub fn column(v: &[c64]) -> CMat {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn column_to_vec(m: &CMat, j: usize) -> Vec<c64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn vec_norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.norm_l2()
}

/// LU factorization that keeps the original matrix for a refinement sweep.
pub struct Factor {
    matrix: CMat,
    lu: PartialPivLu<c64>,
}

impl Factor {
    pub fn new(matrix: CMat) -> Self {
        let lu = matrix.partial_piv_lu();
        Self { matrix, lu }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn solve(&self, rhs: &CMat) -> CMat {
        let mut x = self.lu.solve(rhs);
        let r = rhs - &self.matrix * &x;
        let dx = self.lu.solve(&r);
        x += &dx;
        x
    }

    pub fn solve_vec(&self, rhs: &[c64]) -> Vec<c64> {
        column_to_vec(&self.solve(&column(rhs)), 0)
    }
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &CMat) -> Result<Vec<f64>, KernelError> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    m.singular_values()
        .map_err(|e| KernelError::SvdFailure(format!("{e:?}")))
}

pub fn norm2(m: &CMat) -> Result<f64, KernelError> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

pub fn sigma_min(m: &CMat) -> Result<f64, KernelError> {
    Ok(singular_values(m)?.last().copied().unwrap_or(0.0))
}

/// Eigenvalues and right eigenvectors (columns) of a general square matrix.
pub fn eig(m: &CMat) -> Result<(Vec<c64>, CMat), KernelError> {
    let e = m
        .eigen()
        .map_err(|e| KernelError::EigFailure(format!("{e:?}")))?;
    let s = e.S().column_vector();
    let vals = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn eigvals(m: &CMat) -> Result<Vec<c64>, KernelError> {
    m.eigenvalues()
        .map_err(|e| KernelError::EigFailure(format!("{e:?}")))
}

/// Ascending eigenvalues of a Hermitian matrix (lower triangle is read).
pub fn hermitian_eigvals(m: &CMat) -> Result<Vec<f64>, KernelError> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| KernelError::EigFailure(format!("{e:?}")))
}

/// Hermitian eigendecomposition, eigenvalues ascending.
pub fn hermitian_eig(m: &CMat) -> Result<(Vec<f64>, CMat), KernelError> {
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| KernelError::EigFailure(format!("{e:?}")))?;
    let s = e.S().column_vector();
    let vals = (0..m.nrows()).map(|i| s[i].re).collect();
    Ok((vals, e.U().to_owned()))
}

/// Pins faer to sequential kernels; called once by entry points.
pub fn use_sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}
