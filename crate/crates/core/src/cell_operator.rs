//! Truncated cell operators `−Δ_k − λε₀`, the cell resolvent `T`, the
//! modulated resolvent `H`, band structure and invertibility scans.
//!
//! Modulation by `e^{∓ik1x1}` is done in coefficient space with the exact
//! Galerkin matrices of the multiplication operator restricted to the
//! window. Because a finite window breaks `2π`-periodicity of `k1 ↦ H`,
//! [`StripKernel`] evaluates a periodized version: translates
//! `H(k1 − 2πj)` blended with an entire partition of unity `w(k1 − 2πj)`
//! whose translates sum to one. It agrees with `H` near `Re k1 = 0` up to
//! truncation error and is exactly periodic, so contour shifts on the
//! cylinder hold to quadrature accuracy.

use std::f64::consts::PI;

use errorfunctions::ComplexErrorFunctions;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, c64, CMat, Factor, KernelError};
use crate::medium::{MediumSpec, ModeBasis, Part};
use crate::symbol::{symbol, CPoint2, Sign};

/// `σ_min > INVERTIBILITY_RTOL · ‖M‖₂` declares `M` invertible.
pub const INVERTIBILITY_RTOL: f64 = 1e-8;

/// Largest tolerated fraction of the modulated input lost to truncation.
pub const ALIASING_BUDGET: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error("operator not invertible: sigma_min {sigma_min:e} <= {threshold:e}")]
    NotInvertible { sigma_min: f64, threshold: f64 },
    #[error("modulated input loses {tail:.3e} of its norm to truncation")]
    AliasingBudgetExceeded { tail: f64 },
    #[error("coefficient vector has length {got}, basis has {want}")]
    Length { got: usize, want: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    ShiftedLaplacian,
    ResolventTarget,
    PencilBlock,
    MultOp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMeta {
    pub k: CPoint2,
    pub lambda: f64,
    pub kind: MatrixKind,
}

#[derive(Debug, Clone)]
pub struct CellMatrix {
    pub basis: ModeBasis,
    pub entries: CMat,
    pub meta: CellMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub sigma_min: f64,
    pub norm2: f64,
    pub inv_norm: f64,
    pub invertible: bool,
}

impl SpectralReport {
    pub fn of(m: &CMat) -> Result<Self, KernelError> {
        let sv = linalg::singular_values(m)?;
        let norm2 = sv.first().copied().unwrap_or(0.0);
        let sigma_min = sv.last().copied().unwrap_or(0.0);
        let inv_norm = if sigma_min > 0.0 { 1.0 / sigma_min } else { f64::INFINITY };
        Ok(Self { sigma_min, norm2, inv_norm, invertible: sigma_min > INVERTIBILITY_RTOL * norm2 })
    }
}

/// Precomputed pieces of `M(k1) = diag(s(m, (k1, k2))) − λ C(ε₀)` at fixed `k2`.
#[derive(Debug, Clone)]
pub struct CellOperator {
    pub basis: ModeBasis,
    pub k2: c64,
    pub lambda: f64,
    pub conv: CMat,
    m1: Vec<f64>,
    cross: Vec<c64>,
}

impl CellOperator {
    pub fn new(k2: c64, lambda: f64, medium: &MediumSpec, basis: &ModeBasis) -> Self {
        let conv = medium.convolution_matrix(Part::Periodic, basis);
        let m1 = basis.iter().map(|m| m.m1()).collect();
        let cross = basis.iter().map(|m| (k2 + m.m2()) * (k2 + m.m2())).collect();
        Self { basis: *basis, k2, lambda, conv, m1, cross }
    }

    pub fn len(&self) -> usize {
        self.m1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m1.is_empty()
    }

    pub fn m1(&self) -> &[f64] {
        &self.m1
    }

    /// `(m2 + k2)²` per mode.
    pub fn cross(&self) -> &[c64] {
        &self.cross
    }

    pub fn matrix(&self, k1: c64) -> CMat {
        let n = self.len();
        let mut m = CMat::from_fn(n, n, |i, j| self.conv[(i, j)] * (-self.lambda));
        for i in 0..n {
            let a = k1 + self.m1[i];
            m[(i, i)] += a * a + self.cross[i];
        }
        m
    }
}

pub fn assemble_shifted(k: CPoint2, lambda: f64, medium: &MediumSpec, basis: &ModeBasis) -> CellMatrix {
    let n = basis.len();
    let conv = medium.convolution_matrix(Part::Periodic, basis);
    let modes: Vec<_> = basis.iter().collect();
    let entries = CMat::from_fn(n, n, |i, j| {
        let d = if i == j { symbol(modes[i], k) } else { c64::new(0.0, 0.0) };
        d - conv[(i, j)] * lambda
    });
    CellMatrix { basis: *basis, entries, meta: CellMeta { k, lambda, kind: MatrixKind::ShiftedLaplacian } }
}

fn check_len(f: &[c64], basis: &ModeBasis) -> Result<(), CellError> {
    if f.len() != basis.len() {
        return Err(CellError::Length { got: f.len(), want: basis.len() });
    }
    Ok(())
}

fn invertible_factor(m: CMat) -> Result<Factor, CellError> {
    let rep = SpectralReport::of(&m)?;
    if !rep.invertible {
        return Err(CellError::NotInvertible { sigma_min: rep.sigma_min, threshold: INVERTIBILITY_RTOL * rep.norm2 });
    }
    Ok(Factor::new(m))
}

/// `(1/2π)(−Δ_k − λε₀)⁻¹ f`.
pub fn resolvent_apply(
    k: CPoint2,
    lambda: f64,
    medium: &MediumSpec,
    basis: &ModeBasis,
    f: &[c64],
) -> Result<Vec<c64>, CellError> {
    check_len(f, basis)?;
    let m = assemble_shifted(k, lambda, medium, basis).entries;
    let factor = invertible_factor(m)?;
    Ok(factor.solve_vec(f).into_iter().map(|z| z / (2.0 * PI)).collect())
}

/// `g(z) = ∫₀¹ e^{−izx} dx`.
pub fn cell_phase(z: c64) -> c64 {
    if z.norm() < 1e-3 {
        let i = c64::new(0.0, 1.0);
        return c64::new(1.0, 0.0) - i * z / 2.0 - z * z / 6.0 + i * z * z * z / 24.0;
    }
    let i = c64::new(0.0, 1.0);
    (c64::new(1.0, 0.0) - (-i * z).exp()) / (i * z)
}

/// Galerkin matrix of `r ↦ e^{−ik1x1} r` on the window.
pub fn modulation_matrix(k1: c64, basis: &ModeBasis) -> CMat {
    let modes: Vec<_> = basis.iter().collect();
    let n = modes.len();
    CMat::from_fn(n, n, |i, j| {
        if modes[i].n2 == modes[j].n2 {
            cell_phase(k1 + (modes[i].m1() - modes[j].m1()))
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

/// Galerkin matrix of `u ↦ e^{ik1x1} u` on the window.
pub fn demodulation_matrix(k1: c64, basis: &ModeBasis) -> CMat {
    let modes: Vec<_> = basis.iter().collect();
    let n = modes.len();
    CMat::from_fn(n, n, |i, j| {
        if modes[i].n2 == modes[j].n2 {
            cell_phase((modes[i].m1() - modes[j].m1()) - k1)
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

/// Fraction of `‖e^{−ik1x1} f‖²` outside the window.
pub fn modulation_tail(k1: c64, basis: &ModeBasis, f: &[c64]) -> f64 {
    let modes: Vec<_> = basis.iter().collect();
    let y = k1.im;
    let mut full = 0.0;
    for (i, mi) in modes.iter().enumerate() {
        for (j, mj) in modes.iter().enumerate() {
            if mi.n2 == mj.n2 && (f[i] != c64::new(0.0, 0.0)) && (f[j] != c64::new(0.0, 0.0)) {
                let z = c64::new(-(mi.m1() - mj.m1()), 2.0 * y);
                full += (f[i] * f[j].conj() * cell_phase(z)).re;
            }
        }
    }
    if full <= 0.0 {
        return 0.0;
    }
    let kept: f64 = linalg::column_to_vec(&(&modulation_matrix(k1, basis) * &linalg::column(f)), 0)
        .iter()
        .map(|z| z.norm_sqr())
        .sum();
    ((full - kept) / full).max(0.0)
}

/// Partition of unity `w(z) = ½[erf((z + π)/σ) − erf((z − π)/σ)]` and its
/// translate count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Periodization {
    pub sigma: f64,
}

impl Periodization {
    /// Width tied to the highest line used, so `|w|` stays moderate there.
    pub fn for_tau1(tau1: f64) -> Self {
        Self { sigma: (tau1 / 3.0).max(2.0) }
    }

    pub fn weight(&self, z: c64) -> c64 {
        let a = (z + PI) / self.sigma;
        let b = (z - PI) / self.sigma;
        (a.erf() - b.erf()) * 0.5
    }

    /// Translates `j` (around `Re k1 / 2π`) with their weights; the omitted
    /// ones are below `e^{-40}` in modulus.
    pub fn translates(&self, k1: c64) -> Vec<(i64, c64)> {
        let y = k1.im.abs();
        let need = (40.0 * self.sigma * self.sigma + y * y).sqrt() / (2.0 * PI);
        let half = need.ceil().max(1.0) as i64;
        let center = (k1.re / (2.0 * PI)).round() as i64;
        let all: Vec<(i64, c64)> = (center - half..=center + half)
            .map(|j| (j, self.weight(k1 - 2.0 * PI * j as f64)))
            .collect();
        let total: f64 = all.iter().map(|(_, w)| w.norm()).sum();
        all.into_iter().filter(|(_, w)| w.norm() >= 1e-17 * total).collect()
    }
}

impl Default for Periodization {
    fn default() -> Self {
        Self::for_tau1(2.0 * PI)
    }
}

/// Evaluates the periodized `H(k1, k2)` on the window at fixed `k2`.
#[derive(Debug, Clone)]
pub struct StripKernel {
    pub op: CellOperator,
    pub period: Periodization,
}

impl StripKernel {
    pub fn new(k2: c64, lambda: f64, medium: &MediumSpec, basis: &ModeBasis, period: Periodization) -> Self {
        Self { op: CellOperator::new(k2, lambda, medium, basis), period }
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.op.basis
    }

    /// `F(k1) M(k1)⁻¹ E(k1) / 2π` without translates or invertibility checks.
    pub fn raw(&self, k1: c64) -> CMat {
        let b = &self.op.basis;
        let factor = Factor::new(self.op.matrix(k1));
        let x = factor.solve(&modulation_matrix(k1, b));
        let mut out = &demodulation_matrix(k1, b) * &x;
        out *= faer::Scale(c64::new(1.0 / (2.0 * PI), 0.0));
        out
    }

    /// Periodized kernel; translates are summed in a fixed order.
    pub fn eval(&self, k1: c64) -> CMat {
        let n = self.op.len();
        let mut acc = linalg::zeros(n, n);
        for (j, w) in self.period.translates(k1) {
            let mut t = self.raw(k1 - 2.0 * PI * j as f64);
            t *= faer::Scale(w);
            acc += &t;
        }
        acc
    }

    /// Translates whose shifted operator is numerically singular at `k1`.
    pub fn check_invertible(&self, k1: c64) -> Result<(), CellError> {
        for (j, _) in self.period.translates(k1) {
            let m = self.op.matrix(k1 - 2.0 * PI * j as f64);
            let rep = SpectralReport::of(&m)?;
            if !rep.invertible {
                return Err(CellError::NotInvertible {
                    sigma_min: rep.sigma_min,
                    threshold: INVERTIBILITY_RTOL * rep.norm2,
                });
            }
        }
        Ok(())
    }
}

/// `H(k1, k2) f = e^{ik1x1} T(k1, k2) e^{−ik1x1} f`, periodized in `k1`.
pub fn h_apply(
    k1: c64,
    k2: c64,
    lambda: f64,
    medium: &MediumSpec,
    basis: &ModeBasis,
    f: &[c64],
) -> Result<Vec<c64>, CellError> {
    h_apply_with(k1, k2, lambda, medium, basis, f, Periodization::default())
}

pub fn h_apply_with(
    k1: c64,
    k2: c64,
    lambda: f64,
    medium: &MediumSpec,
    basis: &ModeBasis,
    f: &[c64],
    period: Periodization,
) -> Result<Vec<c64>, CellError> {
    check_len(f, basis)?;
    let kernel = StripKernel::new(k2, lambda, medium, basis, period);
    kernel.check_invertible(k1)?;
    let translates = period.translates(k1);
    let wsum: f64 = translates.iter().map(|(_, w)| w.norm()).sum();
    let tail: f64 = translates
        .iter()
        .map(|(j, w)| w.norm() * modulation_tail(k1 - 2.0 * PI * *j as f64, basis, f))
        .sum::<f64>()
        / wsum;
    if tail > ALIASING_BUDGET {
        return Err(CellError::AliasingBudgetExceeded { tail });
    }
    let out = &kernel.eval(k1) * &linalg::column(f);
    Ok(linalg::column_to_vec(&out, 0))
}

/// Lowest `count` eigenvalues of `diag(|m + k|²) u = λ C(ε₀) u`.
pub fn band_eigs(k: [f64; 2], medium: &MediumSpec, basis: &ModeBasis, count: usize) -> Result<Vec<f64>, CellError> {
    let conv = medium.convolution_matrix(Part::Periodic, basis);
    let (cv, q) = linalg::hermitian_eig(&conv)?;
    let n = basis.len();
    let scale: Vec<f64> = cv.iter().map(|v| 1.0 / v.sqrt()).collect();
    // C^{-1/2} = Q diag(scale) Q^H
    let qs = CMat::from_fn(n, n, |i, j| q[(i, j)] * scale[j]);
    let inv_sqrt = &qs * q.adjoint();
    let modes: Vec<_> = basis.iter().collect();
    let d: Vec<f64> = modes.iter().map(|m| (m.m1() + k[0]).powi(2) + (m.m2() + k[1]).powi(2)).collect();
    let mid = CMat::from_fn(n, n, |i, j| inv_sqrt[(i, j)] * d[i]);
    let mut pencil = inv_sqrt.adjoint() * &mid;
    let sym = CMat::from_fn(n, n, |i, j| (pencil[(i, j)] + pencil[(j, i)].conj()) * 0.5);
    pencil = sym;
    let vals = linalg::hermitian_eigvals(&pencil)?;
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(vals
        .into_iter()
        .take(count)
        .map(|v| if v < 0.0 && v.abs() <= 1e-10 * top.max(1.0) { 0.0 } else { v })
        .collect())
}

/// Horizontal segment `[−π, π] ± iτ1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizontalLine {
    pub sign: Sign,
    pub tau1: f64,
}

/// Minimum of `σ_min(M(k1))` over `samples` equispaced points of the segment.
pub fn sigma_min_scan(
    line: HorizontalLine,
    k2: c64,
    lambda: f64,
    medium: &MediumSpec,
    basis: &ModeBasis,
    samples: usize,
) -> Result<f64, CellError> {
    let op = CellOperator::new(k2, lambda, medium, basis);
    let im = line.sign.factor() * line.tau1;
    let values: Vec<Result<f64, KernelError>> = (0..samples.max(2))
        .into_par_iter()
        .map(|i| {
            let re = -PI + 2.0 * PI * i as f64 / (samples.max(2) - 1) as f64;
            linalg::sigma_min(&op.matrix(c64::new(re, im)))
        })
        .collect();
    let mut best = f64::INFINITY;
    for v in values {
        best = best.min(v?);
    }
    Ok(best)
}
