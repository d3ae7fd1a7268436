//! The strip Fredholm family `A(k2)`: direct line assembly, the deformed
//! line-plus-residues assembly, the norm decay sweep and the Fredholm scan
//! of `I − λ A(k2) ε₁`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_operator::{Periodization, StripKernel};
use crate::linalg::{self, c64, CMat, KernelError};
use crate::medium::{MediumSpec, ModeBasis, Part};
use crate::pole_tracker::{cyl_dist, fold, pencil_spectrum, PoleRecord, TrackError};

/// Relative change under doubling of the quadrature above which an
/// assembly is rejected.
pub const QUAD_RTOL: f64 = 1e-7;
pub const POLE_CLEARANCE: f64 = 1e-4;
pub const R_MIN: f64 = 1e-3;
pub const R_MAX: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AError {
    #[error("pole {dist:e} from the integration line at height {height}")]
    PoleOnContour { dist: f64, height: f64 },
    #[error("pole {index} too close to its neighbours: radius {radius:e}")]
    PoleTooClose { index: usize, radius: f64 },
    #[error("quadrature not converged: doubling changed the matrix by {rel:e}")]
    QuadratureNotConverged { rel: f64 },
    #[error("need at least two sweep heights")]
    ShortSweep,
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub q_line: usize,
    pub q_circle: usize,
    /// Re-evaluate with doubled node counts and reject on disagreement.
    pub verify: bool,
    /// Doublings the direct line may take before giving up.
    pub max_doublings: u32,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { q_line: 64, q_circle: 32, verify: true, max_doublings: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct AFamily {
    pub k2: c64,
    pub basis: ModeBasis,
    pub matrix: CMat,
    pub tau1: f64,
    pub delta0: f64,
    pub residue_contribs: Vec<(usize, CMat)>,
    pub line_contrib: CMat,
    pub q_line: usize,
    pub q_circle: usize,
    pub norm2: f64,
    /// Relative change of the matrix under node doubling, when verified.
    pub quad_change: Option<f64>,
}

fn rel_change(a: &CMat, b: &CMat) -> f64 {
    let d = linalg::frobenius(&(a - b));
    let s = linalg::frobenius(b);
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

fn ordered_sum(parts: Vec<CMat>, n: usize) -> CMat {
    let mut acc = linalg::zeros(n, n);
    for p in parts {
        acc += &p;
    }
    acc
}

/// Trapezoid sum of `∫_{[−π, π] + i·height} H dk1` over the nodes
/// `j = offset, offset + stride, ...` of a `q`-point rule, weighted `2π/q`.
fn line_nodes(kernel: &StripKernel, height: f64, q: usize, offset: usize, stride: usize) -> CMat {
    let n = kernel.op.len();
    let parts: Vec<CMat> = (offset..q)
        .step_by(stride)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| {
            let k1 = c64::new(-PI + 2.0 * PI * j as f64 / q as f64, height);
            let mut h = kernel.eval(k1);
            h *= faer::Scale(c64::new(2.0 * PI / q as f64, 0.0));
            h
        })
        .collect();
    ordered_sum(parts, n)
}

/// `(1/2πi)∮_{|k1 − c| = r}` counterpart of [`line_nodes`].
fn circle_nodes(kernel: &StripKernel, center: c64, radius: f64, q: usize, offset: usize, stride: usize) -> CMat {
    let n = kernel.op.len();
    let parts: Vec<CMat> = (offset..q)
        .step_by(stride)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| {
            let e = c64::from_polar(radius, 2.0 * PI * j as f64 / q as f64);
            let mut h = kernel.eval(center + e);
            h *= faer::Scale(e / q as f64);
            h
        })
        .collect();
    ordered_sum(parts, n)
}

/// The `2q`-node rule from the `q`-node one: half of it plus the odd nodes.
fn refine(coarse: &CMat, odd: &CMat) -> CMat {
    let mut out = coarse.clone();
    out *= faer::Scale(c64::new(0.5, 0.0));
    out += odd;
    out
}

fn line_integral(kernel: &StripKernel, height: f64, q: usize) -> CMat {
    line_nodes(kernel, height, q, 0, 1)
}

fn line_doubled(kernel: &StripKernel, height: f64, q: usize, coarse: &CMat) -> CMat {
    refine(coarse, &line_nodes(kernel, height, 2 * q, 1, 2))
}

fn circle_integral(kernel: &StripKernel, center: c64, radius: f64, q: usize) -> CMat {
    circle_nodes(kernel, center, radius, q, 0, 1)
}

fn circle_doubled(kernel: &StripKernel, center: c64, radius: f64, q: usize, coarse: &CMat) -> CMat {
    refine(coarse, &circle_nodes(kernel, center, radius, 2 * q, 1, 2))
}

/// Folded pencil eigenvalues that carry non-negligible weight in the
/// periodized kernel.
fn kernel_poles(kernel: &StripKernel, medium: &MediumSpec) -> Result<Vec<c64>, AError> {
    let eigs = pencil_spectrum(kernel.op.k2, kernel.op.lambda, medium, &kernel.op.basis)?;
    Ok(eigs
        .into_iter()
        .filter(|e| kernel.period.weight(e.value).norm() > 1e-14)
        .map(|e| fold(e.value))
        .collect())
}

fn check_line(poles: &[c64], height: f64) -> Result<(), AError> {
    let dist = poles.iter().map(|p| (p.im - height).abs()).fold(f64::INFINITY, f64::min);
    if dist < POLE_CLEARANCE {
        return Err(AError::PoleOnContour { dist, height });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    k2: c64,
    basis: ModeBasis,
    tau1: f64,
    delta0: f64,
    line: CMat,
    residues: Vec<(usize, CMat)>,
    quad: (usize, usize),
    quad_change: Option<f64>,
) -> Result<AFamily, AError> {
    let mut matrix = line.clone();
    for (_, r) in &residues {
        matrix += r;
    }
    let norm2 = linalg::norm2(&matrix)?;
    Ok(AFamily {
        k2,
        basis,
        matrix,
        tau1,
        delta0,
        residue_contribs: residues,
        line_contrib: line,
        q_line: quad.0,
        q_circle: quad.1,
        norm2,
        quad_change,
    })
}

/// `A(k2) = ∫_{[−π, π] + iδ0} H(k1, k2) dk1`.
pub fn assemble_a_direct(
    k2: c64,
    lambda: f64,
    medium: &MediumSpec,
    basis: &ModeBasis,
    delta0: f64,
    tau1: f64,
    quad: Quadrature,
) -> Result<AFamily, AError> {
    let kernel = StripKernel::new(k2, lambda, medium, basis, Periodization::for_tau1(tau1));
    check_line(&kernel_poles(&kernel, medium)?, delta0)?;
    let mut q = quad.q_line;
    let mut coarse = line_integral(&kernel, delta0, q);
    if !quad.verify {
        return finish(k2, *basis, tau1, delta0, coarse, Vec::new(), (q, 0), None);
    }
    loop {
        let fine = line_doubled(&kernel, delta0, q, &coarse);
        q *= 2;
        let rel = rel_change(&coarse, &fine);
        if rel <= QUAD_RTOL {
            return finish(k2, *basis, tau1, delta0, fine, Vec::new(), (q, 0), Some(rel));
        }
        if q >= quad.q_line << quad.max_doublings {
            return Err(AError::QuadratureNotConverged { rel });
        }
        coarse = fine;
    }
}

/// Residue circle radius for `pole` among `others` (folded positions).
pub fn residue_radius(pole: c64, others: &[c64]) -> f64 {
    let d = others
        .iter()
        .map(|o| cyl_dist(pole, *o))
        .filter(|&d| d > 1e-9)
        .fold(f64::INFINITY, f64::min);
    (0.45 * d).min(R_MAX)
}

/// `A(k2) = ∫_{[−π, π] + iτ1} H dk1 + 2πi Σ_j Res_{q_j⁺} H`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_a_deformed(
    k2: c64,
    lambda: f64,
    medium: &MediumSpec,
    basis: &ModeBasis,
    up_poles: &[PoleRecord],
    all_poles: &[PoleRecord],
    tau1: f64,
    delta0: f64,
    quad: Quadrature,
) -> Result<AFamily, AError> {
    let kernel = StripKernel::new(k2, lambda, medium, basis, Periodization::for_tau1(tau1));
    check_line(&kernel_poles(&kernel, medium)?, tau1)?;
    let others: Vec<c64> = all_poles.iter().map(|p| p.k1).collect();
    let mut circles = Vec::with_capacity(up_poles.len());
    for p in up_poles {
        let r = residue_radius(p.k1, &others);
        if r < R_MIN {
            return Err(AError::PoleTooClose { index: p.index, radius: r });
        }
        circles.push((p.index, p.k1, r));
    }
    let two_pi_i = c64::new(0.0, 2.0 * PI);
    let line = line_integral(&kernel, tau1, quad.q_line);
    let res: Vec<(usize, CMat)> = circles
        .iter()
        .map(|&(idx, c, r)| (idx, circle_integral(&kernel, c, r, quad.q_circle)))
        .collect();
    let scaled = |res: &[(usize, CMat)]| -> Vec<(usize, CMat)> {
        res.iter()
            .map(|(i, m)| {
                let mut m = m.clone();
                m *= faer::Scale(two_pi_i);
                (*i, m)
            })
            .collect()
    };
    if !quad.verify {
        return finish(k2, *basis, tau1, delta0, line, scaled(&res), (quad.q_line, quad.q_circle), None);
    }
    let line2 = line_doubled(&kernel, tau1, quad.q_line, &line);
    let res2: Vec<(usize, CMat)> = circles
        .iter()
        .zip(&res)
        .map(|(&(idx, c, r), (_, coarse))| (idx, circle_doubled(&kernel, c, r, quad.q_circle, coarse)))
        .collect();
    let (res, res2) = (scaled(&res), scaled(&res2));
    let total = |line: &CMat, res: &[(usize, CMat)]| {
        let mut a = line.clone();
        for (_, r) in res {
            a += r;
        }
        a
    };
    let rel = rel_change(&total(&line, &res), &total(&line2, &res2));
    if rel > QUAD_RTOL {
        return Err(AError::QuadratureNotConverged { rel });
    }
    finish(k2, *basis, tau1, delta0, line2, res2, (2 * quad.q_line, 2 * quad.q_circle), Some(rel))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub ell: f64,
    pub re_k2: f64,
    pub norm2: f64,
    pub neumann_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `ln ‖A‖` against `ln ℓ`.
    pub slope_fit: f64,
    /// `max ℓ‖A‖` over the sweep.
    pub c_empirical: f64,
    /// `max ℓ‖A‖` over the sweep divided by its minimum over the upper half.
    pub boundedness_ratio: f64,
}

/// `‖Conv(ε₁)‖₂` on the basis.
pub fn defect_norm(medium: &MediumSpec, basis: &ModeBasis) -> Result<f64, KernelError> {
    linalg::norm2(&medium.convolution_matrix(Part::Defect, basis))
}

pub fn decay_row(ell: f64, family: &AFamily, lambda: f64, medium: &MediumSpec) -> Result<DecayRow, AError> {
    let e1 = defect_norm(medium, &family.basis)?;
    Ok(DecayRow { ell, re_k2: family.k2.re, norm2: family.norm2, neumann_bound: lambda.abs() * family.norm2 * e1 })
}

/// Summarizes `‖A(re + i(π/2 + ℓ))‖` over ascending `ℓ`.
pub fn decay_table(rows: Vec<DecayRow>) -> Result<DecayTable, AError> {
    if rows.len() < 2 {
        return Err(AError::ShortSweep);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.ell.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.norm2.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope_fit = sxy / sxx;
    let scaled: Vec<f64> = rows.iter().map(|r| r.ell * r.norm2).collect();
    let c_empirical = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let upper = &scaled[scaled.len() / 2..];
    let upper_min = upper.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DecayTable { rows, slope_fit, c_empirical, boundedness_ratio: c_empirical / upper_min })
}

/// One sweep height: `ℓ`, `k2`, the up poles and every pole at `k2`.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub ell: f64,
    pub k2: c64,
    pub basis: ModeBasis,
    pub up: Vec<PoleRecord>,
    pub all: Vec<PoleRecord>,
}

/// Deformed assembly at every height, then the decay summary.
pub fn a_decay_sweep(
    points: &[SweepPoint],
    lambda: f64,
    medium: &MediumSpec,
    tau1: f64,
    delta0: f64,
    quad: Quadrature,
) -> Result<(DecayTable, Vec<AFamily>), AError> {
    let mut rows = Vec::with_capacity(points.len());
    let mut fams = Vec::with_capacity(points.len());
    for p in points {
        let fam = assemble_a_deformed(p.k2, lambda, medium, &p.basis, &p.up, &p.all, tau1, delta0, quad)?;
        rows.push(decay_row(p.ell, &fam, lambda, medium)?);
        fams.push(fam);
    }
    Ok((decay_table(rows)?, fams))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    DefinitelyInvertible,
    NumericallyInvertible,
    NearSingular,
}

impl Conclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Conclusion::DefinitelyInvertible => "definitely_invertible",
            Conclusion::NumericallyInvertible => "numerically_invertible",
            Conclusion::NearSingular => "near_singular",
        }
    }
}

impl std::str::FromStr for Conclusion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "definitely_invertible" => Ok(Conclusion::DefinitelyInvertible),
            "numerically_invertible" => Ok(Conclusion::NumericallyInvertible),
            "near_singular" => Ok(Conclusion::NearSingular),
            other => Err(format!("unknown conclusion {other:?}")),
        }
    }
}

/// `σ_min(I − K) ≤ NEAR_SINGULAR` is reported as near singular.
pub const NEAR_SINGULAR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FredholmReport {
    pub k2: (f64, f64),
    pub sigma_min: f64,
    pub neumann_bound: f64,
    pub conclusion: Conclusion,
}

pub fn fredholm_report(family: &AFamily, lambda: f64, medium: &MediumSpec) -> Result<FredholmReport, AError> {
    let e1 = medium.convolution_matrix(Part::Defect, &family.basis);
    let e1_norm = linalg::norm2(&e1)?;
    let n = family.basis.len();
    let k = &family.matrix * &e1;
    let m = CMat::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        c64::new(id, 0.0) - k[(i, j)] * lambda
    });
    let sigma_min = linalg::sigma_min(&m)?;
    let neumann_bound = lambda.abs() * family.norm2 * e1_norm;
    let conclusion = if neumann_bound < 1.0 {
        Conclusion::DefinitelyInvertible
    } else if sigma_min > NEAR_SINGULAR {
        Conclusion::NumericallyInvertible
    } else {
        Conclusion::NearSingular
    };
    Ok(FredholmReport { k2: (family.k2.re, family.k2.im), sigma_min, neumann_bound, conclusion })
}

pub fn fredholm_scan(families: &[AFamily], lambda: f64, medium: &MediumSpec) -> Result<Vec<FredholmReport>, AError> {
    families.iter().map(|f| fredholm_report(f, lambda, medium)).collect()
}
