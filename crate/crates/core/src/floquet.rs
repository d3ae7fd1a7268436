//! Discrete Floquet-Bloch transforms across the cells of a periodic
//! supercell, and the supercell check of the strip resolvent formula.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_operator::{modulation_matrix, resolvent_apply, CellError, SpectralReport, INVERTIBILITY_RTOL};
use crate::linalg::{self, c64, CMat, Factor, KernelError};
use crate::medium::{interval_coefficient, MediumSpec, ModeBasis, Part};
use crate::symbol::CPoint2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FloquetError {
    #[error("grid sizes must be at least 4, got {0} x {1}")]
    Grid(usize, usize),
    #[error("supercell must have at least one cell")]
    NoCells,
    #[error("value array has {got} entries, expected {want}")]
    Shape { got: usize, want: usize },
    #[error("field slices disagree in shape")]
    SliceShape,
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X1,
    X2,
}

/// Samples on `cells` unit cells stacked along `axis`, `g1 × g2` per cell.
/// Row-major, rows running along x1.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    axis: Axis,
    cells: usize,
    g1: usize,
    g2: usize,
    values: Vec<c64>,
}

impl GridFunction {
    pub fn new(axis: Axis, cells: usize, g1: usize, g2: usize, values: Vec<c64>) -> Result<Self, FloquetError> {
        if g1 < 4 || g2 < 4 {
            return Err(FloquetError::Grid(g1, g2));
        }
        if cells == 0 {
            return Err(FloquetError::NoCells);
        }
        let want = cells * g1 * g2;
        if values.len() != want {
            return Err(FloquetError::Shape { got: values.len(), want });
        }
        Ok(Self { axis, cells, g1, g2, values })
    }

    pub fn zeros(axis: Axis, cells: usize, g1: usize, g2: usize) -> Result<Self, FloquetError> {
        Self::new(axis, cells, g1, g2, vec![c64::new(0.0, 0.0); cells * g1 * g2])
    }

    /// Samples `f(x1, x2)` at `x = (i/g1, j/g2)` over the supercell.
    pub fn sample(axis: Axis, cells: usize, g1: usize, g2: usize, f: impl Fn(f64, f64) -> c64) -> Result<Self, FloquetError> {
        let (r, c) = shape(axis, cells, g1, g2);
        let values = (0..r * c).map(|k| f((k / c) as f64 / g1 as f64, (k % c) as f64 / g2 as f64)).collect();
        Self::new(axis, cells, g1, g2, values)
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.g1, self.g2)
    }

    /// Array dimensions `(rows along x1, columns along x2)`.
    pub fn dims(&self) -> (usize, usize) {
        shape(self.axis, self.cells, self.g1, self.g2)
    }

    pub fn values(&self) -> &[c64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [c64] {
        &mut self.values
    }

    pub fn at(&self, row: usize, col: usize) -> c64 {
        self.values[row * self.dims().1 + col]
    }

    /// Discrete inner product with cell-area weights `1/(g1 g2)`.
    pub fn inner(&self, other: &Self) -> c64 {
        let s: c64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        s / (self.g1 * self.g2) as f64
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    /// Index in `values` of local point `(p, q)` of cell `c`.
    fn cell_index(&self, c: usize, p: usize, q: usize) -> usize {
        let (_, cols) = self.dims();
        match self.axis {
            Axis::X1 => (c * self.g1 + p) * cols + q,
            Axis::X2 => p * cols + c * self.g2 + q,
        }
    }

    fn local_coordinate(&self, p: usize, q: usize) -> f64 {
        match self.axis {
            Axis::X1 => p as f64 / self.g1 as f64,
            Axis::X2 => q as f64 / self.g2 as f64,
        }
    }
}

fn shape(axis: Axis, cells: usize, g1: usize, g2: usize) -> (usize, usize) {
    match axis {
        Axis::X1 => (cells * g1, g2),
        Axis::X2 => (g1, cells * g2),
    }
}

/// One single-cell slice per dual node `k = 2πj/L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetField {
    pub axis: Axis,
    pub slices: Vec<GridFunction>,
}

impl FloquetField {
    pub fn nodes(&self) -> Vec<f64> {
        let l = self.slices.len();
        (0..l).map(|j| 2.0 * PI * j as f64 / l as f64).collect()
    }
}

/// `slice_k(x) = L^{-1/2} Σ_n e^{ik(n − x)} f(x − n)`, translations taken
/// modulo the supercell.
pub fn floquet_forward(axis: Axis, f: &GridFunction) -> Result<FloquetField, FloquetError> {
    if f.axis != axis {
        return Err(FloquetError::SliceShape);
    }
    let l = f.cells;
    let norm = 1.0 / (l as f64).sqrt();
    let mut slices = Vec::with_capacity(l);
    for j in 0..l {
        let k = 2.0 * PI * j as f64 / l as f64;
        let mut s = GridFunction::zeros(axis, 1, f.g1, f.g2)?;
        for p in 0..f.g1 {
            for q in 0..f.g2 {
                let x = f.local_coordinate(p, q);
                let mut acc = c64::new(0.0, 0.0);
                for n in 0..l {
                    let c = (l - n) % l;
                    acc += c64::from_polar(1.0, k * (n as f64 - x)) * f.values[f.cell_index(c, p, q)];
                }
                let idx = s.cell_index(0, p, q);
                s.values[idx] = acc * norm;
            }
        }
        slices.push(s);
    }
    Ok(FloquetField { axis, slices })
}

pub fn floquet_inverse(axis: Axis, field: &FloquetField) -> Result<GridFunction, FloquetError> {
    let l = field.slices.len();
    if l == 0 {
        return Err(FloquetError::NoCells);
    }
    let (g1, g2) = field.slices[0].grid();
    if field.axis != axis || field.slices.iter().any(|s| s.grid() != (g1, g2) || s.cells != 1 || s.axis != axis) {
        return Err(FloquetError::SliceShape);
    }
    let norm = 1.0 / (l as f64).sqrt();
    let mut out = GridFunction::zeros(axis, l, g1, g2)?;
    for c in 0..l {
        for p in 0..g1 {
            for q in 0..g2 {
                let x = out.local_coordinate(p, q) + c as f64;
                let mut acc = c64::new(0.0, 0.0);
                for (j, s) in field.slices.iter().enumerate() {
                    let k = 2.0 * PI * j as f64 / l as f64;
                    acc += c64::from_polar(1.0, k * x) * s.values[s.cell_index(0, p, q)];
                }
                let idx = out.cell_index(c, p, q);
                out.values[idx] = acc * norm;
            }
        }
    }
    Ok(out)
}

/// Both sides of the strip resolvent formula on the source cell.
#[derive(Debug, Clone)]
pub struct StripCheck {
    pub lhs: GridFunction,
    pub rhs: GridFunction,
    pub rel_err: f64,
}

fn evaluate_on_cell(coeffs: &[(f64, f64, c64)], g1: usize, g2: usize) -> Result<GridFunction, FloquetError> {
    GridFunction::sample(Axis::X1, 1, g1, g2, |x1, x2| {
        coeffs.iter().map(|&(a, b, v)| v * c64::from_polar(1.0, a * x1 + b * x2)).sum()
    })
}

/// Solves `(−Δ_{k2} − λε₀) u = f` on an `L`-cell periodic supercell for
/// `f` supported in cell 0 (given by its coefficients on `basis`), and
/// compares with `Σ_j (2π/L) e^{ik1x1} T(k1, k2) e^{−ik1x1} f` over the
/// dual nodes `k1 = 2πj/L`. Both sides are sampled on cell 0.
pub fn strip_resolvent_check(
    k2: f64,
    lambda: f64,
    medium: &MediumSpec,
    basis: &ModeBasis,
    cells: usize,
    f: &[c64],
    grid: (usize, usize),
) -> Result<StripCheck, FloquetError> {
    if cells == 0 {
        return Err(FloquetError::NoCells);
    }
    if f.len() != basis.len() {
        return Err(FloquetError::Shape { got: f.len(), want: basis.len() });
    }
    let (g1, g2) = grid;
    if g1 < 4 || g2 < 4 {
        return Err(FloquetError::Grid(g1, g2));
    }
    let l = cells as i64;
    let lf = cells as f64;
    let (n1_min, n1_max) = basis.n1_range();
    let (n2_min, n2_max) = basis.n2_range();
    let cell_modes: Vec<_> = basis.iter().collect();

    // Supercell modes (p, n2): e^{i(2πp/L)x1 + i2πn2x2}.
    let ps: Vec<i64> = (l * n1_min..l * (n1_max + 1)).collect();
    let n2s: Vec<i64> = (n2_min..=n2_max).collect();
    let sup: Vec<(i64, i64)> = ps.iter().flat_map(|&p| n2s.iter().map(move |&n2| (p, n2))).collect();
    let ns = sup.len();

    // Supercell Fourier coefficients of ε₀, summed cell by cell.
    let sup_coef = |d: i64, e: i64| -> c64 {
        let mu1 = 2.0 * PI * d as f64 / lf;
        let mu2 = 2.0 * PI * e as f64;
        let mut acc = c64::new(0.0, 0.0);
        for c in 0..cells {
            let shift = c64::from_polar(1.0, -mu1 * c as f64);
            let mut cell = if e == 0 { interval_coefficient(0.0, 1.0, mu1) * medium.eps0_background } else { c64::new(0.0, 0.0) };
            for r in &medium.eps0_rectangles {
                cell += interval_coefficient(r.x1_lo, r.x1_hi, mu1) * interval_coefficient(r.x2_lo, r.x2_hi, mu2) * r.value;
            }
            acc += shift * cell;
        }
        acc / lf
    };
    let big = CMat::from_fn(ns, ns, |i, j| {
        let (p, a) = sup[i];
        let (q, b) = sup[j];
        let mut v = sup_coef(p - q, a - b) * (-lambda);
        if i == j {
            let kx = 2.0 * PI * p as f64 / lf;
            let ky = k2 + 2.0 * PI * a as f64;
            v += kx * kx + ky * ky;
        }
        c64::new(0.0, 0.0) + v
    });
    let rep = SpectralReport::of(&big)?;
    if !rep.invertible {
        return Err(CellError::NotInvertible { sigma_min: rep.sigma_min, threshold: INVERTIBILITY_RTOL * rep.norm2 }.into());
    }
    let rhs_vec: Vec<c64> = sup
        .iter()
        .map(|&(p, a)| {
            let kx = 2.0 * PI * p as f64 / lf;
            let s: c64 = cell_modes
                .iter()
                .zip(f)
                .filter(|(m, _)| m.n2 == a)
                .map(|(m, v)| v * crate::cell_operator::cell_phase(c64::new(kx - m.m1(), 0.0)))
                .sum();
            s / lf
        })
        .collect();
    let u = Factor::new(big).solve_vec(&rhs_vec);
    let lhs_coeffs: Vec<(f64, f64, c64)> =
        sup.iter().zip(&u).map(|(&(p, a), &v)| (2.0 * PI * p as f64 / lf, 2.0 * PI * a as f64, v)).collect();
    let lhs = evaluate_on_cell(&lhs_coeffs, g1, g2)?;

    let mut rhs_coeffs = Vec::with_capacity(cells * basis.len());
    let fcol = linalg::column(f);
    for j in 0..cells {
        let k1 = 2.0 * PI * j as f64 / lf;
        let modulated = linalg::column_to_vec(&(&modulation_matrix(c64::new(k1, 0.0), basis) * &fcol), 0);
        let t = resolvent_apply(CPoint2::new(c64::new(k1, 0.0), c64::new(k2, 0.0)), lambda, medium, basis, &modulated)?;
        for (m, v) in cell_modes.iter().zip(t) {
            rhs_coeffs.push((k1 + m.m1(), m.m2(), v * (2.0 * PI / lf)));
        }
    }
    let rhs = evaluate_on_cell(&rhs_coeffs, g1, g2)?;

    let diff: f64 = lhs.values.iter().zip(&rhs.values).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let scale: f64 = lhs.values.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let rel_err = if scale == 0.0 { diff } else { diff / scale };
    Ok(StripCheck { lhs, rhs, rel_err })
}

/// Pointwise product with a cell-periodic function, per cell.
pub fn multiply_periodic(f: &GridFunction, eps: impl Fn(f64, f64) -> c64) -> GridFunction {
    let mut out = f.clone();
    let (_, cols) = f.dims();
    for (k, v) in out.values.iter_mut().enumerate() {
        let x1 = (k / cols) as f64 / f.g1 as f64;
        let x2 = (k % cols) as f64 / f.g2 as f64;
        *v *= eps(x1.rem_euclid(1.0), x2.rem_euclid(1.0));
    }
    out
}

/// Samples of the medium's ε on a supercell grid.
pub fn sample_medium(medium: &MediumSpec, part: Part, axis: Axis, cells: usize, g1: usize, g2: usize) -> Result<GridFunction, FloquetError> {
    GridFunction::sample(axis, cells, g1, g2, |x1, x2| c64::new(medium.value_at(part, x1, x2), 0.0))
}
