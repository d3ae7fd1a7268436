//! Piecewise-constant dielectric media on the unit cell, the Fourier mode
//! basis, and exact Fourier data of the media.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{c64, CMat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MediumError {
    #[error("rectangle [{0}, {1}] x [{2}, {3}] is not an ordered sub-box of the unit cell")]
    BadRectangle(f64, f64, f64, f64),
    #[error("non-finite value in medium description")]
    NonFinite,
    #[error("background permittivity must be positive, got {0}")]
    Background(f64),
    #[error("{which} has essential infimum {value} <= 0")]
    NotPositive { which: &'static str, value: f64 },
    #[error("defect rectangle {0} must satisfy 0 < x1_lo and x1_hi < 1")]
    DefectSupport(usize),
    #[error("defect is identically zero")]
    EmptyDefect,
    #[error("mode basis is empty: n1 {0}..={1}, n2 {2}..={3}")]
    EmptyBasis(i64, i64, i64, i64),
}

/// Axis-aligned box in cell coordinates carrying an additive value.
/// Serialized as `[x1_lo, x1_hi, x2_lo, x2_hi, value]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct Rectangle {
    pub x1_lo: f64,
    pub x1_hi: f64,
    pub x2_lo: f64,
    pub x2_hi: f64,
    pub value: f64,
}

impl Rectangle {
    pub fn new(x1_lo: f64, x1_hi: f64, x2_lo: f64, x2_hi: f64, value: f64) -> Result<Self, MediumError> {
        if ![x1_lo, x1_hi, x2_lo, x2_hi, value].iter().all(|v| v.is_finite()) {
            return Err(MediumError::NonFinite);
        }
        let ordered = 0.0 <= x1_lo && x1_lo < x1_hi && x1_hi <= 1.0 && 0.0 <= x2_lo && x2_lo < x2_hi && x2_hi <= 1.0;
        if !ordered {
            return Err(MediumError::BadRectangle(x1_lo, x1_hi, x2_lo, x2_hi));
        }
        Ok(Self { x1_lo, x1_hi, x2_lo, x2_hi, value })
    }

    pub fn contains(&self, x1: f64, x2: f64) -> bool {
        self.x1_lo <= x1 && x1 < self.x1_hi && self.x2_lo <= x2 && x2 < self.x2_hi
    }

    fn coefficient(&self, n1: i64, n2: i64) -> c64 {
        let a = interval_coefficient(self.x1_lo, self.x1_hi, 2.0 * PI * n1 as f64);
        let b = interval_coefficient(self.x2_lo, self.x2_hi, 2.0 * PI * n2 as f64);
        a * b * self.value
    }
}

impl TryFrom<[f64; 5]> for Rectangle {
    type Error = MediumError;
    fn try_from(v: [f64; 5]) -> Result<Self, Self::Error> {
        Rectangle::new(v[0], v[1], v[2], v[3], v[4])
    }
}

impl From<Rectangle> for [f64; 5] {
    fn from(r: Rectangle) -> Self {
        [r.x1_lo, r.x1_hi, r.x2_lo, r.x2_hi, r.value]
    }
}

/// `∫_a^b e^{-i mu x} dx`.
pub fn interval_coefficient(a: f64, b: f64, mu: f64) -> c64 {
    if mu == 0.0 {
        return c64::new(b - a, 0.0);
    }
    let eb = c64::from_polar(1.0, -mu * b);
    let ea = c64::from_polar(1.0, -mu * a);
    (eb - ea) / c64::new(0.0, -mu)
}

/// Which of the two dielectric functions an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    /// The periodic background ε₀.
    Periodic,
    /// The compactly supported perturbation ε₁.
    Defect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub eps0_background: f64,
    #[serde(default)]
    pub eps0_rectangles: Vec<Rectangle>,
    #[serde(default)]
    pub eps1_rectangles: Vec<Rectangle>,
}

impl MediumSpec {
    /// Homogeneous background with the given defect rectangles.
    pub fn homogeneous(background: f64, defect: Vec<Rectangle>) -> Self {
        Self { eps0_background: background, eps0_rectangles: Vec::new(), eps1_rectangles: defect }
    }

    pub fn validate(&self) -> Result<(), MediumError> {
        if !self.eps0_background.is_finite() {
            return Err(MediumError::NonFinite);
        }
        if self.eps0_background <= 0.0 {
            return Err(MediumError::Background(self.eps0_background));
        }
        for r in self.eps0_rectangles.iter().chain(&self.eps1_rectangles) {
            Rectangle::new(r.x1_lo, r.x1_hi, r.x2_lo, r.x2_hi, r.value)?;
        }
        let (inf0, _) = self.extremes(Part::Periodic);
        if inf0 <= 0.0 {
            return Err(MediumError::NotPositive { which: "eps0", value: inf0 });
        }
        for (i, r) in self.eps1_rectangles.iter().enumerate() {
            if !(r.x1_lo > 0.0 && r.x1_hi < 1.0) {
                return Err(MediumError::DefectSupport(i));
            }
        }
        if !self.eps1_rectangles.iter().any(|r| r.value.abs() > 0.0) {
            return Err(MediumError::EmptyDefect);
        }
        let total = self.total_infimum();
        if total <= 0.0 {
            return Err(MediumError::NotPositive { which: "eps0 + eps1", value: total });
        }
        Ok(())
    }

    fn rectangles(&self, part: Part) -> &[Rectangle] {
        match part {
            Part::Periodic => &self.eps0_rectangles,
            Part::Defect => &self.eps1_rectangles,
        }
    }

    fn base(&self, part: Part) -> f64 {
        match part {
            Part::Periodic => self.eps0_background,
            Part::Defect => 0.0,
        }
    }

    /// Pointwise value; rectangles are half-open so every point has one value.
    pub fn value_at(&self, part: Part, x1: f64, x2: f64) -> f64 {
        let x1 = x1.rem_euclid(1.0);
        let x2 = x2.rem_euclid(1.0);
        self.base(part)
            + self
                .rectangles(part)
                .iter()
                .filter(|r| r.contains(x1, x2))
                .map(|r| r.value)
                .sum::<f64>()
    }

    /// `∫_Ω ε(x) e^{-i m·x} dx` at `m = 2π(n1, n2)`.
    pub fn fourier_coefficient(&self, part: Part, n1: i64, n2: i64) -> c64 {
        let mut acc = if n1 == 0 && n2 == 0 { c64::new(self.base(part), 0.0) } else { c64::new(0.0, 0.0) };
        for r in self.rectangles(part) {
            acc += r.coefficient(n1, n2);
        }
        acc
    }

    /// Matrix of multiplication by ε in `basis`: entry (m, m') = ε̂(m − m').
    pub fn convolution_matrix(&self, part: Part, basis: &ModeBasis) -> CMat {
        let c1 = basis.n1_count() as i64;
        let c2 = basis.n2_count() as i64;
        let w2 = (2 * c2 - 1) as usize;
        let mut table = Vec::with_capacity(((2 * c1 - 1) * (2 * c2 - 1)) as usize);
        for d1 in -(c1 - 1)..c1 {
            for d2 in -(c2 - 1)..c2 {
                table.push(self.fourier_coefficient(part, d1, d2));
            }
        }
        let modes: Vec<Mode> = basis.iter().collect();
        CMat::from_fn(modes.len(), modes.len(), |i, j| {
            let d1 = modes[i].n1 - modes[j].n1 + c1 - 1;
            let d2 = modes[i].n2 - modes[j].n2 + c2 - 1;
            table[d1 as usize * w2 + d2 as usize]
        })
    }

    fn cells(&self, rects: &[&Rectangle]) -> Vec<(f64, f64, f64)> {
        let mut b1 = vec![0.0, 1.0];
        let mut b2 = vec![0.0, 1.0];
        for r in rects {
            b1.extend([r.x1_lo, r.x1_hi]);
            b2.extend([r.x2_lo, r.x2_hi]);
        }
        for b in [&mut b1, &mut b2] {
            b.sort_by(f64::total_cmp);
            b.dedup();
        }
        let mut out = Vec::new();
        for w1 in b1.windows(2) {
            for w2 in b2.windows(2) {
                let area = (w1[1] - w1[0]) * (w2[1] - w2[0]);
                out.push(((w1[0] + w1[1]) / 2.0, (w2[0] + w2[1]) / 2.0, area));
            }
        }
        out
    }

    /// Exact (essential infimum, essential supremum), found by evaluating
    /// every cell of the grid spanned by the rectangle corners.
    pub fn extremes(&self, part: Part) -> (f64, f64) {
        let rects: Vec<&Rectangle> = self.rectangles(part).iter().collect();
        self.cells(&rects).into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x1, x2, _)| {
            let v = self.value_at(part, x1, x2);
            (lo.min(v), hi.max(v))
        })
    }

    pub fn sup_norm(&self, part: Part) -> f64 {
        let (lo, hi) = self.extremes(part);
        lo.abs().max(hi.abs())
    }

    fn total_infimum(&self) -> f64 {
        let rects: Vec<&Rectangle> = self.eps0_rectangles.iter().chain(&self.eps1_rectangles).collect();
        self.cells(&rects)
            .into_iter()
            .map(|(x1, x2, _)| self.value_at(Part::Periodic, x1, x2) + self.value_at(Part::Defect, x1, x2))
            .fold(f64::INFINITY, f64::min)
    }

    /// `∫_Ω |ε|²`, exact.
    pub fn l2_norm_sq(&self, part: Part) -> f64 {
        let rects: Vec<&Rectangle> = self.rectangles(part).iter().collect();
        self.cells(&rects)
            .into_iter()
            .map(|(x1, x2, area)| area * self.value_at(part, x1, x2).powi(2))
            .sum()
    }
}

/// Essential supremum of ε₀ over the cell.
pub fn sup_norm_eps0(medium: &MediumSpec) -> f64 {
    medium.sup_norm(Part::Periodic)
}

/// Fourier mode `e^{i m·x}` with `m = 2π(n1, n2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode {
    pub n1: i64,
    pub n2: i64,
}

impl Mode {
    pub const fn new(n1: i64, n2: i64) -> Self {
        Self { n1, n2 }
    }

    pub fn m1(self) -> f64 {
        2.0 * PI * self.n1 as f64
    }

    pub fn m2(self) -> f64 {
        2.0 * PI * self.n2 as f64
    }
}

/// Rectangular window of modes, enumerated with n1 major and n2 minor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeBasis {
    n1_min: i64,
    n1_max: i64,
    n2_min: i64,
    n2_max: i64,
}

impl ModeBasis {
    pub fn new(n1_min: i64, n1_max: i64, n2_min: i64, n2_max: i64) -> Result<Self, MediumError> {
        if n1_min > n1_max || n2_min > n2_max {
            return Err(MediumError::EmptyBasis(n1_min, n1_max, n2_min, n2_max));
        }
        Ok(Self { n1_min, n1_max, n2_min, n2_max })
    }

    /// Window `[-h1, h1] x [-h2, h2]`.
    pub fn symmetric(h1: u32, h2: u32) -> Self {
        let (h1, h2) = (h1 as i64, h2 as i64);
        Self { n1_min: -h1, n1_max: h1, n2_min: -h2, n2_max: h2 }
    }

    pub fn n1_range(&self) -> (i64, i64) {
        (self.n1_min, self.n1_max)
    }

    pub fn n2_range(&self) -> (i64, i64) {
        (self.n2_min, self.n2_max)
    }

    pub fn n1_count(&self) -> usize {
        (self.n1_max - self.n1_min + 1) as usize
    }

    pub fn n2_count(&self) -> usize {
        (self.n2_max - self.n2_min + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.n1_count() * self.n2_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, m: Mode) -> Option<usize> {
        let inside = (self.n1_min..=self.n1_max).contains(&m.n1) && (self.n2_min..=self.n2_max).contains(&m.n2);
        inside.then(|| ((m.n1 - self.n1_min) as usize) * self.n2_count() + (m.n2 - self.n2_min) as usize)
    }

    pub fn mode(&self, idx: usize) -> Mode {
        let c2 = self.n2_count();
        Mode::new(self.n1_min + (idx / c2) as i64, self.n2_min + (idx % c2) as i64)
    }

    pub fn iter(&self) -> impl Iterator<Item = Mode> + '_ {
        (0..self.len()).map(move |i| self.mode(i))
    }

    /// Whether the mode lies on the outermost shell of the window.
    pub fn on_boundary(&self, m: Mode) -> bool {
        m.n1 == self.n1_min || m.n1 == self.n1_max || m.n2 == self.n2_min || m.n2 == self.n2_max
    }
}
