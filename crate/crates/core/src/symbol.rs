//! Closed-form layer: the symbol of the shifted Laplacian, its lower
//! bounds, the pole-free line set, the rectangular contours around
//! `±π/2`, and the free-pole maps.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::c64;
use crate::medium::Mode;

/// Tolerance used when deciding whether a point lies on a line of the set.
pub const LINE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolError {
    #[error("beta must lie in (0, pi), got {0}")]
    Beta(f64),
    #[error("delta must lie in (0, pi/4), got {0}")]
    Delta(f64),
    #[error("tau1 must be a positive multiple of 2 pi, got {0}")]
    Tau1(f64),
    #[error("contour level 2 pi * {n2} outside [-tau1 + 2 pi, tau1]")]
    ContourLevel { n2: i64 },
    #[error("q_nodes must be a multiple of 4 and at least 8, got {0}")]
    Nodes(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CPoint2 {
    pub k1: c64,
    pub k2: c64,
}

impl CPoint2 {
    pub fn new(k1: c64, k2: c64) -> Self {
        Self { k1, k2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `(m1 + k1)² + (m2 + k2)²`, complex squaring.
pub fn symbol(m: Mode, k: CPoint2) -> c64 {
    let a = k.k1 + m.m1();
    let b = k.k2 + m.m2();
    a * a + b * b
}

/// The two lower bounds for `|s(m, ξ + iη)|²`.
///
/// With `a = m + ξ`, `|s|² - b1 = 2(a1 a2 + η1 η2)² + 2(a·η)²` and
/// `|s|² - b2 = (|a|² - |η|²)² + 2(a·η)²`, so both are nonnegative.
pub fn hammer_bounds(m: Mode, xi: [f64; 2], eta: [f64; 2]) -> (f64, f64) {
    let a1 = m.m1() + xi[0];
    let a2 = m.m2() + xi[1];
    let b1 = (a2 * a2 - eta[0] * eta[0]).powi(2) + (a1 * a1 - eta[1] * eta[1]).powi(2);
    let b2 = 2.0 * (a1 * eta[0] + a2 * eta[1]).powi(2);
    (b1, b2)
}

/// Lower bound `(2m + 3π + β)(π − β)` for
/// `min |(m2 + ξ2)² − (m + 2π)²|` over `m2 ∈ 2πℤ`, `ξ2 ∈ [π − β, π + β]`,
/// where `m = 2πn`.
pub fn min_gap(beta: f64, n: u32) -> Result<f64, SymbolError> {
    if !(beta > 0.0 && beta < PI) {
        return Err(SymbolError::Beta(beta));
    }
    let m = 2.0 * PI * n as f64;
    Ok((2.0 * m + 3.0 * PI + beta) * (PI - beta))
}

/// Brute-force minimum behind [`min_gap`] over `m2 ∈ 2π[-m2_span, m2_span]`
/// and `xi_points` equispaced `ξ2` including both endpoints.
pub fn min_gap_brute(beta: f64, n: u32, m2_span: i64, xi_points: usize) -> f64 {
    let target = (2.0 * PI * (n as f64 + 1.0)).powi(2);
    let mut best = f64::INFINITY;
    for j in 0..xi_points {
        let xi = PI - beta + 2.0 * beta * j as f64 / (xi_points - 1) as f64;
        for n2 in -m2_span..=m2_span {
            let v = ((2.0 * PI * n2 as f64 + xi).powi(2) - target).abs();
            best = best.min(v);
        }
    }
    best
}

/// Smallest `τ1 = 2πn`, `n ≥ 1`, with `θ(2(τ1 − 2π) + 4π − θ) ≥ 2λ‖ε0‖∞`.
pub fn select_tau1(lambda: f64, eps0_sup: f64, theta: f64) -> f64 {
    if lambda <= 0.0 {
        return 2.0 * PI;
    }
    let need = 2.0 * lambda * eps0_sup;
    let mut n = 1u64;
    loop {
        let tau1 = 2.0 * PI * n as f64;
        if theta * (2.0 * (tau1 - 2.0 * PI) + 4.0 * PI - theta) >= need {
            return tau1;
        }
        n += 1;
    }
}

/// Four vertical lines `Re k1 = ±π/2 ± 2δ` and the horizontal segments
/// `Im k1 ∈ 2πℤ ∩ [-τ1, τ1]`, `Re k1 ∈ [-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinesSet {
    delta: f64,
    tau1: f64,
}

impl LinesSet {
    pub fn new(delta: f64, tau1: f64) -> Result<Self, SymbolError> {
        if !(delta > 0.0 && delta < PI / 4.0) {
            return Err(SymbolError::Delta(delta));
        }
        let n = tau1 / (2.0 * PI);
        if !(n >= 1.0 - 1e-12 && (n - n.round()).abs() < 1e-9) {
            return Err(SymbolError::Tau1(tau1));
        }
        Ok(Self { delta, tau1 })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn tau1(&self) -> f64 {
        self.tau1
    }
}

pub fn lines_contains(k1: c64, lines: &LinesSet) -> bool {
    let two_d = 2.0 * lines.delta;
    let vertical = [PI / 2.0 + two_d, PI / 2.0 - two_d, -PI / 2.0 + two_d, -PI / 2.0 - two_d]
        .iter()
        .any(|&x| (k1.re - x).abs() <= LINE_TOL);
    let level = k1.im / (2.0 * PI);
    let horizontal = (level - level.round()).abs() * 2.0 * PI <= LINE_TOL
        && k1.im.abs() <= lines.tau1 + LINE_TOL
        && k1.re >= -PI - LINE_TOL
        && k1.re <= PI + LINE_TOL;
    vertical || horizontal
}

/// Boundary of `{Re k1 ∈ [±π/2 − 2δ, ±π/2 + 2δ], Im k1 ∈ [m2 − 2π, m2]}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectContour {
    pub sign: Sign,
    /// Level index: the top edge sits at `Im k1 = 2π n2`.
    pub n2: i64,
    pub delta: f64,
}

impl RectContour {
    pub fn new(sign: Sign, n2: i64, lines: &LinesSet) -> Result<Self, SymbolError> {
        let m2 = 2.0 * PI * n2 as f64;
        if m2 < -lines.tau1 + 2.0 * PI - 1e-9 || m2 > lines.tau1 + 1e-9 {
            return Err(SymbolError::ContourLevel { n2 });
        }
        Ok(Self { sign, n2, delta: lines.delta })
    }

    pub fn center(&self) -> c64 {
        c64::new(self.sign.factor() * PI / 2.0, 2.0 * PI * self.n2 as f64 - PI)
    }

    /// Counterclockwise corners starting bottom-left.
    pub fn corners(&self) -> [c64; 4] {
        let c = self.sign.factor() * PI / 2.0;
        let (lo, hi) = (c - 2.0 * self.delta, c + 2.0 * self.delta);
        let top = 2.0 * PI * self.n2 as f64;
        let bot = top - 2.0 * PI;
        [c64::new(lo, bot), c64::new(hi, bot), c64::new(hi, top), c64::new(lo, top)]
    }

    /// Whether `z` lies strictly inside the rectangle.
    pub fn encloses(&self, z: c64) -> bool {
        let [bl, _, tr, _] = self.corners();
        z.re > bl.re && z.re < tr.re && z.im > bl.im && z.im < tr.im
    }

    /// Distance from `z` to the boundary polyline.
    pub fn boundary_distance(&self, z: c64) -> f64 {
        let c = self.corners();
        (0..4).map(|i| segment_distance(z, c[i], c[(i + 1) % 4])).fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(z: c64, a: c64, b: c64) -> f64 {
    let d = b - a;
    let t = ((z - a) * d.conj()).re / d.norm_sqr();
    let p = a + d * t.clamp(0.0, 1.0);
    (z - p).norm()
}

/// `q_nodes/4` uniform nodes per side, counterclockwise from the bottom-left corner.
pub fn gamma_contour_points(c: &RectContour, q_nodes: usize) -> Result<Vec<c64>, SymbolError> {
    if q_nodes < 8 || q_nodes % 4 != 0 {
        return Err(SymbolError::Nodes(q_nodes));
    }
    let per = q_nodes / 4;
    let corners = c.corners();
    let mut out = Vec::with_capacity(q_nodes);
    for s in 0..4 {
        let a = corners[s];
        let b = corners[(s + 1) % 4];
        for j in 0..per {
            out.push(a + (b - a) * (j as f64 / per as f64));
        }
    }
    Ok(out)
}

/// Trapezoid rule on the closed polyline: nodes with their `dz` weights.
pub fn gamma_contour_quadrature(c: &RectContour, q_nodes: usize) -> Result<Vec<(c64, c64)>, SymbolError> {
    let pts = gamma_contour_points(c, q_nodes)?;
    let n = pts.len();
    Ok((0..n).map(|i| (pts[i], (pts[(i + 1) % n] - pts[(i + n - 1) % n]) * 0.5)).collect())
}

/// Free pole map: the `k1` at which `s(m, (k1, ξ2 + i(π/2 + ℓ)))` vanishes
/// on the branch selected by `sign`.
pub fn free_pole_oracle(m: Mode, xi2: f64, ell: f64, sign: Sign) -> c64 {
    let s = sign.factor();
    let a = (m.m2() + xi2).abs();
    let im = if m.m2() >= 0.0 { -s * a } else { s * a };
    c64::new(s * (PI / 2.0 + ell) - m.m1(), im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSweep {
    pub samples: usize,
    pub violations: usize,
    /// Smallest `(|s|² − max(b1, b2)) / (1 + |s|²)` seen.
    pub min_slack: f64,
}

/// Random check of `|s|² ≥ max(b1, b2)` with `m ∈ 2π[-8, 8]²`,
/// `ξ ∈ [-π, π]²`, `η ∈ [-20, 20]²`.
pub fn hammer_sweep(samples: usize, seed: u64) -> EstimateSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for _ in 0..samples {
        let m = Mode::new(rng.random_range(-8..=8), rng.random_range(-8..=8));
        let xi = [rng.random_range(-PI..=PI), rng.random_range(-PI..=PI)];
        let eta = [rng.random_range(-20.0..=20.0), rng.random_range(-20.0..=20.0)];
        let k = CPoint2::new(c64::new(xi[0], eta[0]), c64::new(xi[1], eta[1]));
        let s2 = symbol(m, k).norm_sqr();
        let (b1, b2) = hammer_bounds(m, xi, eta);
        let scale = 1.0 + s2;
        let slack = (s2 - b1.max(b2)) / scale;
        if slack < -1e-9 {
            violations += 1;
        }
        min_slack = min_slack.min(slack);
    }
    EstimateSweep { samples, violations, min_slack }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCase {
    pub beta: f64,
    pub n: u32,
    pub bound: f64,
    pub brute: f64,
}

/// Brute force against [`min_gap`] on the given grid of `(β, n)`.
pub fn min_gap_sweep(betas: &[f64], ns: &[u32], m2_span: i64, xi_points: usize) -> Result<Vec<GapCase>, SymbolError> {
    let mut out = Vec::new();
    for &beta in betas {
        for &n in ns {
            let bound = min_gap(beta, n)?;
            let brute = min_gap_brute(beta, n, m2_span, xi_points);
            out.push(GapCase { beta, n, bound, brute });
        }
    }
    Ok(out)
}
