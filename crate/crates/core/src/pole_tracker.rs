//! Poles of the cell resolvent as eigenvalues of the quadratic pencil
//! `M(k1) = k1² I + k1 diag(2m1) + K0`, their up/down classification,
//! continuation along paths in the `k2`-plane, and contour rank checks.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_operator::CellOperator;
use crate::linalg::{self, c64, CMat, Factor, KernelError};
use crate::medium::{MediumSpec, ModeBasis};
use crate::symbol::{gamma_contour_quadrature, RectContour, SymbolError};

/// Records with more eigenvector mass than this on the outer shell are untrusted.
pub const TAIL_TRUST: f64 = 0.05;
/// Relative eigenpair residual above which a record is untrusted.
pub const RESIDUAL_TRUST: f64 = 1e-8;
/// Folded records closer than this are the same pole.
pub const MERGE_DIST: f64 = 1e-6;
/// `|Im k1|` at or below this is a real pole.
pub const TOL_REAL: f64 = 1e-6;
pub const COLLISION_TOL: f64 = 1e-3;
/// Raw eigenvalues closer than this to a contour make its rank meaningless.
pub const CONTOUR_CLEARANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("eigensolver failure: {0}")]
    EigKernelFailure(#[from] KernelError),
    #[error("need at least {need} real samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("non-real pole at |Im| = {min_im:e}; no clean gap at these samples")]
    GapCollapse { min_im: f64 },
    #[error("start index {0} out of range")]
    StartIndex(usize),
    #[error("tracking lost near k2 = {re} + {im}i: {reason}")]
    TrackingLost { re: f64, im: f64, reason: String },
    #[error("path leaves Z at k2 = {re} + {im}i")]
    PathExitsZ { re: f64, im: f64 },
    #[error("invalid path: {0}")]
    Path(String),
    #[error("pencil eigenvalue {dist:e} from the contour")]
    EigOnContour { dist: f64 },
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoleClass {
    Up,
    Down,
    Real,
    Untrusted,
}

impl PoleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PoleClass::Up => "up",
            PoleClass::Down => "down",
            PoleClass::Real => "real",
            PoleClass::Untrusted => "untrusted",
        }
    }
}

impl std::str::FromStr for PoleClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "up" => Ok(PoleClass::Up),
            "down" => Ok(PoleClass::Down),
            "real" => Ok(PoleClass::Real),
            "untrusted" => Ok(PoleClass::Untrusted),
            other => Err(format!("unknown pole class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleRecord {
    /// Representative with `Re k1 ∈ [−π, π)`.
    pub k1: c64,
    /// Eigenvalue of the pencil before folding.
    pub raw: c64,
    pub klass: PoleClass,
    pub tail_mass: f64,
    pub residual: f64,
    pub index: usize,
}

/// `x` wrapped into `[−π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

pub fn fold(z: c64) -> c64 {
    c64::new(wrap_angle(z.re), z.im)
}

/// Distance on the cylinder `ℂ / 2π`.
pub fn cyl_dist(a: c64, b: c64) -> f64 {
    c64::new(wrap_angle(a.re - b.re), a.im - b.im).norm()
}

/// Companion linearization `[[0, I], [A, B]]`, `A = −K0`, `B = −diag(2m1)`,
/// of the pencil at `(k2, μ)`.
#[derive(Debug, Clone)]
pub struct PencilMatrix {
    pub k2: c64,
    pub mu: f64,
    pub op: CellOperator,
    pub companion: CMat,
}

impl PencilMatrix {
    pub fn new(k2: c64, mu: f64, medium: &MediumSpec, basis: &ModeBasis) -> Self {
        let op = CellOperator::new(k2, mu, medium, basis);
        let n = op.len();
        let k0 = op.matrix(c64::new(0.0, 0.0));
        let m1 = op.m1().to_vec();
        let companion = CMat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => c64::new(0.0, 0.0),
            (true, false) => c64::new(if j - n == i { 1.0 } else { 0.0 }, 0.0),
            (false, true) => -k0[(i - n, j)],
            (false, false) => c64::new(if i == j { -2.0 * m1[i - n] } else { 0.0 }, 0.0),
        });
        Self { k2, mu, op, companion }
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.op.basis
    }

    /// `‖M(k1) u‖ / (scale ‖u‖)` with a scale bounding the entries of `M(k1)`.
    pub fn residual(&self, k1: c64, u: &[c64]) -> f64 {
        let m = self.op.matrix(k1);
        let r = &m * &linalg::column(u);
        let scale = self.op.m1().iter().zip(self.op.cross()).map(|(a, c)| (k1 + a).norm_sqr() + c.norm()).fold(0.0, f64::max)
            + self.mu.abs() * linalg::frobenius(&self.op.conv);
        linalg::frobenius(&r) / (scale.max(1.0) * linalg::vec_norm(u))
    }

    /// Fraction of `|u|²` on the outermost shell of the window.
    pub fn tail_mass(&self, u: &[c64]) -> f64 {
        let b = self.basis();
        let total: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        let edge: f64 = u.iter().enumerate().filter(|(i, _)| b.on_boundary(b.mode(*i))).map(|(_, z)| z.norm_sqr()).sum();
        if total > 0.0 {
            edge / total
        } else {
            1.0
        }
    }
}

/// One eigenpair of the pencil with its trust metrics.
#[derive(Debug, Clone)]
pub struct RawEig {
    pub value: c64,
    pub vector: Vec<c64>,
    pub tail_mass: f64,
    pub residual: f64,
}

impl RawEig {
    pub fn trusted(&self) -> bool {
        self.tail_mass <= TAIL_TRUST && self.residual <= RESIDUAL_TRUST
    }
}

/// All eigenpairs of the companion, eigenvectors restricted to the `u` block.
pub fn pencil_spectrum(k2: c64, mu: f64, medium: &MediumSpec, basis: &ModeBasis) -> Result<Vec<RawEig>, TrackError> {
    let p = PencilMatrix::new(k2, mu, medium, basis);
    let n = basis.len();
    let (vals, vecs) = linalg::eig(&p.companion)?;
    Ok(vals
        .into_iter()
        .enumerate()
        .map(|(j, value)| {
            let vector: Vec<c64> = (0..n).map(|i| vecs[(i, j)]).collect();
            let tail_mass = p.tail_mass(&vector);
            let residual = p.residual(value, &vector);
            RawEig { value, vector, tail_mass, residual }
        })
        .collect())
}

/// Overlap of `b` with `a` shifted by `shift` slots along n1.
fn shifted_overlap(basis: &ModeBasis, a: &[c64], b: &[c64], shift: i64) -> f64 {
    let mut acc = c64::new(0.0, 0.0);
    for (i, m) in basis.iter().enumerate() {
        let src = crate::medium::Mode::new(m.n1 - shift, m.n2);
        if let Some(j) = basis.index(src) {
            acc += b[i].conj() * a[j];
        }
    }
    acc.norm() / (linalg::vec_norm(a) * linalg::vec_norm(b))
}

/// Trusted poles with `|Im k1| < τ1`, folded into `Re ∈ [−π, π)`.
/// Translates of one pole (eigenvectors related by an n1 shift) collapse to
/// the record with the smallest tail mass. Output is sorted by `Im`, then `Re`.
pub fn pencil_eigs(k2: c64, mu: f64, medium: &MediumSpec, basis: &ModeBasis, tau1: f64) -> Result<Vec<PoleRecord>, TrackError> {
    let raw = pencil_spectrum(k2, mu, medium, basis)?;
    let mut cand: Vec<&RawEig> = raw.iter().filter(|e| e.trusted() && e.value.im.abs() < tau1).collect();
    cand.sort_by(|a, b| {
        a.tail_mass
            .total_cmp(&b.tail_mass)
            .then(a.value.re.abs().total_cmp(&b.value.re.abs()))
            .then(a.value.im.total_cmp(&b.value.im))
    });
    let mut kept: Vec<&RawEig> = Vec::new();
    for e in cand {
        let dup = kept.iter().any(|k| {
            let d = cyl_dist(k.value, e.value);
            if d < MERGE_DIST {
                return true;
            }
            let shift = ((e.value.re - k.value.re) / (2.0 * PI)).round() as i64;
            d < 1e-2 && shift != 0 && shifted_overlap(basis, &k.vector, &e.vector, -shift) > 0.99
        });
        if !dup {
            kept.push(e);
        }
    }
    let mut out: Vec<PoleRecord> = kept
        .into_iter()
        .map(|e| PoleRecord {
            k1: fold(e.value),
            raw: e.value,
            klass: if e.value.im.abs() <= TOL_REAL { PoleClass::Real } else { PoleClass::Untrusted },
            tail_mass: e.tail_mass,
            residual: e.residual,
            index: 0,
        })
        .collect();
    out.sort_by(|a, b| a.k1.im.total_cmp(&b.k1.im).then(a.k1.re.total_cmp(&b.k1.re)));
    for (i, r) in out.iter_mut().enumerate() {
        r.index = i;
    }
    Ok(out)
}

/// Pole set at one real `k2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleSample {
    pub k2: f64,
    pub records: Vec<PoleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub delta0: f64,
    pub start_k2: f64,
    /// Records at the start sample with `klass` set to up, down or real.
    pub start: Vec<PoleRecord>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_real: usize,
}

pub const MIN_REAL_SAMPLES: usize = 8;

/// Gap `δ0` below every non-real pole over the samples, and the up/down
/// split at `samples[start]`. Real poles count as down.
pub fn classify_and_delta0(samples: &[PoleSample], start: usize) -> Result<Classification, TrackError> {
    if samples.len() < MIN_REAL_SAMPLES {
        return Err(TrackError::TooFewSamples { need: MIN_REAL_SAMPLES, got: samples.len() });
    }
    let origin = samples.get(start).ok_or(TrackError::StartIndex(start))?;
    let min_im = samples
        .iter()
        .flat_map(|s| s.records.iter())
        .map(|r| r.k1.im.abs())
        .filter(|&a| a > TOL_REAL)
        .fold(f64::INFINITY, f64::min);
    if min_im < 10.0 * TOL_REAL {
        return Err(TrackError::GapCollapse { min_im });
    }
    let delta0 = if min_im.is_finite() { 0.5 * min_im } else { 1.0 };
    let mut startrecs = origin.records.clone();
    let (mut n_plus, mut n_minus, mut n_real) = (0, 0, 0);
    for r in &mut startrecs {
        r.klass = if r.k1.im.abs() <= TOL_REAL {
            n_real += 1;
            n_minus += 1;
            PoleClass::Real
        } else if r.k1.im > delta0 {
            n_plus += 1;
            PoleClass::Up
        } else {
            n_minus += 1;
            PoleClass::Down
        };
    }
    Ok(Classification { delta0, start_k2: origin.k2, start: startrecs, n_plus, n_minus, n_real })
}

/// Window size as a function of the height `Im k2`: the n1 half-width grows
/// by one mode per `2π` of height above `π/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisPolicy {
    pub n1_margin: u32,
    pub n2_half: u32,
}

impl BasisPolicy {
    pub fn at(&self, im_k2: f64) -> ModeBasis {
        let extra = ((im_k2.abs() - PI / 2.0).max(0.0) / (2.0 * PI) + 1e-9).floor() as u32;
        ModeBasis::symmetric(self.n1_margin + extra, self.n2_half)
    }
}

/// The region `Z`: a vertical band around `Re k2 = π` plus a thin
/// horizontal band reaching down to `θ`.
pub fn in_z(k2: c64, theta: f64, delta: f64) -> bool {
    let vertical = k2.re > PI - delta && k2.re < PI + delta;
    let horizontal = k2.re > theta && k2.re < PI + delta && k2.im.abs() < delta;
    vertical || horizontal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub waypoints: Vec<c64>,
    pub theta: f64,
    pub delta: f64,
    pub max_step: f64,
}

impl PathSpec {
    /// Checks waypoints against `Z` and, if `ascending`, monotone `Im`.
    pub fn validate(&self, ascending: bool) -> Result<(), TrackError> {
        if self.waypoints.len() < 2 {
            return Err(TrackError::Path("need at least two waypoints".into()));
        }
        if self.max_step.is_nan() || self.max_step <= 0.0 {
            return Err(TrackError::Path(format!("max_step must be positive, got {}", self.max_step)));
        }
        for w in &self.waypoints {
            if !in_z(*w, self.theta, self.delta) {
                return Err(TrackError::PathExitsZ { re: w.re, im: w.im });
            }
        }
        if ascending && self.waypoints.windows(2).any(|w| w[1].im < w[0].im) {
            return Err(TrackError::Path("Im k2 must be nondecreasing along the path".into()));
        }
        Ok(())
    }

    pub fn reversed(&self) -> Self {
        let mut w = self.waypoints.clone();
        w.reverse();
        Self { waypoints: w, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOptions {
    pub tau1: f64,
    pub collision_tol: f64,
    /// Steps below `min_step` that are still ambiguous abort tracking.
    pub min_step: f64,
    /// On a collision the path backs up to the last point whose poles were
    /// at least this far apart before stepping sideways.
    pub safe_separation: f64,
}

impl TrackOptions {
    pub fn new(tau1: f64) -> Self {
        Self { tau1, collision_tol: COLLISION_TOL, min_step: 1e-7, safe_separation: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub re_k2: f64,
    pub im_k2: f64,
    pub pole_index: usize,
    pub re_k1: f64,
    pub im_k1: f64,
    pub klass: PoleClass,
    pub tail_mass: f64,
    pub flags: String,
}

/// Accepted point of a continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    pub k2: c64,
    pub poles: Vec<PoleRecord>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrackPoint>,
    pub n: usize,
    /// Cumulative lateral offset applied to the remaining path.
    pub offset: f64,
    pub flagged: bool,
}

impl Trajectory {
    pub fn last(&self) -> &TrackPoint {
        self.points.last().expect("trajectory has a start point")
    }

    pub fn realized_path(&self) -> Vec<c64> {
        self.points.iter().map(|p| p.k2).collect()
    }

    pub fn rows(&self) -> Vec<TrajectoryRow> {
        let mut rows = Vec::new();
        for (step, p) in self.points.iter().enumerate() {
            for r in &p.poles {
                rows.push(TrajectoryRow {
                    step,
                    re_k2: p.k2.re,
                    im_k2: p.k2.im,
                    pole_index: r.index,
                    re_k1: r.k1.re,
                    im_k1: r.k1.im,
                    klass: r.klass,
                    tail_mass: r.tail_mass,
                    flags: p.flags.join("|"),
                });
            }
        }
        rows
    }
}

fn min_pairwise(poles: &[PoleRecord]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..poles.len() {
        for j in i + 1..poles.len() {
            best = best.min(cyl_dist(poles[i].k1, poles[j].k1));
        }
    }
    best
}

enum Matched {
    Ok(Vec<PoleRecord>),
    Ambiguous(String),
}

fn match_poles(prev: &[PoleRecord], next: &[PoleRecord]) -> Matched {
    if prev.len() != next.len() {
        return Matched::Ambiguous(format!("pole count changed from {} to {}", prev.len(), next.len()));
    }
    let mut used = vec![false; next.len()];
    let mut out = Vec::with_capacity(prev.len());
    for p in prev {
        let mut d: Vec<(f64, usize)> = next.iter().enumerate().map(|(j, q)| (cyl_dist(p.k1, q.k1), j)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (d1, j) = d[0];
        if d.len() > 1 && d[1].0 < 2.0 * d1 {
            return Matched::Ambiguous("second-nearest candidate within twice the nearest".into());
        }
        if used[j] {
            return Matched::Ambiguous("two poles matched to one".into());
        }
        used[j] = true;
        let mut r = next[j].clone();
        r.index = p.index;
        r.klass = p.klass;
        out.push(r);
    }
    out.sort_by_key(|r| r.index);
    Matched::Ok(out)
}

/// Continues `start` along the path with nearest-neighbour matching on the
/// cylinder, halving the step on ambiguity. A near-collision backs the path
/// up and shifts the rest of it sideways by `±δ/4` inside `Z`.
pub fn track_poles(
    path: &PathSpec,
    start: &[PoleRecord],
    lambda: f64,
    medium: &MediumSpec,
    policy: &BasisPolicy,
    opts: &TrackOptions,
) -> Result<Trajectory, TrackError> {
    path.validate(false)?;
    let mut start_sorted = start.to_vec();
    start_sorted.sort_by_key(|r| r.index);
    let n = start_sorted.len();
    let mut points = vec![TrackPoint { k2: path.waypoints[0], poles: start_sorted, flags: Vec::new() }];
    let mut targets: Vec<c64> = path.waypoints[1..].to_vec();
    let mut offset = 0.0;
    let mut flagged = false;
    let mut h = path.max_step;
    let mut ti = 0;
    while ti < targets.len() {
        let target = targets[ti];
        let cur = points.last().expect("nonempty").k2;
        let gap = (target - cur).norm();
        if gap <= 1e-14 {
            ti += 1;
            continue;
        }
        let step = h.min(gap);
        let next = if step >= gap { target } else { cur + (target - cur) * (step / gap) };
        let basis = policy.at(next.im);
        let found = pencil_eigs(next, lambda, medium, &basis, opts.tau1)?;
        let prev = &points.last().expect("nonempty").poles;
        match match_poles(prev, &found) {
            Matched::Ambiguous(reason) => {
                h /= 2.0;
                if h < opts.min_step {
                    return Err(TrackError::TrackingLost { re: next.re, im: next.im, reason });
                }
            }
            Matched::Ok(poles) => {
                if n > 1 && min_pairwise(&poles) < opts.collision_tol {
                    // back up to a comfortable point, then step sideways
                    while points.len() > 1 && min_pairwise(&points.last().expect("nonempty").poles) < opts.safe_separation {
                        points.pop();
                    }
                    let here = points.last().expect("nonempty").k2;
                    let side = [path.delta / 4.0, -path.delta / 4.0]
                        .into_iter()
                        .find(|s| {
                            let moved = here + *s;
                            in_z(moved, path.theta, path.delta) && targets[ti..].iter().all(|t| in_z(*t + *s, path.theta, path.delta))
                        })
                        .ok_or(TrackError::PathExitsZ { re: here.re + path.delta / 4.0, im: here.im })?;
                    offset += side;
                    flagged = true;
                    points.last_mut().expect("nonempty").flags.push("exceptional_proximity".into());
                    let mut rest: Vec<c64> = vec![here + side];
                    rest.extend(targets[ti..].iter().map(|t| *t + side));
                    targets = rest;
                    ti = 0;
                    h = path.max_step;
                    continue;
                }
                points.push(TrackPoint { k2: next, poles, flags: Vec::new() });
                h = (h * 2.0).min(path.max_step);
                if step >= gap {
                    ti += 1;
                }
            }
        }
    }
    Ok(Trajectory { points, n, offset, flagged })
}

/// Outcome of a contour rank computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszRank {
    pub rank: usize,
    /// Moduli of the eigenvalues of the projector compressed to its range.
    pub moduli: Vec<f64>,
}

/// Columns used to sketch the projector's range.
pub const RIESZ_SKETCH: usize = 12;

/// Rank of `(1/2πi)∮(k − W)⁻¹ dk` over the trapezoid discretization of the
/// contour. The range is sketched with seeded random probes, the projector
/// is compressed onto that range, and eigenvalues of modulus above `1/2`
/// are counted; a projector has only eigenvalues `0` and `1`.
pub fn riesz_rank(
    contour: &RectContour,
    k2: c64,
    mu: f64,
    medium: &MediumSpec,
    basis: &ModeBasis,
    q_nodes: usize,
) -> Result<RieszRank, TrackError> {
    RieszProbe::new(k2, mu, medium, basis)?.rank(contour, q_nodes)
}

/// Pencil and its eigenvalues at one `(k2, μ)`, shared across contours.
#[derive(Debug, Clone)]
pub struct RieszProbe {
    pub pencil: PencilMatrix,
    pub eigs: Vec<c64>,
}

impl RieszProbe {
    pub fn new(k2: c64, mu: f64, medium: &MediumSpec, basis: &ModeBasis) -> Result<Self, TrackError> {
        let pencil = PencilMatrix::new(k2, mu, medium, basis);
        let eigs = linalg::eigvals(&pencil.companion)?;
        Ok(Self { pencil, eigs })
    }

    /// Pencil eigenvalues strictly inside `contour`.
    pub fn enclosed(&self, contour: &RectContour) -> usize {
        self.eigs.iter().filter(|z| contour.encloses(**z)).count()
    }

    pub fn rank(&self, contour: &RectContour, q_nodes: usize) -> Result<RieszRank, TrackError> {
        let dist = self.eigs.iter().map(|z| contour.boundary_distance(*z)).fold(f64::INFINITY, f64::min);
        if dist < CONTOUR_CLEARANCE {
            return Err(TrackError::EigOnContour { dist });
        }
        projector_rank(&self.pencil, contour, q_nodes)
    }
}

fn projector_rank(pencil: &PencilMatrix, contour: &RectContour, q_nodes: usize) -> Result<RieszRank, TrackError> {
    let quad = gamma_contour_quadrature(contour, q_nodes)?;
    let n = pencil.op.len();
    let factors: Vec<Factor> = quad.par_iter().map(|(z, _)| Factor::new(pencil.op.matrix(*z))).collect();
    let m1: Vec<f64> = pencil.op.m1().to_vec();
    let apply = |x: &CMat| -> CMat {
        let cols = x.ncols();
        let mut acc = linalg::zeros(2 * n, cols);
        let parts: Vec<CMat> = quad
            .par_iter()
            .zip(&factors)
            .map(|((z, dz), f)| {
                // (z − W)[a; b] = [x; y]  ⇔  M(z) a = y + (z + 2m1) x,  b = z a − x
                let rhs = CMat::from_fn(n, cols, |i, j| x[(n + i, j)] + (*z + 2.0 * m1[i]) * x[(i, j)]);
                let a = f.solve(&rhs);
                let w = *dz / c64::new(0.0, 2.0 * PI);
                CMat::from_fn(2 * n, cols, |i, j| if i < n { a[(i, j)] * w } else { (*z * a[(i - n, j)] - x[(i - n, j)]) * w })
            })
            .collect();
        for p in parts {
            acc += &p;
        }
        acc
    };
    let p = RIESZ_SKETCH.min(2 * n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2013);
    let probe = CMat::from_fn(2 * n, p, |_, _| {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        c64::new(a, b)
    });
    let y = apply(&probe);
    let svd = y.svd().map_err(|e| KernelError::SvdFailure(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let smax = if p > 0 { s[0].re } else { 0.0 };
    let r = (0..p).filter(|&i| s[i].re > 1e-8 * smax.max(1e-300)).count();
    if r == 0 || smax == 0.0 {
        return Ok(RieszRank { rank: 0, moduli: Vec::new() });
    }
    let u = svd.U();
    let q = CMat::from_fn(2 * n, r, |i, j| u[(i, j)]);
    let pq = apply(&q);
    let g = q.adjoint() * &pq;
    let ev = linalg::eigvals(&g)?;
    let mut moduli: Vec<f64> = ev.iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let rank = moduli.iter().filter(|&&v| v > 0.5).count();
    Ok(RieszRank { rank, moduli })
}
