//! End-to-end run: pole-free lines, real-axis classification, continuation
//! up the `Re k2 ≈ π` column, contour localization, assembly of `A(k2)`,
//! decay and Fredholm checks. Stages run in order and a failure skips the rest.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::a_family::{
    assemble_a_deformed, decay_row, decay_table, fredholm_scan, AFamily, Conclusion, DecayTable, FredholmReport,
};
use crate::cell_operator::{sigma_min_scan, HorizontalLine};
use crate::config::RunConfig;
use crate::io::{self, FredholmRow, IoError};
use crate::linalg::c64;
use crate::medium::Part;
use crate::pole_tracker::{
    classify_and_delta0, cyl_dist, pencil_eigs, track_poles, Classification, PathSpec, PoleClass, PoleRecord,
    PoleSample, RieszProbe, TrackOptions, Trajectory,
};
use crate::symbol::{select_tau1, LinesSet, RectContour, Sign};

/// Lines count as pole free above this smallest singular value.
pub const LINE_MARGIN: f64 = 1e-6;
/// Forward then backward continuation must return each pole this closely.
pub const REVERSAL_TOL: f64 = 1e-6;
pub const SLOPE_WINDOW: (f64, f64) = (-1.3, -0.7);
pub const BOUNDEDNESS_RATIO: f64 = 2.0;
/// Allowed relative growth of `‖A‖` between consecutive heights.
pub const MONOTONE_SLACK: f64 = 0.05;
pub const FREDHOLM_FLOOR: f64 = 0.5;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const DECAY_CSV: &str = "decay.csv";
pub const FREDHOLM_CSV: &str = "fredholm.csv";
pub const REPORT_JSON: &str = "report.json";

pub const STAGES: [&str; 7] = ["pole_free_lines", "classify", "track", "localize", "assemble", "decay", "fredholm"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub status: StageStatus,
    pub metrics: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tau1: f64,
    pub delta0: Option<f64>,
    pub m_empirical: Option<f64>,
    pub c_empirical: Option<f64>,
    pub n: Option<usize>,
    pub n_plus: Option<usize>,
    pub n_minus: Option<usize>,
    pub stages: Vec<StageReport>,
    /// File names inside the output directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Pass)
    }

    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// A stage either passes with metrics or fails with metrics and a reason.
type StageResult = Result<BTreeMap<String, Value>, (BTreeMap<String, Value>, String)>;

fn metrics<const N: usize>(pairs: [(&str, Value); N]) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn fail(m: BTreeMap<String, Value>, why: impl Into<String>) -> StageResult {
    Err((m, why.into()))
}

/// One decay height with its poles after the excursion back to `Re k2 = π`.
#[derive(Debug, Clone)]
pub struct Height {
    pub ell: f64,
    pub k2: c64,
    pub poles: Vec<PoleRecord>,
}

impl Height {
    pub fn up(&self) -> Vec<PoleRecord> {
        self.poles.iter().filter(|p| p.klass == PoleClass::Up).cloned().collect()
    }
}

/// Everything a run produces, kept for callers that inspect beyond the report.
#[derive(Debug, Clone, Default)]
pub struct RunState {
    pub tau1: f64,
    pub classification: Option<Classification>,
    pub forward: Option<Trajectory>,
    pub backward: Option<Trajectory>,
    pub heights: Vec<Height>,
    /// `ranks[h][mu][contour]`.
    pub ranks: Vec<Vec<Vec<usize>>>,
    pub families: Vec<AFamily>,
    pub decay: Option<DecayTable>,
    pub fredholm: Vec<FredholmReport>,
}

/// `Γ(0)`, the real start point between `θ` and `π`.
pub fn start_point(cfg: &RunConfig) -> f64 {
    (PI + cfg.spectral.theta) / 2.0
}

/// Real samples in `(θ, π − δ/2)`: `Γ(0)` plus seven equispaced points.
/// Returns the samples and the index of `Γ(0)`.
pub fn z0_samples(cfg: &RunConfig) -> (Vec<f64>, usize) {
    let (lo, hi) = (cfg.spectral.theta, PI - cfg.spectral.delta / 2.0);
    let g0 = start_point(cfg);
    let mut xs: Vec<f64> = (1..=7).map(|i| lo + (hi - lo) * i as f64 / 8.0).collect();
    xs.push(g0);
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let start = xs.iter().position(|x| (*x - g0).abs() < 1e-12).expect("start sample present");
    (xs, start)
}

/// Decay heights `ℓ = 2πn`.
pub fn decay_ells(cfg: &RunConfig) -> Vec<f64> {
    (cfg.path.ell_min..=cfg.path.ell_max).map(|n| 2.0 * PI * n as f64).collect()
}

/// Column used for the ascent: `Re k2 = π + δ/4`, so that poles which meet
/// on `Re k2 = π` stay apart.
pub fn column(cfg: &RunConfig) -> f64 {
    PI + cfg.spectral.delta / 4.0
}

/// Default path: `Γ(0)` along the real axis to the column, then straight up
/// through every decay height.
pub fn auto_path(cfg: &RunConfig) -> Vec<c64> {
    if !cfg.path.waypoints.is_empty() {
        return cfg.waypoints();
    }
    let x = column(cfg);
    let mut w = vec![c64::new(start_point(cfg), 0.0), c64::new(x, 0.0)];
    w.extend(decay_ells(cfg).into_iter().map(|ell| c64::new(x, PI / 2.0 + ell)));
    w
}

pub struct Pipeline<'a> {
    cfg: &'a RunConfig,
    pub state: RunState,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Self { cfg, state: RunState::default() }
    }

    fn lambda(&self) -> f64 {
        self.cfg.spectral.lambda
    }

    fn path_spec(&self, waypoints: Vec<c64>) -> PathSpec {
        PathSpec {
            waypoints,
            theta: self.cfg.spectral.theta,
            delta: self.cfg.spectral.delta,
            max_step: self.cfg.max_step(),
        }
    }

    fn opts(&self) -> TrackOptions {
        TrackOptions::new(self.state.tau1)
    }

    /// `σ_min(M(k1, k2))` on `[−π, π] ± iτ1` at the start, the corner of the
    /// path and the top decay height.
    fn pole_free_lines(&mut self) -> StageResult {
        let cfg = self.cfg;
        let tau1 = select_tau1(self.lambda(), cfg.medium.sup_norm(Part::Periodic), cfg.spectral.theta);
        self.state.tau1 = tau1;
        let path = auto_path(cfg);
        let probes = [path[0], path[1], *path.last().expect("path")];
        let mut worst = f64::INFINITY;
        for k2 in probes {
            let basis = cfg.policy().at(k2.im);
            for sign in [Sign::Plus, Sign::Minus] {
                let line = HorizontalLine { sign, tau1 };
                let s = sigma_min_scan(line, k2, self.lambda(), &cfg.medium, &basis, cfg.quadrature.scan_samples)
                    .map_err(|e| (metrics([("tau1", json!(tau1))]), e.to_string()))?;
                worst = worst.min(s);
            }
        }
        let m = metrics([("tau1", json!(tau1)), ("min_sigma", json!(worst))]);
        if worst > LINE_MARGIN {
            Ok(m)
        } else {
            fail(m, format!("smallest singular value {worst:e} on the lines ±iτ1"))
        }
    }

    fn classify(&mut self) -> StageResult {
        let cfg = self.cfg;
        let (xs, start) = z0_samples(cfg);
        let basis = cfg.policy().at(0.0);
        let mut samples = Vec::with_capacity(xs.len());
        for x in &xs {
            let records = pencil_eigs(c64::new(*x, 0.0), self.lambda(), &cfg.medium, &basis, self.state.tau1)
                .map_err(|e| (BTreeMap::new(), e.to_string()))?;
            samples.push(PoleSample { k2: *x, records });
        }
        let c = classify_and_delta0(&samples, start).map_err(|e| (BTreeMap::new(), e.to_string()))?;
        let m = metrics([
            ("delta0", json!(c.delta0)),
            ("n", json!(c.start.len())),
            ("n_plus", json!(c.n_plus)),
            ("n_minus", json!(c.n_minus)),
            ("n_real", json!(c.n_real)),
            ("samples", json!(xs)),
        ]);
        self.state.classification = Some(c);
        Ok(m)
    }

    fn track(&mut self) -> StageResult {
        let cfg = self.cfg;
        let start = self.state.classification.as_ref().expect("classified").start.clone();
        let route = self.path_spec(auto_path(cfg));
        let fwd = track_poles(&route, &start, self.lambda(), &cfg.medium, &cfg.policy(), &self.opts())
            .map_err(|e| (BTreeMap::new(), e.to_string()))?;
        let unflagged_counts: Vec<usize> =
            fwd.points.iter().filter(|p| p.flags.is_empty()).map(|p| p.poles.len()).collect();
        let constant = unflagged_counts.iter().all(|&c| c == fwd.n);
        let mut m = metrics([
            ("steps", json!(fwd.points.len())),
            ("n", json!(fwd.n)),
            ("offset", json!(fwd.offset)),
            ("flagged", json!(fwd.flagged)),
            ("count_constant", json!(constant)),
        ]);
        let mut ok = constant;
        if cfg.path.check_reversal {
            let back_spec = self.path_spec(fwd.realized_path().into_iter().rev().collect());
            let back = track_poles(&back_spec, &fwd.last().poles, self.lambda(), &cfg.medium, &cfg.policy(), &self.opts())
                .map_err(|e| (m.clone(), e.to_string()))?;
            let end = &back.last().poles;
            let err = start
                .iter()
                .map(|p| end.iter().find(|q| q.index == p.index).map_or(f64::INFINITY, |q| cyl_dist(p.k1, q.k1)))
                .fold(0.0, f64::max);
            m.insert("reversal_error".into(), json!(err));
            ok &= err <= REVERSAL_TOL;
            self.state.backward = Some(back);
        }
        self.state.forward = Some(fwd);
        if ok {
            Ok(m)
        } else {
            fail(m, "pole count changed or reversal did not return the poles")
        }
    }

    /// Excursions to `Re k2 = π` at each height, then contour ranks for
    /// `μ ∈ {0, λ/2, λ}` on every rectangle holding an up pole.
    fn localize(&mut self) -> StageResult {
        let cfg = self.cfg;
        let fwd = self.state.forward.clone().expect("tracked");
        let lines = LinesSet::new(cfg.spectral.delta, self.state.tau1).map_err(|e| (BTreeMap::new(), e.to_string()))?;
        let mus = [0.0, self.lambda() / 2.0, self.lambda()];
        let mut heights = Vec::new();
        let mut all_ranks = Vec::new();
        let mut certified = Vec::new();
        let mut failure: Option<String> = None;
        for ell in decay_ells(cfg) {
            let h = PI / 2.0 + ell;
            let Some(at) = fwd.points.iter().rev().find(|p| (p.k2.im - h).abs() < 1e-9) else {
                return fail(BTreeMap::new(), format!("path never reaches height {h}"));
            };
            let target = c64::new(PI, h);
            let poles = if (at.k2 - target).norm() < 1e-14 {
                at.poles.clone()
            } else {
                let route = self.path_spec(vec![at.k2, target]);
                track_poles(&route, &at.poles, self.lambda(), &cfg.medium, &cfg.policy(), &self.opts())
                    .map_err(|e| (BTreeMap::new(), e.to_string()))?
                    .last()
                    .poles
                    .clone()
            };
            let height = Height { ell, k2: target, poles };
            let basis = cfg.policy().at(h);
            let mut contours = Vec::new();
            for p in height.up() {
                let sign = if p.k1.re >= 0.0 { Sign::Plus } else { Sign::Minus };
                let n2 = (p.k1.im / (2.0 * PI)).ceil() as i64;
                let c = RectContour::new(sign, n2, &lines).map_err(|e| (BTreeMap::new(), e.to_string()))?;
                if !c.encloses(p.k1) {
                    failure.get_or_insert(format!("up pole {} at {} outside every rectangle", p.index, p.k1));
                }
                if !contours.contains(&c) {
                    contours.push(c);
                }
            }
            let mut ranks_here = Vec::new();
            let mut ok = failure.is_none();
            for mu in mus {
                let probe = RieszProbe::new(target, mu, &cfg.medium, &basis).map_err(|e| (BTreeMap::new(), e.to_string()))?;
                let mut row = Vec::new();
                for c in &contours {
                    let r = probe
                        .rank(c, cfg.quadrature.q_contour)
                        .map_err(|e| (BTreeMap::new(), format!("height {h}, μ = {mu}: {e}")))?;
                    ok &= r.rank == 1;
                    row.push(r.rank);
                }
                ranks_here.push(row);
            }
            if ok {
                certified.push(ell);
            } else {
                failure.get_or_insert(format!("rank other than 1 at height {h}: {ranks_here:?}"));
            }
            all_ranks.push(ranks_here);
            heights.push(height);
        }
        let m_emp = certified.first().copied();
        let m = metrics([
            ("ranks", json!(all_ranks)),
            ("certified_ells", json!(certified)),
            ("m_empirical", json!(m_emp)),
            ("mus", json!(mus)),
        ]);
        self.state.heights = heights;
        self.state.ranks = all_ranks;
        match failure {
            None => Ok(m),
            Some(why) => fail(m, why),
        }
    }

    fn assemble(&mut self) -> StageResult {
        let cfg = self.cfg;
        let delta0 = self.state.classification.as_ref().expect("classified").delta0;
        let mut fams = Vec::new();
        let mut changes = Vec::new();
        for h in &self.state.heights {
            let basis = cfg.policy().at(h.k2.im);
            let fam = assemble_a_deformed(
                h.k2,
                self.lambda(),
                &cfg.medium,
                &basis,
                &h.up(),
                &h.poles,
                self.state.tau1,
                delta0,
                cfg.quadrature.assembly(),
            )
            .map_err(|e| (metrics([("height", json!(h.k2.im))]), e.to_string()))?;
            changes.push(fam.quad_change);
            fams.push(fam);
        }
        let m = metrics([("quad_change", json!(changes)), ("sizes", json!(fams.iter().map(|f| f.basis.len()).collect::<Vec<_>>()))]);
        self.state.families = fams;
        Ok(m)
    }

    fn decay(&mut self) -> StageResult {
        let cfg = self.cfg;
        let rows = self
            .state
            .heights
            .iter()
            .zip(&self.state.families)
            .map(|(h, f)| decay_row(h.ell, f, self.lambda(), &cfg.medium))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| (BTreeMap::new(), e.to_string()))?;
        let table = decay_table(rows).map_err(|e| (BTreeMap::new(), e.to_string()))?;
        let monotone = table.rows.windows(2).all(|w| w[1].norm2 <= w[0].norm2 * (1.0 + MONOTONE_SLACK));
        let slope_ok = table.slope_fit >= SLOPE_WINDOW.0 && table.slope_fit <= SLOPE_WINDOW.1;
        let bounded = table.boundedness_ratio <= BOUNDEDNESS_RATIO;
        let m = metrics([
            ("slope_fit", json!(table.slope_fit)),
            ("c_empirical", json!(table.c_empirical)),
            ("boundedness_ratio", json!(table.boundedness_ratio)),
            ("monotone", json!(monotone)),
        ]);
        self.state.decay = Some(table);
        if slope_ok && bounded && monotone {
            Ok(m)
        } else {
            fail(m, "norm decay outside the expected envelope")
        }
    }

    /// Reports at every height; the upper half of the sweep must be
    /// certified by the Neumann bound with `σ_min ≥ 1/2`.
    fn fredholm(&mut self) -> StageResult {
        let reports =
            fredholm_scan(&self.state.families, self.lambda(), &self.cfg.medium).map_err(|e| (BTreeMap::new(), e.to_string()))?;
        let upper = &reports[reports.len() / 2..];
        let ok = upper
            .iter()
            .all(|r| r.conclusion == Conclusion::DefinitelyInvertible && r.sigma_min >= FREDHOLM_FLOOR);
        let m = metrics([
            ("min_sigma", json!(reports.iter().map(|r| r.sigma_min).fold(f64::INFINITY, f64::min))),
            ("max_neumann_upper", json!(upper.iter().map(|r| r.neumann_bound).fold(0.0, f64::max))),
        ]);
        self.state.fredholm = reports;
        if ok {
            Ok(m)
        } else {
            fail(m, "upper half of the sweep not certified invertible")
        }
    }

    fn stage(&mut self, name: &str) -> StageResult {
        match name {
            "pole_free_lines" => self.pole_free_lines(),
            "classify" => self.classify(),
            "track" => self.track(),
            "localize" => self.localize(),
            "assemble" => self.assemble(),
            "decay" => self.decay(),
            "fredholm" => self.fredholm(),
            other => unreachable!("unknown stage {other}"),
        }
    }

    /// Runs every stage; stops computing after the first failure.
    pub fn run(&mut self) -> RunReport {
        self.run_through("fredholm")
    }

    /// Runs the stages up to and including `last`.
    pub fn run_through(&mut self, last: &str) -> RunReport {
        let end = STAGES.iter().position(|s| *s == last).map_or(STAGES.len(), |i| i + 1);
        let mut stages = Vec::with_capacity(end);
        let mut failed = false;
        for name in &STAGES[..end] {
            let name = *name;
            if failed {
                stages.push(StageReport { name: name.into(), status: StageStatus::Skipped, metrics: BTreeMap::new(), message: None });
                continue;
            }
            let rep = match self.stage(name) {
                Ok(m) => StageReport { name: name.into(), status: StageStatus::Pass, metrics: m, message: None },
                Err((m, why)) => {
                    failed = true;
                    StageReport { name: name.into(), status: StageStatus::Fail, metrics: m, message: Some(why) }
                }
            };
            stages.push(rep);
        }
        let c = self.state.classification.as_ref();
        let m_empirical = stages
            .iter()
            .find(|s| s.name == "localize")
            .and_then(|s| s.metrics.get("m_empirical"))
            .and_then(Value::as_f64);
        RunReport {
            tau1: self.state.tau1,
            delta0: c.map(|c| c.delta0),
            m_empirical,
            c_empirical: self.state.decay.as_ref().map(|d| d.c_empirical),
            n: c.map(|c| c.start.len()),
            n_plus: c.map(|c| c.n_plus),
            n_minus: c.map(|c| c.n_minus),
            stages,
            artifacts: Vec::new(),
        }
    }

    /// Writes the tables that exist plus the report.
    pub fn write(&self, report: &mut RunReport, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
        let mut written = Vec::new();
        let mut names = Vec::new();
        if let Some(t) = &self.state.forward {
            let p = dir.join(TRAJECTORY_CSV);
            io::write_csv(&p, &t.rows())?;
            names.push(TRAJECTORY_CSV.to_string());
            written.push(p);
        }
        if let Some(d) = &self.state.decay {
            let p = dir.join(DECAY_CSV);
            io::write_csv(&p, &d.rows)?;
            names.push(DECAY_CSV.to_string());
            written.push(p);
        }
        if !self.state.fredholm.is_empty() {
            let p = dir.join(FREDHOLM_CSV);
            let rows: Vec<FredholmRow> = self.state.fredholm.iter().map(FredholmRow::from).collect();
            io::write_csv(&p, &rows)?;
            names.push(FREDHOLM_CSV.to_string());
            written.push(p);
        }
        names.push(REPORT_JSON.to_string());
        report.artifacts = names;
        let p = dir.join(REPORT_JSON);
        io::write_json(&p, report)?;
        written.push(p);
        Ok(written)
    }
}

/// Runs all stages and writes the artifacts to `cfg.output.dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(RunReport, RunState), PipelineError> {
    let mut p = Pipeline::new(cfg);
    let mut report = p.run();
    p.write(&mut report, &cfg.output.dir)?;
    Ok((report, p.state))
}
