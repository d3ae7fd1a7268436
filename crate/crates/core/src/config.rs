//! Run configuration: one JSON document with sections `medium`, `spectral`,
//! `path`, `quadrature` and `output`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::a_family::Quadrature;
use crate::linalg::c64;
use crate::medium::{MediumError, MediumSpec, Rectangle};
use crate::pole_tracker::{in_z, BasisPolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Medium(#[from] MediumError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    pub lambda: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// n1 half-width at `Im k2 ≤ π/2`; one mode is added per `2π` above.
    #[serde(default = "default_n1")]
    pub basis_n1: u32,
    #[serde(default = "default_n2")]
    pub basis_n2: u32,
}

fn default_theta() -> f64 {
    PI / 2.0
}
fn default_delta() -> f64 {
    PI / 8.0
}
fn default_n1() -> u32 {
    4
}
fn default_n2() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    /// Explicit `[re, im]` waypoints; empty means the automatic path.
    #[serde(default)]
    pub waypoints: Vec<[f64; 2]>,
    /// Continuation step cap; `None` means `δ/2`.
    #[serde(default)]
    pub max_step: Option<f64>,
    /// Decay heights are `Im k2 = π/2 + 2πn` for `n` in `ell_min..=ell_max`.
    #[serde(default = "default_ell_min")]
    pub ell_min: u32,
    #[serde(default = "default_ell_max")]
    pub ell_max: u32,
    /// Track the realized path backwards and compare the end points.
    #[serde(default = "default_true")]
    pub check_reversal: bool,
}

fn default_ell_min() -> u32 {
    4
}
fn default_ell_max() -> u32 {
    12
}
fn default_true() -> bool {
    true
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            waypoints: Vec::new(),
            max_step: None,
            ell_min: default_ell_min(),
            ell_max: default_ell_max(),
            check_reversal: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_q_line")]
    pub q_line: usize,
    #[serde(default = "default_q_circle")]
    pub q_circle: usize,
    /// Nodes on each rectangular contour, a multiple of 4.
    #[serde(default = "default_q_contour")]
    pub q_contour: usize,
    #[serde(default = "default_doublings")]
    pub max_doublings: u32,
    /// Points per pole-free line scan.
    #[serde(default = "default_scan")]
    pub scan_samples: usize,
}

fn default_q_line() -> usize {
    64
}
fn default_q_circle() -> usize {
    32
}
fn default_q_contour() -> usize {
    64
}
fn default_doublings() -> u32 {
    3
}
fn default_scan() -> usize {
    65
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            q_line: default_q_line(),
            q_circle: default_q_circle(),
            q_contour: default_q_contour(),
            max_doublings: default_doublings(),
            scan_samples: default_scan(),
        }
    }
}

impl QuadratureConfig {
    pub fn assembly(&self) -> Quadrature {
        Quadrature { q_line: self.q_line, q_circle: self.q_circle, verify: true, max_doublings: self.max_doublings }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub medium: MediumSpec,
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Homogeneous background `ε0 = 1` with a weak stripe defect, `λ = −1`.
    pub fn free() -> Self {
        let stripe = Rectangle::new(0.375, 0.625, 0.0, 1.0, 0.25).expect("valid stripe");
        Self {
            medium: MediumSpec::homogeneous(1.0, vec![stripe]),
            spectral: SpectralConfig {
                lambda: -1.0,
                theta: default_theta(),
                delta: default_delta(),
                basis_n1: default_n1(),
                basis_n2: default_n2(),
            },
            path: PathConfig::default(),
            quadrature: QuadratureConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn policy(&self) -> BasisPolicy {
        BasisPolicy { n1_margin: self.spectral.basis_n1, n2_half: self.spectral.basis_n2 }
    }

    pub fn max_step(&self) -> f64 {
        self.path.max_step.unwrap_or(self.spectral.delta / 2.0)
    }

    pub fn waypoints(&self) -> Vec<c64> {
        self.path.waypoints.iter().map(|w| c64::new(w[0], w[1])).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.medium.validate()?;
        let s = &self.spectral;
        if !s.lambda.is_finite() {
            return Err(invalid("lambda must be finite"));
        }
        if !(s.theta > 0.0 && s.theta < PI) {
            return Err(invalid(format!("theta must lie in (0, π), got {}", s.theta)));
        }
        let cap = (PI / 4.0).min(PI - s.theta);
        if !(s.delta > 0.0 && s.delta < cap) {
            return Err(invalid(format!("delta must lie in (0, {cap}), got {}", s.delta)));
        }
        if s.basis_n1 == 0 || s.basis_n2 == 0 {
            return Err(invalid("basis half-widths must be positive"));
        }
        let p = &self.path;
        if let Some(h) = p.max_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid(format!("max_step must be positive, got {h}")));
            }
        }
        if p.ell_min == 0 || p.ell_max <= p.ell_min {
            return Err(invalid("need 0 < ell_min < ell_max"));
        }
        for w in &p.waypoints {
            if !(w[0].is_finite() && w[1].is_finite()) || !in_z(c64::new(w[0], w[1]), s.theta, s.delta) {
                return Err(invalid(format!("waypoint {w:?} lies outside Z")));
            }
        }
        if p.waypoints.len() == 1 {
            return Err(invalid("an explicit path needs at least two waypoints"));
        }
        let q = &self.quadrature;
        if q.q_line < 8 || q.q_circle < 8 {
            return Err(invalid("q_line and q_circle must be at least 8"));
        }
        if q.q_contour < 8 || q.q_contour % 4 != 0 {
            return Err(invalid("q_contour must be a multiple of 4, at least 8"));
        }
        if q.scan_samples < 2 {
            return Err(invalid("scan_samples must be at least 2"));
        }
        Ok(())
    }
}
