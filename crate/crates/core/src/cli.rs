//! Command-line front end. Every subcommand prints one verdict line per
//! check and maps to an exit code: 0 pass, 1 failed check, 2 usage or
//! config error.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::cell_operator::band_eigs;
use crate::config::{ConfigError, RunConfig};
use crate::floquet::strip_resolvent_check;
use crate::io;
use crate::linalg::{self, c64};
use crate::medium::{Mode, ModeBasis};
use crate::pipeline::{Pipeline, RunReport, StageStatus};
use crate::pole_tracker::{cyl_dist, fold, pencil_eigs};
use crate::symbol::{free_pole_oracle, hammer_sweep, min_gap_sweep, select_tau1, Sign};

#[derive(Debug, Parser)]
#[command(name = "wgspec", version, about = "Spectral checks for periodic Helmholtz strips with a local defect")]
pub struct Cli {
    /// Run configuration (JSON). Defaults to a homogeneous medium with a weak stripe.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Top decay height, in periods of 2π.
    #[arg(long, global = true)]
    pub ell_max: Option<u32>,
    #[arg(long, global = true)]
    pub q_line: Option<usize>,
    #[arg(long, global = true)]
    pub basis_n1: Option<u32>,
    #[arg(long, global = true)]
    pub basis_n2: Option<u32>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KPath {
    #[value(name = "gamma-x-m-gamma")]
    GammaXMGamma,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Random sweep of the symbol lower bounds and the minimal-gap brute force.
    VerifyEstimates {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Band diagram of the periodic background.
    Band {
        #[arg(long, value_enum, default_value = "gamma-x-m-gamma")]
        k_path: KPath,
        #[arg(long, default_value_t = 8)]
        bands: usize,
        /// Points per path segment.
        #[arg(long, default_value_t = 16)]
        points: usize,
    },
    /// Pencil eigenvalues at `μ = 0` against the closed-form free poles.
    FreePoles {
        /// Height offset in periods of 2π.
        #[arg(long, default_value_t = 1)]
        ell: u32,
    },
    /// Supercell solve against the cell-resolvent formula.
    FormresCheck {
        #[arg(long, default_value_t = 8)]
        cells: usize,
        #[arg(long, default_value_t = 2.3)]
        k2: f64,
    },
    /// Pole continuation along the default path.
    TrackPoles,
    /// Norm of the strip family along the decay heights.
    ADecay,
    /// Fredholm scan along the decay heights.
    FredholmScan,
    /// Every stage, with the full report.
    RunAll,
}

/// Outcome of a subcommand before it becomes an exit code.
#[derive(Debug)]
pub enum Outcome {
    Pass,
    CheckFailed,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

fn verdict(name: &str, ok: bool, detail: impl std::fmt::Display) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

pub fn load_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::free(),
    };
    if let Some(d) = &cli.out {
        cfg.output.dir = d.clone();
    }
    if let Some(n) = cli.ell_max {
        cfg.path.ell_max = n;
    }
    if let Some(q) = cli.q_line {
        cfg.quadrature.q_line = q;
    }
    if let Some(n) = cli.basis_n1 {
        cfg.spectral.basis_n1 = n;
    }
    if let Some(n) = cli.basis_n2 {
        cfg.spectral.basis_n2 = n;
    }
    if let Some(l) = cli.lambda {
        cfg.spectral.lambda = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn verify_estimates(samples: usize, seed: u64) -> bool {
    let sweep = hammer_sweep(samples, seed);
    let a = verdict(
        "symbol lower bounds",
        sweep.violations == 0,
        format!("{} samples, {} violations, min slack {:e}", sweep.samples, sweep.violations, sweep.min_slack),
    );
    let cases = match min_gap_sweep(&[PI / 4.0, PI / 2.0, 3.0 * PI / 4.0], &[0, 1, 2], 200, 100_000) {
        Ok(c) => c,
        Err(e) => return verdict("minimal gap", false, e),
    };
    let worst = cases.iter().map(|c| c.brute - c.bound).fold(f64::INFINITY, f64::min);
    let tight = cases
        .iter()
        .find(|c| (c.beta - PI / 2.0).abs() < 1e-12 && c.n == 0)
        .map_or(f64::INFINITY, |c| (c.brute - c.bound).abs());
    let b = verdict(
        "minimal gap",
        worst >= -1e-9 && tight <= 1e-9 * (1.0 + 7.0 * PI * PI / 4.0),
        format!("{} cases, min brute − bound {worst:e}, tightness {tight:e}", cases.len()),
    );
    a && b
}

fn band(cfg: &RunConfig, bands: usize, points: usize, out: &Path) -> Result<bool, CliError> {
    let corners = [[0.0, 0.0], [PI, 0.0], [PI, PI], [0.0, 0.0]];
    let basis = ModeBasis::symmetric(cfg.spectral.basis_n1, cfg.spectral.basis_n1);
    let mut rows = Vec::new();
    let mut ok = true;
    let mut s = 0.0;
    for seg in corners.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        for i in 0..points.max(1) {
            let t = i as f64 / points.max(1) as f64;
            let k = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let e = band_eigs(k, &cfg.medium, &basis, bands).map_err(runtime)?;
            ok &= e.iter().all(|v| *v >= 0.0);
            let mut row = vec![s + t * len, k[0], k[1]];
            row.extend(e);
            rows.push(row);
        }
        s += len;
    }
    let e = band_eigs([0.0, 0.0], &cfg.medium, &basis, bands).map_err(runtime)?;
    rows.push([vec![s, 0.0, 0.0], e.clone()].concat());
    let mut header = vec!["s".to_string(), "k1".into(), "k2".into()];
    header.extend((0..bands).map(|b| format!("band_{b}")));
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let path = out.join("band.csv");
    io::write_numeric_table(&path, &h, &rows).map_err(runtime)?;
    let first = e.first().copied().unwrap_or(f64::NAN);
    Ok(verdict("band diagram", ok && first.abs() <= 1e-10, format!("{} points, lowest at Γ {first:e}, {}", rows.len(), path.display())))
}

/// Folded oracle poles `J±(m)` over `modes` with `|Im| < τ1`, one per
/// point of the cylinder.
pub fn oracle_poles(modes: impl Iterator<Item = Mode>, ell: f64, tau1: f64) -> Vec<c64> {
    let mut out: Vec<c64> = Vec::new();
    for m in modes {
        for sign in [Sign::Plus, Sign::Minus] {
            let z = fold(free_pole_oracle(m, PI, ell, sign));
            if z.im.abs() < tau1 && out.iter().all(|o| cyl_dist(*o, z) > 1e-6) {
                out.push(z);
            }
        }
    }
    out
}

/// Basis sized for the free-pole comparison at height offset `ell`.
pub fn free_pole_basis(ell: f64, tau1: f64) -> ModeBasis {
    let h1 = (ell / (2.0 * PI)).round() as u32 + 4;
    let h2 = (tau1 / (2.0 * PI)).round() as u32 + 4;
    ModeBasis::symmetric(h1, h2)
}

fn free_poles(cfg: &RunConfig, ell_periods: u32, out: &Path) -> Result<bool, CliError> {
    let ell = 2.0 * PI * ell_periods as f64;
    let tau1 = select_tau1(cfg.spectral.lambda, cfg.medium.sup_norm(crate::medium::Part::Periodic), cfg.spectral.theta);
    let k2 = c64::new(PI, PI / 2.0 + ell);
    let basis = free_pole_basis(ell, tau1);
    let found = pencil_eigs(k2, 0.0, &cfg.medium, &basis, tau1).map_err(runtime)?;
    // trusted records come from modes off the outer shell
    let oracle = oracle_poles(basis.iter().filter(|m| !basis.on_boundary(*m)), ell, tau1);
    let worst = oracle
        .iter()
        .map(|z| found.iter().map(|r| cyl_dist(*z, r.k1)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let rows: Vec<Vec<f64>> = found.iter().map(|r| vec![r.index as f64, r.k1.re, r.k1.im, r.tail_mass]).collect();
    io::write_numeric_table(&out.join("free_poles.csv"), &["index", "re_k1", "im_k1", "tail_mass"], &rows).map_err(runtime)?;
    Ok(verdict(
        "free poles",
        worst <= 1e-8 && found.len() == oracle.len(),
        format!("{} trusted, {} oracle, max distance {worst:e}", found.len(), oracle.len()),
    ))
}

fn formres(cfg: &RunConfig, cells: usize, k2: f64) -> Result<bool, CliError> {
    let basis = ModeBasis::symmetric(cfg.spectral.basis_n1, cfg.spectral.basis_n2);
    // smooth source: a few low modes
    let f: Vec<c64> = basis
        .iter()
        .map(|m: Mode| {
            let r = (m.n1 * m.n1 + m.n2 * m.n2) as f64;
            c64::new((-r).exp(), 0.5 * (-(r + 1.0)).exp() * (m.n1 - m.n2) as f64)
        })
        .collect();
    let chk = strip_resolvent_check(k2, -1.0, &cfg.medium, &basis, cells, &f, (16, 16)).map_err(runtime)?;
    Ok(verdict("strip resolvent formula", chk.rel_err <= 1e-8, format!("L = {cells}, rel err {:e}", chk.rel_err)))
}

fn pipeline_through(cfg: &RunConfig, last: &str) -> Result<(bool, RunReport), CliError> {
    let mut p = Pipeline::new(cfg);
    let mut report = p.run_through(last);
    for s in &report.stages {
        let detail = s.message.clone().unwrap_or_else(|| serde_json::to_string(&s.metrics).unwrap_or_default());
        match s.status {
            StageStatus::Skipped => println!("SKIP {}", s.name),
            st => {
                verdict(&s.name, st == StageStatus::Pass, detail);
            }
        }
    }
    p.write(&mut report, &cfg.output.dir).map_err(runtime)?;
    Ok((report.passed(), report))
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        // only the first call can size the global pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    linalg::use_sequential_kernels();
    let out = cfg.output.dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let ok = match &cli.command {
        Command::VerifyEstimates { samples, seed } => verify_estimates(*samples, *seed),
        Command::Band { k_path: KPath::GammaXMGamma, bands, points } => band(&cfg, *bands, *points, &out)?,
        Command::FreePoles { ell } => free_poles(&cfg, *ell, &out)?,
        Command::FormresCheck { cells, k2 } => formres(&cfg, *cells, *k2)?,
        Command::TrackPoles => pipeline_through(&cfg, "track")?.0,
        Command::ADecay => pipeline_through(&cfg, "decay")?.0,
        Command::FredholmScan | Command::RunAll => pipeline_through(&cfg, "fredholm")?.0,
    };
    Ok(if ok { Outcome::Pass } else { Outcome::CheckFailed })
}

/// Parses `args` and runs; the returned code is the process exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(CliError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
