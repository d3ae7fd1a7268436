//! End-to-end acceptance checks. Runs as a plain binary so each check prints
//! one PASS/FAIL line; exits nonzero if any check fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wgspec::a_family::{assemble_a_deformed, assemble_a_direct};
use wgspec::cli::{free_pole_basis, oracle_poles};
use wgspec::config::RunConfig;
use wgspec::floquet::{floquet_forward, floquet_inverse, strip_resolvent_check, Axis, GridFunction};
use wgspec::linalg::{self, c64};
use wgspec::medium::{MediumSpec, ModeBasis, Part, Rectangle};
use wgspec::pipeline::{z0_samples, Pipeline, StageStatus};
use wgspec::pole_tracker::{classify_and_delta0, cyl_dist, pencil_eigs, PoleSample};
use wgspec::symbol::{hammer_sweep, min_gap, min_gap_brute, min_gap_sweep, select_tau1};

type Check = Result<String, String>;

fn within(t: Duration, secs: u64) -> Result<(), String> {
    if t <= Duration::from_secs(secs) {
        Ok(())
    } else {
        Err(format!("took {:.1} s, limit {secs} s", t.as_secs_f64()))
    }
}

fn symbol_estimates() -> Check {
    let t = Instant::now();
    let s = hammer_sweep(1_000_000, 7);
    within(t.elapsed(), 10)?;
    if s.violations != 0 {
        return Err(format!("{} violations", s.violations));
    }
    Ok(format!("{} samples, 0 violations, min slack {:e}, {:.1} s", s.samples, s.min_slack, t.elapsed().as_secs_f64()))
}

fn min_gap_tightness() -> Check {
    let t = Instant::now();
    let formula = min_gap(PI / 2.0, 0).map_err(|e| e.to_string())?;
    let brute = min_gap_brute(PI / 2.0, 0, 200, 100_000);
    let tight = (brute - formula).abs();
    if tight > 1e-9 * formula {
        return Err(format!("brute {brute} vs formula {formula}"));
    }
    let betas = [PI / 8.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];
    let cases = min_gap_sweep(&betas, &[0, 1, 2, 3], 200, 100_000).map_err(|e| e.to_string())?;
    if let Some(c) = cases.iter().find(|c| c.brute < c.bound * (1.0 - 1e-12)) {
        return Err(format!("brute below bound: {c:?}"));
    }
    within(t.elapsed(), 30)?;
    Ok(format!("|brute − 7π²/4| = {tight:e}, {} grid cases hold, {:.1} s", cases.len(), t.elapsed().as_secs_f64()))
}

fn free_pole_oracle() -> Check {
    let t = Instant::now();
    let cfg = RunConfig::free();
    let ell = 2.0 * PI;
    let tau1 = select_tau1(cfg.spectral.lambda, cfg.medium.sup_norm(Part::Periodic), cfg.spectral.theta);
    let basis = free_pole_basis(ell, tau1);
    let found = pencil_eigs(c64::new(PI, PI / 2.0 + ell), 0.0, &cfg.medium, &basis, tau1).map_err(|e| e.to_string())?;
    let oracle = oracle_poles(basis.iter().filter(|m| !basis.on_boundary(*m)), ell, tau1);
    let worst = oracle
        .iter()
        .map(|z| found.iter().map(|r| cyl_dist(*z, r.k1)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    within(t.elapsed(), 60)?;
    if worst > 1e-8 || found.len() != oracle.len() {
        return Err(format!("{} trusted vs {} oracle, max distance {worst:e}", found.len(), oracle.len()));
    }
    Ok(format!("{} poles, max distance {worst:e}", found.len()))
}

fn rectangle_medium() -> MediumSpec {
    MediumSpec {
        eps0_background: 1.0,
        eps0_rectangles: vec![Rectangle::new(0.25, 0.75, 0.25, 0.75, 2.0).unwrap()],
        eps1_rectangles: vec![Rectangle::new(0.4, 0.6, 0.0, 1.0, 0.5).unwrap()],
    }
}

fn strip_formula() -> Check {
    let t = Instant::now();
    let basis = ModeBasis::symmetric(4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f: Vec<c64> = (0..basis.len()).map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let rect = strip_resolvent_check(2.3, -1.0, &rectangle_medium(), &basis, 16, &f, (16, 16)).map_err(|e| e.to_string())?;
    let free = strip_resolvent_check(2.3, -1.0, &RunConfig::free().medium, &basis, 8, &f, (16, 16)).map_err(|e| e.to_string())?;
    within(t.elapsed(), 60)?;
    if rect.rel_err > 1e-8 || free.rel_err > 1e-10 {
        return Err(format!("rectangle L=16 {:e}, free L=8 {:e}", rect.rel_err, free.rel_err));
    }
    Ok(format!("rectangle L=16 {:e}, free L=8 {:e}", rect.rel_err, free.rel_err))
}

fn contour_deformation() -> Check {
    let t = Instant::now();
    let medium = rectangle_medium();
    let (lambda, theta, delta) = (3.0, PI / 2.0, PI / 8.0);
    let tau1 = select_tau1(lambda, medium.sup_norm(Part::Periodic), theta);
    let basis = ModeBasis::symmetric(7, 4);
    let ks = [2.0, 2.2, 2.4, 2.6, 2.8];

    let mut cfg = RunConfig::free();
    cfg.medium = medium.clone();
    cfg.spectral.lambda = lambda;
    let (mut xs, _) = z0_samples(&cfg);
    xs.extend(ks);
    let eig = |k2: f64| pencil_eigs(c64::new(k2, 0.0), lambda, &medium, &basis, tau1).map_err(|e| e.to_string());
    let samples = xs.iter().map(|&k2| Ok(PoleSample { k2, records: eig(k2)? })).collect::<Result<Vec<_>, String>>()?;
    let delta0 = classify_and_delta0(&samples, 0).map_err(|e| e.to_string())?.delta0;

    let quad = cfg.quadrature.assembly();
    let mut worst: f64 = 0.0;
    for k2 in ks {
        if !(k2 > theta && k2 < PI + delta) {
            return Err(format!("sample {k2} outside Z0"));
        }
        let z = c64::new(k2, 0.0);
        let direct = assemble_a_direct(z, lambda, &medium, &basis, delta0, tau1, quad).map_err(|e| format!("k2 = {k2}: {e}"))?;
        let all = eig(k2)?;
        let up: Vec<_> = all.iter().filter(|p| p.k1.im > delta0).cloned().collect();
        let deformed = assemble_a_deformed(z, lambda, &medium, &basis, &up, &all, tau1, delta0, quad)
            .map_err(|e| format!("k2 = {k2}: {e}"))?;
        let d = linalg::norm2(&(&direct.matrix - &deformed.matrix)).map_err(|e| e.to_string())? / direct.norm2;
        worst = worst.max(d);
    }
    within(t.elapsed(), 300)?;
    if worst > 1e-7 {
        return Err(format!("max relative difference {worst:e}"));
    }
    Ok(format!("5 samples, δ0 = {delta0:.4}, max relative difference {worst:e}, {:.0} s", t.elapsed().as_secs_f64()))
}

fn floquet_isometry() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let axis = if trial % 2 == 0 { Axis::X1 } else { Axis::X2 };
        let cells = 2 + trial % 7;
        let v = (0..cells * 8 * 8).map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let f = GridFunction::new(axis, cells, 8, 8, v).map_err(|e| e.to_string())?;
        let field = floquet_forward(axis, &f).map_err(|e| e.to_string())?;
        let energy: f64 = field.slices.iter().map(|s| s.norm().powi(2)).sum();
        let back = floquet_inverse(axis, &field).map_err(|e| e.to_string())?;
        let diff = back.values().iter().zip(f.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        worst = worst.max((energy.sqrt() - f.norm()).abs() / f.norm()).max(diff);
    }
    within(t.elapsed(), 5)?;
    if worst > 1e-12 {
        return Err(format!("worst error {worst:e}"));
    }
    Ok(format!("100 functions, worst error {worst:e}"))
}

/// Criteria 6 to 9 share one full run.
fn full_run(out: &Path) -> Vec<(&'static str, Check)> {
    let mut cfg = RunConfig::free();
    cfg.output.dir = out.to_path_buf();
    let t = Instant::now();
    let mut p = Pipeline::new(&cfg);
    let mut report = p.run();
    let elapsed = t.elapsed();
    let _ = p.write(&mut report, out);
    let stage = |name: &str| report.stage(name).cloned();
    let metric = |name: &str, key: &str| stage(name).and_then(|s| s.metrics.get(key).cloned());
    let failed = |name: &str| match stage(name) {
        Some(s) if s.status != StageStatus::Pass => Some(format!("stage {name}: {:?} {}", s.status, s.message.unwrap_or_default())),
        None => Some(format!("stage {name} missing")),
        _ => None,
    };

    let decay: Check = (|| {
        if let Some(why) = failed("decay") {
            return Err(why);
        }
        let slope = metric("decay", "slope_fit").and_then(|v| v.as_f64()).ok_or("no slope")?;
        let ratio = metric("decay", "boundedness_ratio").and_then(|v| v.as_f64()).ok_or("no ratio")?;
        within(elapsed, 20 * 60)?;
        if !(-1.3..=-0.7).contains(&slope) || ratio > 2.0 {
            return Err(format!("slope {slope}, ratio {ratio}"));
        }
        let rows = p.state.decay.as_ref().map_or(0, |d| d.rows.len());
        Ok(format!("{rows} heights, slope {slope:.4}, boundedness ratio {ratio:.4}, full run {:.0} s", elapsed.as_secs_f64()))
    })();

    let riesz: Check = (|| {
        if let Some(why) = failed("localize") {
            return Err(why);
        }
        let ranks = &p.state.ranks;
        let flat: Vec<usize> = ranks.iter().flatten().flatten().copied().collect();
        if ranks.len() != p.state.heights.len() || flat.is_empty() || flat.iter().any(|&r| r != 1) {
            return Err(format!("ranks {ranks:?}"));
        }
        Ok(format!("{} heights × 3 μ, {} contours, all rank 1", ranks.len(), flat.len()))
    })();

    let fredholm: Check = (|| {
        if let Some(why) = failed("fredholm") {
            return Err(why);
        }
        let reps = &p.state.fredholm;
        let upper = &reps[reps.len() / 2..];
        let worst_sigma = upper.iter().map(|r| r.sigma_min).fold(f64::INFINITY, f64::min);
        let worst_bound = upper.iter().map(|r| r.neumann_bound).fold(0.0, f64::max);
        if upper.is_empty() || worst_sigma < 0.5 || worst_bound >= 1.0 {
            return Err(format!("σ_min {worst_sigma}, neumann {worst_bound}"));
        }
        Ok(format!("{} upper heights, min σ_min {worst_sigma:.6}, max neumann bound {worst_bound:e}", upper.len()))
    })();

    let count: Check = (|| {
        if let Some(why) = failed("track") {
            return Err(why);
        }
        let fwd = p.state.forward.as_ref().ok_or("no trajectory")?;
        let bad = fwd.points.iter().filter(|q| q.flags.is_empty() && q.poles.len() != fwd.n).count();
        let err = metric("track", "reversal_error").and_then(|v| v.as_f64()).ok_or("no reversal error")?;
        if bad > 0 || err > 1e-6 {
            return Err(format!("{bad} steps with a different count, reversal error {err:e}"));
        }
        Ok(format!("N = {} over {} steps, reversal error {err:e}", fwd.n, fwd.points.len()))
    })();

    vec![("decay law", decay), ("riesz localization", riesz), ("fredholm scan", fredholm), ("pole count", count)]
}

fn determinism(root: &Path) -> Check {
    let run = |name: &str| -> Result<std::path::PathBuf, String> {
        let dir = root.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_wgspec"))
            .args(["run-all", "--ell-max", "5", "--out"])
            .arg(&dir)
            .output()
            .map_err(|e| e.to_string())?
            .status;
        if status.code() != Some(0) {
            return Err(format!("run-all exited with {status}"));
        }
        Ok(dir)
    };
    let (a, b) = (run("a")?, run("b")?);
    let mut names: Vec<_> = std::fs::read_dir(&a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut other: Vec<_> = std::fs::read_dir(&b).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    other.sort();
    if names != other {
        return Err(format!("file sets differ: {names:?} vs {other:?}"));
    }
    for n in &names {
        if std::fs::read(a.join(n)).map_err(|e| e.to_string())? != std::fs::read(b.join(n)).map_err(|e| e.to_string())? {
            return Err(format!("{} differs", n.to_string_lossy()));
        }
    }
    Ok(format!("{} files bit-identical", names.len()))
}

fn main() -> ExitCode {
    linalg::use_sequential_kernels();
    let scratch = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(&str, Check)> = vec![
        ("symbol estimates", symbol_estimates()),
        ("minimal gap", min_gap_tightness()),
        ("free-pole oracle", free_pole_oracle()),
        ("strip resolvent formula", strip_formula()),
        ("contour deformation", contour_deformation()),
    ];
    results.extend(full_run(&scratch.path().join("full")));
    results.push(("floquet isometry", floquet_isometry()));
    results.push(("determinism", determinism(scratch.path())));

    let mut ok = true;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                ok = false;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
