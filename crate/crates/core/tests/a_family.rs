use std::f64::consts::PI;

use wgspec::a_family::*;
use wgspec::cell_operator::{demodulation_matrix, modulation_matrix, Periodization};
use wgspec::linalg::{self, c64, CMat};
use wgspec::medium::*;
use wgspec::pole_tracker::{pencil_eigs, PoleRecord};

const TAU1: f64 = 2.0 * PI;

fn free() -> MediumSpec {
    MediumSpec::homogeneous(1.0, vec![Rectangle::new(0.375, 0.625, 0.0, 1.0, 0.25).unwrap()])
}

fn rel(a: &CMat, b: &CMat) -> f64 {
    linalg::frobenius(&(a - b)) / linalg::frobenius(b)
}

fn quad() -> Quadrature {
    Quadrature::default()
}

/// Poles at `k2` and the subset above `delta0`.
fn poles(k2: c64, lambda: f64, basis: &ModeBasis, delta0: f64) -> (Vec<PoleRecord>, Vec<PoleRecord>) {
    let all = pencil_eigs(k2, lambda, &free(), basis, TAU1).unwrap();
    let up = all.iter().filter(|p| p.k1.im > delta0).cloned().collect();
    (up, all)
}

#[test]
fn uncoupled_smoke() {
    let basis = ModeBasis::symmetric(3, 2);
    let fam = assemble_a_direct(c64::new(2.0, 0.0), 0.0, &free(), &basis, 1.0, TAU1, quad()).unwrap();
    assert!(fam.norm2.is_finite() && fam.norm2 > 0.0);
    assert!(fam.quad_change.unwrap() <= QUAD_RTOL);
    assert!(fam.residue_contribs.is_empty());
    assert_eq!(fam.matrix.nrows(), basis.len());
}

#[test]
fn direct_and_deformed_agree() {
    let basis = ModeBasis::symmetric(3, 2);
    let (delta0, lambda) = (1.0, -1.0);
    for k2 in [c64::new(PI, 0.2), c64::new(2.0, 0.0), c64::new(PI + 0.1, 1.5)] {
        let direct = assemble_a_direct(k2, lambda, &free(), &basis, delta0, TAU1, quad()).unwrap();
        let (up, all) = poles(k2, lambda, &basis, delta0);
        assert!(!up.is_empty());
        let deformed = assemble_a_deformed(k2, lambda, &free(), &basis, &up, &all, TAU1, delta0, quad()).unwrap();
        let e = rel(&deformed.matrix, &direct.matrix);
        assert!(e <= 1e-8, "k2 = {k2}: {e:e}");
        assert_eq!(deformed.residue_contribs.len(), up.len());
    }
}

#[test]
fn residues_match_the_closed_form() {
    let basis = ModeBasis::symmetric(3, 2);
    let (k2, lambda, delta0) = (c64::new(PI, 0.2), -1.0, 1.0);
    let (up, all) = poles(k2, lambda, &basis, delta0);
    let fam = assemble_a_deformed(k2, lambda, &free(), &basis, &up, &all, TAU1, delta0, quad()).unwrap();
    let period = Periodization::for_tau1(TAU1);
    let modes: Vec<Mode> = basis.iter().collect();
    for (idx, contrib) in &fam.residue_contribs {
        let p = up.iter().find(|r| r.index == *idx).unwrap().k1;
        let n = basis.len();
        let mut res = linalg::zeros(n, n);
        let mut hits = 0;
        for (j, w) in period.translates(p) {
            let z = p - 2.0 * PI * j as f64;
            let f = demodulation_matrix(z, &basis);
            let e = modulation_matrix(z, &basis);
            for (i, m) in modes.iter().enumerate() {
                let a = z + m.m1();
                let s = a * a + (k2 + m.m2()).powi(2) - lambda;
                if s.norm() > 1e-8 * (1.0 + a.norm_sqr()) {
                    continue;
                }
                hits += 1;
                let scale = w / (2.0 * PI * 2.0 * a);
                for r in 0..n {
                    for c in 0..n {
                        res[(r, c)] += f[(r, i)] * e[(i, c)] * scale;
                    }
                }
            }
        }
        assert!(hits > 0);
        res *= faer::Scale(c64::new(0.0, 2.0 * PI));
        let e = rel(contrib, &res);
        assert!(e <= 1e-8, "pole {idx}: {e:e}");
    }
}

#[test]
fn residue_radius_rule() {
    assert!((residue_radius(c64::new(0.0, 1.0), &[c64::new(0.1, 1.0), c64::new(2.0, 1.0)]) - 0.045).abs() < 1e-15);
    assert_eq!(residue_radius(c64::new(0.0, 1.0), &[c64::new(0.0, 1.0), c64::new(3.0, 1.0)]), R_MAX);
    // neighbours are measured on the cylinder
    let r = residue_radius(c64::new(-PI + 0.05, 0.0), &[c64::new(PI - 0.05, 0.0)]);
    assert!((r - 0.045).abs() < 1e-12);
}

#[test]
fn circle_nodes_do_not_change_the_result() {
    let basis = ModeBasis::symmetric(3, 2);
    let (k2, lambda, delta0) = (c64::new(PI, 0.2), -1.0, 1.0);
    let (up, all) = poles(k2, lambda, &basis, delta0);
    let a = assemble_a_deformed(k2, lambda, &free(), &basis, &up, &all, TAU1, delta0, quad()).unwrap();
    let finer = Quadrature { q_circle: 96, q_line: 128, ..quad() };
    let b = assemble_a_deformed(k2, lambda, &free(), &basis, &up, &all, TAU1, delta0, finer).unwrap();
    assert!(rel(&a.matrix, &b.matrix) <= 1e-9);
}

#[test]
fn line_through_a_pole_is_refused() {
    let basis = ModeBasis::symmetric(3, 2);
    let k2 = c64::new(PI, 0.2);
    let (up, _) = poles(k2, -1.0, &basis, 1.0);
    let h = up[0].k1.im;
    let r = assemble_a_direct(k2, -1.0, &free(), &basis, h, TAU1, quad());
    assert!(matches!(r, Err(AError::PoleOnContour { .. })), "{r:?}");
}

#[test]
fn analytic_in_k2() {
    // mean over a small circle reproduces the centre
    let basis = ModeBasis::symmetric(3, 2);
    let (center, radius, nodes) = (c64::new(2.8, 0.0), 0.05, 8);
    let at = |k2: c64| assemble_a_direct(k2, -1.0, &free(), &basis, 0.5, TAU1, quad()).unwrap().matrix;
    let mut mean = linalg::zeros(basis.len(), basis.len());
    for j in 0..nodes {
        let mut m = at(center + c64::from_polar(radius, 2.0 * PI * j as f64 / nodes as f64));
        m *= faer::Scale(c64::new(1.0 / nodes as f64, 0.0));
        mean += &m;
    }
    let e = rel(&mean, &at(center));
    assert!(e <= 1e-6, "{e:e}");
}

fn family_with(matrix: CMat, basis: ModeBasis) -> AFamily {
    let norm2 = linalg::norm2(&matrix).unwrap();
    AFamily {
        k2: c64::new(PI, 1.0),
        basis,
        line_contrib: matrix.clone(),
        matrix,
        tau1: TAU1,
        delta0: 1.0,
        residue_contribs: Vec::new(),
        q_line: 64,
        q_circle: 32,
        norm2,
        quad_change: None,
    }
}

#[test]
fn fredholm_conclusions() {
    let basis = ModeBasis::symmetric(2, 2);
    let n = basis.len();
    let eye = |s: f64| CMat::from_fn(n, n, |i, j| c64::new(if i == j { s } else { 0.0 }, 0.0));
    // defect filling the whole cell: Conv ε1 = 0.5 I
    let full = MediumSpec::homogeneous(1.0, vec![Rectangle::new(0.0, 1.0, 0.0, 1.0, 0.5).unwrap()]);

    let r = fredholm_report(&family_with(eye(1.0), basis), 0.0, &full).unwrap();
    assert_eq!((r.sigma_min, r.neumann_bound, r.conclusion), (1.0, 0.0, Conclusion::DefinitelyInvertible));

    let r = fredholm_report(&family_with(eye(1.0), basis), 1.0, &full).unwrap();
    assert!((r.sigma_min - 0.5).abs() < 1e-12 && r.conclusion == Conclusion::DefinitelyInvertible);

    let r = fredholm_report(&family_with(eye(3.0), basis), 1.0, &full).unwrap();
    assert!((r.sigma_min - 0.5).abs() < 1e-12 && r.conclusion == Conclusion::NumericallyInvertible);

    // the dip: λ A Conv ε1 = I
    let r = fredholm_report(&family_with(eye(2.0), basis), 1.0, &full).unwrap();
    assert!(r.sigma_min < 1e-12 && r.conclusion == Conclusion::NearSingular);

    let scan = fredholm_scan(&[family_with(eye(1.0), basis), family_with(eye(2.0), basis)], 1.0, &full).unwrap();
    assert_eq!(scan.len(), 2);
    assert_eq!("near_singular".parse::<Conclusion>().unwrap(), Conclusion::NearSingular);
    assert!("bogus".parse::<Conclusion>().is_err());
}

#[test]
fn uncoupled_fredholm_is_identity() {
    let basis = ModeBasis::symmetric(3, 2);
    let fam = assemble_a_direct(c64::new(2.0, 0.0), -1.0, &free(), &basis, 0.5, TAU1, quad()).unwrap();
    let r = fredholm_report(&fam, 0.0, &free()).unwrap();
    assert!((r.sigma_min - 1.0).abs() < 1e-14);
    assert_eq!(r.conclusion, Conclusion::DefinitelyInvertible);
}

#[test]
fn decay_summary() {
    let rows: Vec<DecayRow> = (4..=12)
        .map(|n| {
            let ell = 2.0 * PI * n as f64;
            DecayRow { ell, re_k2: PI, norm2: 0.7 / ell, neumann_bound: 0.1 / ell }
        })
        .collect();
    let t = decay_table(rows).unwrap();
    assert!((t.slope_fit + 1.0).abs() < 1e-12);
    assert!((t.c_empirical - 0.7).abs() < 1e-12);
    assert!((t.boundedness_ratio - 1.0).abs() < 1e-12);
    assert!(matches!(decay_table(Vec::new()), Err(AError::ShortSweep)));

    let basis = ModeBasis::symmetric(2, 2);
    let fam = family_with(CMat::from_fn(basis.len(), basis.len(), |i, j| c64::new(if i == j { 2.0 } else { 0.0 }, 0.0)), basis);
    let row = decay_row(3.0, &fam, -2.0, &free()).unwrap();
    let e1 = defect_norm(&free(), &basis).unwrap();
    assert!((row.neumann_bound - 2.0 * 2.0 * e1).abs() < 1e-12);
}
