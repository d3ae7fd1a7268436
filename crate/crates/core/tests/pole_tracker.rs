use std::f64::consts::PI;

use proptest::prelude::*;
use wgspec::linalg::c64;
use wgspec::medium::*;
use wgspec::pole_tracker::*;
use wgspec::symbol::{LinesSet, RectContour, Sign};

const DELTA: f64 = PI / 8.0;

fn free() -> MediumSpec {
    MediumSpec::homogeneous(1.0, vec![Rectangle::new(0.375, 0.625, 0.0, 1.0, 0.25).unwrap()])
}

/// Folded roots of `(k1 + m1)² + (k2 + m2)² = μ` over a window of modes.
fn free_roots(k2: c64, mu: f64, n2_half: i64) -> Vec<c64> {
    let mut out = Vec::new();
    for n2 in -n2_half..=n2_half {
        let b = k2 + 2.0 * PI * n2 as f64;
        let r = (c64::new(mu, 0.0) - b * b).sqrt();
        out.push(fold(r));
        out.push(fold(-r));
    }
    out
}

fn nearest(z: c64, set: &[c64]) -> f64 {
    set.iter().map(|w| cyl_dist(z, *w)).fold(f64::INFINITY, f64::min)
}

#[test]
fn angles_and_folding() {
    assert_eq!(wrap_angle(PI), -PI);
    assert!((wrap_angle(3.0 * PI + 0.5) - (-PI + 0.5)).abs() < 1e-14);
    assert!(cyl_dist(c64::new(-PI + 0.1, 1.0), c64::new(PI - 0.1, 1.0)) < 0.2 + 1e-14);
    assert_eq!(fold(c64::new(2.5 * PI, -1.0)), c64::new(0.5 * PI, -1.0));
}

#[test]
fn free_poles_without_coupling() {
    let k2 = c64::new(PI, PI / 2.0 + 2.0 * PI);
    let basis = BasisPolicy { n1_margin: 4, n2_half: 3 }.at(k2.im);
    let poles = pencil_eigs(k2, 0.0, &free(), &basis, 4.0 * PI).unwrap();
    let oracle = free_roots(k2, 0.0, 3);
    assert!(!poles.is_empty());
    for p in &poles {
        assert!(nearest(p.k1, &oracle) < 1e-10, "{}", p.k1);
        assert!(p.tail_mass <= TAIL_TRUST && p.residual <= RESIDUAL_TRUST);
    }
    // the two lowest-order poles are present
    for want in [c64::new(PI / 2.0, -PI), c64::new(-PI / 2.0, PI)] {
        assert!(nearest(want, &poles.iter().map(|p| p.k1).collect::<Vec<_>>()) < 1e-10);
    }
    // indices are 0..n after sorting by imaginary part
    assert!(poles.iter().enumerate().all(|(i, p)| p.index == i));
    assert!(poles.windows(2).all(|w| w[0].k1.im <= w[1].k1.im));
}

#[test]
fn real_k2_spectrum_is_conjugation_symmetric() {
    let medium = MediumSpec {
        eps0_background: 1.0,
        eps0_rectangles: vec![Rectangle::new(0.25, 0.75, 0.25, 0.75, 2.0).unwrap()],
        eps1_rectangles: vec![],
    };
    let basis = ModeBasis::symmetric(4, 3);
    for k2 in [1.9, 2.6, PI] {
        let poles = pencil_eigs(c64::new(k2, 0.0), 3.0, &medium, &basis, 2.0 * PI).unwrap();
        let set: Vec<c64> = poles.iter().map(|p| p.k1).collect();
        for p in &set {
            assert!(nearest(p.conj(), &set) < 1e-8, "k2 = {k2}: {p}");
        }
    }
}

fn samples(ks: &[f64], lambda: f64, medium: &MediumSpec) -> Vec<PoleSample> {
    let basis = ModeBasis::symmetric(4, 3);
    ks.iter()
        .map(|&k2| PoleSample { k2, records: pencil_eigs(c64::new(k2, 0.0), lambda, medium, &basis, 2.0 * PI).unwrap() })
        .collect()
}

#[test]
fn free_classification_and_gap() {
    let ks: Vec<f64> = (0..8).map(|i| PI / 2.0 + i as f64 * (PI / 2.0 + DELTA) / 7.0).collect();
    let s = samples(&ks, -1.0, &free());
    let c = classify_and_delta0(&s, 7).unwrap();
    // the closest pole to the real axis sits at |Im| = sqrt(min (k2 + m2)² + 1)
    let want = ks.iter().map(|k| (k * k + 1.0).sqrt().min(((k - 2.0 * PI).powi(2) + 1.0).sqrt())).fold(f64::INFINITY, f64::min);
    assert!((c.delta0 - want / 2.0).abs() < 1e-10, "{} vs {}", c.delta0, want / 2.0);
    assert_eq!(c.n_real, 0);
    assert_eq!(c.n_plus, c.n_minus);
    assert_eq!(c.n_plus + c.n_minus, c.start.len());
    assert!(c.start.iter().all(|r| (r.klass == PoleClass::Up) == (r.k1.im > c.delta0)));
    assert_eq!(c.start_k2, ks[7]);

    assert!(matches!(classify_and_delta0(&s[..7], 0), Err(TrackError::TooFewSamples { .. })));
    assert!(matches!(classify_and_delta0(&s, 8), Err(TrackError::StartIndex(8))));
}

#[test]
fn gap_collapse_is_reported() {
    let k2 = 2.5;
    let medium = MediumSpec::homogeneous(1.0, vec![]);
    let lambda = k2 * k2 - 9e-12;
    let ks: Vec<f64> = (0..8).map(|i| 2.5 + 0.01 * i as f64).collect();
    let s = samples(&ks, lambda, &medium);
    match classify_and_delta0(&s, 0) {
        Err(TrackError::GapCollapse { min_im }) => assert!(min_im < 1e-5 && min_im > TOL_REAL, "{min_im}"),
        other => panic!("expected a gap collapse, got {other:?}"),
    }
}

#[test]
fn basis_policy_and_region() {
    let p = BasisPolicy { n1_margin: 4, n2_half: 3 };
    assert_eq!(p.at(0.0), ModeBasis::symmetric(4, 3));
    assert_eq!(p.at(PI / 2.0 + 2.0 * PI), ModeBasis::symmetric(5, 3));
    assert_eq!(p.at(PI / 2.0 + 8.0 * PI), ModeBasis::symmetric(8, 3));
    assert!(in_z(c64::new(PI, 40.0), PI / 2.0, DELTA));
    assert!(in_z(c64::new(PI / 2.0 + 0.1, 0.0), PI / 2.0, DELTA));
    assert!(!in_z(c64::new(PI / 2.0 + 0.1, 1.0), PI / 2.0, DELTA));
    assert!(!in_z(c64::new(PI / 2.0 - 0.1, 0.0), PI / 2.0, DELTA));
    let path = PathSpec { waypoints: vec![c64::new(PI, 0.0), c64::new(0.5, 0.0)], theta: PI / 2.0, delta: DELTA, max_step: 0.1 };
    assert!(matches!(path.validate(false), Err(TrackError::PathExitsZ { .. })));
}

#[test]
fn contour_ranks() {
    let lines = LinesSet::new(DELTA, 2.0 * PI).unwrap();
    let k2 = c64::new(PI, PI / 2.0 + 2.0 * PI);
    let basis = BasisPolicy { n1_margin: 4, n2_half: 3 }.at(k2.im);
    let probe = RieszProbe::new(k2, 0.0, &free(), &basis).unwrap();
    for (sign, n2) in [(Sign::Plus, 0), (Sign::Minus, 0), (Sign::Plus, 1), (Sign::Minus, 1)] {
        let c = RectContour::new(sign, n2, &lines).unwrap();
        let r = probe.rank(&c, 64).unwrap();
        assert_eq!(r.rank, 1, "{sign:?} {n2}: {:?}", r.moduli);
    }
    let low = RieszProbe::new(c64::new(PI, 0.3), 0.0, &free(), &ModeBasis::symmetric(4, 3)).unwrap();
    let c = RectContour::new(Sign::Plus, 1, &lines).unwrap();
    assert_eq!(low.enclosed(&c), 0);
    assert_eq!(low.rank(&c, 64).unwrap().rank, 0);

    // an eigenvalue on the contour is refused
    let edge = RieszProbe::new(c64::new(PI, 2.0 * DELTA), 0.0, &free(), &ModeBasis::symmetric(4, 3)).unwrap();
    let c = RectContour::new(Sign::Minus, 0, &lines).unwrap();
    assert!(matches!(edge.rank(&c, 64), Err(TrackError::EigOnContour { .. })));
}

fn column_path() -> PathSpec {
    let re = PI + DELTA / 4.0;
    PathSpec {
        waypoints: vec![c64::new(re, 0.0), c64::new(re, PI / 2.0 + 2.0 * PI)],
        theta: PI / 2.0,
        delta: DELTA,
        max_step: DELTA / 2.0,
    }
}

#[test]
fn free_trajectory_matches_closed_form_and_reverses() {
    let path = column_path();
    let policy = BasisPolicy { n1_margin: 4, n2_half: 3 };
    let opts = TrackOptions::new(4.0 * PI);
    let start = pencil_eigs(path.waypoints[0], -1.0, &free(), &policy.at(0.0), opts.tau1).unwrap();
    let fwd = track_poles(&path, &start, -1.0, &free(), &policy, &opts).unwrap();
    assert!(!fwd.flagged);
    assert!((fwd.last().k2 - path.waypoints[1]).norm() < 1e-12);
    for p in &fwd.points {
        let oracle = free_roots(p.k2, -1.0, 4);
        for r in &p.poles {
            assert!(nearest(r.k1, &oracle) < 1e-8, "k2 = {}: {}", p.k2, r.k1);
        }
    }
    let steps: Vec<f64> = fwd.points.windows(2).map(|w| (w[1].k2 - w[0].k2).norm()).collect();
    assert!(steps.iter().all(|s| *s <= path.max_step + 1e-12));

    let back_path = PathSpec { waypoints: fwd.realized_path().into_iter().rev().collect(), ..path.clone() };
    let back = track_poles(&back_path, &fwd.last().poles, -1.0, &free(), &policy, &opts).unwrap();
    let end = &back.last().poles;
    assert_eq!(end.len(), start.len());
    for (a, b) in end.iter().zip(&start) {
        assert_eq!(a.index, b.index);
        assert!(cyl_dist(a.k1, b.k1) < 1e-6);
    }
    let rows = fwd.rows();
    assert_eq!(rows.len(), fwd.points.len() * fwd.n);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn uncoupled_poles_are_symbol_zeros(re in (PI - DELTA * 0.9)..(PI + DELTA * 0.9), im in 0.0..8.0f64) {
        let k2 = c64::new(re, im);
        let basis = BasisPolicy { n1_margin: 4, n2_half: 3 }.at(im);
        let poles = pencil_eigs(k2, 0.0, &free(), &basis, 4.0 * PI).unwrap();
        let oracle = free_roots(k2, 0.0, 3);
        for p in &poles {
            prop_assert!(nearest(p.k1, &oracle) < 1e-9);
        }
    }
}
