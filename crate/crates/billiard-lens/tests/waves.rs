use std::f64::consts::PI;

use billiard_lens::grid::GridSpec;
use billiard_lens::special::{bessel_j, bessel_zero, radial_profile};
use billiard_lens::waves::{
    check_symmetry, decay_norm, helmholtz_convergence, required_symmetry, symmetrize, symmetrize_row,
    translate_to_herglotz, BesselTranslateSum, HerglotzPolynomial, Isometry, ParityClass, PolygonKind,
    SymmetryBc, SymmetryGroup, SymmetryRow, SymmetryTable, Translate, WaveSpec,
};
use num_complex::Complex64;
use proptest::prelude::{prop_assert, proptest};

/// (order, argument, J_order(argument)) from an independent Bessel implementation.
const BESSEL_TABLE: [(f64, f64, f64); 10] = [
    (0.0, 0.5, 0.938469807240813),
    (0.0, 2.404825557695773, 0.0),
    (0.0, 10.0, -0.24593576445134832),
    (1.0, 3.0, 0.33905895852593626),
    (0.5, 1.7, 0.6068488080076186),
    (2.5, 7.3, -0.3008494315874978),
    (5.0, 0.2, 8.319454360946937e-08),
    (10.0, 12.0, 0.3004760352712692),
    (1.5, 40.0, 0.08648867973613378),
    (12.0, 3.0, 2.275725448320573e-07),
];

const J0_FIRST_ZERO: f64 = 2.404825557695773;

fn dirichlet_square() -> SymmetryRow {
    SymmetryRow::new(SymmetryTable::FixedPoint, PolygonKind::Rectangle, SymmetryBc::Dirichlet)
}

#[test]
fn bessel_matches_reference_table() {
    for (nu, x, expect) in BESSEL_TABLE {
        let got = bessel_j(nu, x);
        let tol = 1e-13 + 1e-11 * expect.abs();
        assert!((got - expect).abs() <= tol, "J_{nu}({x}) = {got}, expected {expect}");
    }
    assert_eq!(bessel_j(0.0, 0.0), 1.0);
    assert_eq!(bessel_j(1.0, 0.0), 0.0);
}

#[test]
fn bessel_first_zero_matches() {
    let z = bessel_zero(0.0, 1).unwrap();
    assert!((z - J0_FIRST_ZERO).abs() < 1e-12);
}

#[test]
fn radial_profiles_match_closed_forms() {
    // Value at the center is 1 / (2^{d/2-1} Gamma(d/2)).
    let centers = [(2, 1.0), (3, (2.0 / PI).sqrt()), (4, 0.5), (5, (2.0 / PI).sqrt() / 3.0)];
    for (d, expect) in centers {
        assert!((radial_profile(d, 0.0) - expect).abs() < 1e-14, "d = {d}");
    }
    for r in [0.3f64, 1.0, 2.5, 7.0] {
        let expect = (2.0 / PI).sqrt() * r.sin() / r;
        assert!((radial_profile(3, r) - expect).abs() < 1e-12);
    }
}

#[test]
fn translate_examples() {
    let w = BesselTranslateSum::radial(2);
    assert!((w.eval(&[0.0, 0.0]) - 1.0).abs() < 1e-15);
    assert!(w.eval(&[J0_FIRST_ZERO, 0.0]).abs() < 1e-14);
    let pair = BesselTranslateSum::planar(&[([1.0, 0.0], 1.0), ([-1.0, 0.0], -1.0)]);
    assert!(pair.eval(&[0.0, 0.0]).abs() < 1e-15);
    assert!(BesselTranslateSum::new(2, vec![Translate { center: vec![0.0; 3], coeff: 1.0 }]).is_err());
    assert!(BesselTranslateSum::new(1, Vec::new()).is_err());
}

#[test]
fn translates_solve_helmholtz_exactly() {
    let w = BesselTranslateSum::planar(&[([0.3, -1.2], 0.7), ([2.0, 0.5], -1.1), ([-0.4, 0.9], 0.25)]);
    for z in [[0.1, 0.2], [1.5, -0.7], [-2.2, 3.1]] {
        assert!((w.laplacian(&z) + w.eval(&z)).abs() < 1e-11);
    }
    let w3 = BesselTranslateSum::new(
        3,
        vec![
            Translate { center: vec![0.5, 0.0, -0.3], coeff: 1.0 },
            Translate { center: vec![-1.0, 0.4, 0.2], coeff: 0.5 },
        ],
    )
    .unwrap();
    for z in [[0.2, 0.1, 0.0], [1.0, -1.0, 0.7]] {
        assert!((w3.laplacian(&z) + w3.eval(&z)).abs() < 1e-11);
    }
}

#[test]
fn herglotz_examples() {
    let p = HerglotzPolynomial::bessel_radial();
    for z in [[0.0f64, 0.0], [1.3, -0.4], [3.0, 2.0]] {
        let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
        assert!((p.eval(z).unwrap() - bessel_j(0.0, r)).abs() < 1e-13);
    }
    // p = xi_1 gives i J_1(r) cos(theta), which vanishes at the origin.
    let half = Complex64::new(0.5, 0.0);
    let xi1 = HerglotzPolynomial::new(1, vec![half, Complex64::new(0.0, 0.0), half]).unwrap();
    assert!(xi1.eval_complex([0.0, 0.0]).norm() < 1e-15);
    let z = [0.8, 0.6];
    let expect = Complex64::new(0.0, 2.0 * PI * bessel_j(1.0, 1.0) * 0.8);
    assert!((xi1.eval_complex(z) - expect).norm() < 1e-12);
    assert!(HerglotzPolynomial::new(2, vec![half; 3]).is_err());
}

#[test]
fn herglotz_round_trip_reproduces_translates() {
    let w = BesselTranslateSum::planar(&[([1.0, 0.0], 1.0), ([-0.3, 0.8], -0.6), ([0.0, -1.5], 0.4)]);
    let h = translate_to_herglotz(&w).unwrap();
    assert!(h.is_hermitian());
    for z in [[0.0, 0.0], [0.7, -0.2], [-1.1, 1.4], [2.0, 2.0]] {
        let direct = w.eval(&z);
        assert!((h.eval(z).unwrap() - direct).abs() < 1e-10);
        assert!((h.eval_series(z).re - direct).abs() < 1e-10);
    }
}

#[test]
fn unit_translate_has_bessel_coefficients() {
    let w = BesselTranslateSum::planar(&[([1.0, 0.0], 1.0)]);
    let h = translate_to_herglotz(&w).unwrap();
    for k in -4i64..=4 {
        let n = k.unsigned_abs() as f64;
        let sign = if k < 0 && k % 2 != 0 { -1.0 } else { 1.0 };
        let expect = Complex64::new(0.0, -1.0).powi(k as i32) * (sign * bessel_j(n, 1.0) / (2.0 * PI));
        assert!((h.coeff(k) - expect).norm() < 1e-15, "k = {k}");
    }
}

#[test]
fn empty_sum_gives_zero_density() {
    let h = translate_to_herglotz(&BesselTranslateSum::planar(&[])).unwrap();
    assert_eq!(h, HerglotzPolynomial::zero());
}

#[test]
fn symmetrization_is_idempotent() {
    let w = WaveSpec::translates(BesselTranslateSum::planar(&[([0.4, 0.7], 1.0), ([-1.2, 0.3], 0.5)]));
    for row in ["tableA:iso:neumann", "tableB:equi:dirichlet", "tableB:hemi:neumann", "tableA:hemi:dirichlet"] {
        let row: SymmetryRow = row.parse().unwrap();
        let once = symmetrize_row(&w, &row).unwrap();
        let twice = symmetrize_row(&once, &row).unwrap();
        for z in [[0.2, 0.1], [1.0, -0.6], [-2.0, 1.3]] {
            assert!((once.eval(&z) - twice.eval(&z)).abs() < 1e-13, "row {row}");
        }
        assert!(check_symmetry(&once, &row, 64).unwrap() < 1e-12, "row {row}");
        assert!(once.validate().is_ok());
    }
}

#[test]
fn dirichlet_square_projection_vanishes_on_axes() {
    let row = dirichlet_square();
    let w = WaveSpec::translates(BesselTranslateSum::planar(&[([0.3, 0.5], 1.0)]));
    let s = symmetrize_row(&w, &row).unwrap();
    assert_eq!(s.translate_sum().unwrap().translates.len(), 4);
    for t in [-2.0, -0.4, 0.9, 3.3] {
        assert!(s.eval(&[t, 0.0]).abs() < 1e-15);
        assert!(s.eval(&[0.0, t]).abs() < 1e-15);
    }
}

#[test]
fn identity_group_leaves_the_wave_unchanged() {
    let w = WaveSpec::translates(BesselTranslateSum::planar(&[([0.3, 0.5], 1.0)]));
    let s = symmetrize(&w, &SymmetryGroup::trivial(2), SymmetryBc::Dirichlet).unwrap();
    assert_eq!(s, w);
}

#[test]
fn check_symmetry_flags_violations() {
    let row = dirichlet_square();
    let w = WaveSpec::translates(BesselTranslateSum::planar(&[([1.0, 0.3], 1.0)]));
    assert!(check_symmetry(&w, &row, 64).unwrap() > 0.1);
    let mut tagged = w.clone();
    tagged.symmetry = Some(row);
    assert!(tagged.validate().is_err());
    let zero = WaveSpec::translates(BesselTranslateSum::planar(&[]));
    assert_eq!(check_symmetry(&zero, &row, 64).unwrap(), 0.0);
}

#[test]
fn group_orders() {
    let order = |s: &str| s.parse::<SymmetryRow>().unwrap().group().unwrap().order();
    assert_eq!(order("tableA:rectangle:dirichlet"), 4);
    assert_eq!(order("tableA:iso:neumann"), 8);
    assert_eq!(order("tableA:equi:neumann"), 2);
    assert_eq!(order("tableB:equi:neumann"), 6);
    assert_eq!(order("tableB:hemi:neumann"), 12);
    assert!(SymmetryGroup::generate(vec![Isometry::rotation(0.3)]).is_err());
}

#[test]
fn helmholtz_stencil_converges_at_second_order() {
    let grid = GridSpec::centered_square(1.0, 0.05).unwrap();
    let j0 = WaveSpec::translates(BesselTranslateSum::radial(2));
    let c = helmholtz_convergence(&j0, &grid).unwrap();
    assert!(c.is_second_order(), "{c:?}");
    let cos = WaveSpec::translates(BesselTranslateSum::planar(&[([0.5, -0.5], 1.0), ([-1.0, 0.2], 0.3)]));
    assert!(helmholtz_convergence(&cos, &grid).unwrap().is_second_order());
    let zero = WaveSpec::translates(BesselTranslateSum::planar(&[]));
    let c = helmholtz_convergence(&zero, &grid).unwrap();
    assert_eq!(c.coarse, 0.0);
    assert!(c.is_second_order());
}

#[test]
fn decay_norm_is_bounded() {
    let w = WaveSpec::translates(BesselTranslateSum::planar(&[([1.0, 0.0], 1.0), ([0.0, 2.0], -0.5)]));
    let n = decay_norm(&w, 200.0, 32, 400);
    assert!(n.is_finite() && n > 0.0 && n < 10.0, "{n}");
}

#[test]
fn required_symmetry_examples() {
    assert_eq!(
        required_symmetry(true, true, [0.0, 0.3], 5),
        ParityClass::Axes { odd: vec![0], even: Vec::new() }
    );
    assert_eq!(
        required_symmetry(true, false, [0.0, 1.0], 5),
        ParityClass::Axes { odd: Vec::new(), even: vec![0, 1] }
    );
    assert_eq!(required_symmetry(true, true, [0.5, 0.5], 10), ParityClass::PointEven);
    assert_eq!(required_symmetry(true, true, [0.5, 0.5], 5), ParityClass::PointOdd);
    assert_eq!(required_symmetry(true, true, [0.41, 0.13], 5), ParityClass::NotClassified);
    assert_eq!(required_symmetry(false, true, [0.0, 0.3], 5), ParityClass::NotClassified);
}

#[test]
fn wave_spec_json_round_trip() {
    let mut w = WaveSpec::translates(BesselTranslateSum::planar(&[([0.3, 0.5], 1.0), ([-1.0, 0.0], -2.0)]));
    w.symmetry = Some(dirichlet_square());
    let text = serde_json::to_string(&w).unwrap();
    let back: WaveSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, w);
    let h = WaveSpec::herglotz(translate_to_herglotz(w.translate_sum().unwrap()).unwrap());
    let back: WaveSpec = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
    assert_eq!(back, h);
    assert!(serde_json::from_str::<WaveSpec>(r#"{"d":2,"kind":"spline"}"#).is_err());
    assert!(serde_json::from_str::<WaveSpec>(r#"{"d":3,"kind":"herglotz","herglotz":{"degree":0,"coeffs":[[1,0]]}}"#).is_err());
}

proptest! {
    #[test]
    fn reflections_preserve_waves_after_projection(
        x in -2.0f64..2.0, y in -2.0f64..2.0, px in -3.0f64..3.0, py in -3.0f64..3.0,
    ) {
        let row = dirichlet_square();
        let w = WaveSpec::translates(BesselTranslateSum::planar(&[([x, y], 1.0)]));
        let s = symmetrize_row(&w, &row).unwrap();
        let v = s.eval(&[px, py]);
        prop_assert!((s.eval(&[-px, py]) + v).abs() < 1e-13);
        prop_assert!((s.eval(&[px, -py]) + v).abs() < 1e-13);
    }

    #[test]
    fn herglotz_matches_translates(
        x in -2.0f64..2.0, y in -2.0f64..2.0, px in -3.0f64..3.0, py in -3.0f64..3.0, c in -2.0f64..2.0,
    ) {
        let w = BesselTranslateSum::planar(&[([x, y], c)]);
        let h = translate_to_herglotz(&w).unwrap();
        prop_assert!((h.eval([px, py]).unwrap() - w.eval(&[px, py])).abs() < 1e-10);
    }

    #[test]
    fn rotations_compose_to_identity(a in -7.0f64..7.0) {
        let r = Isometry::rotation(a);
        prop_assert!(r.compose(&r.inverse()).distance(&Isometry::identity(2)) < 1e-14);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-14);
    }
}
