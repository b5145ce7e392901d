use billiard_lens::billiards::{BilliardKind, BilliardSpec, Boundary, Coefficient};
use billiard_lens::localize::*;
use billiard_lens::waves::{
    check_symmetry, symmetrize_row, BesselTranslateSum, PolygonKind, SymmetryBc, SymmetryRow, SymmetryTable, WaveSpec,
};
use num_rational::Ratio;
use proptest::prelude::*;

fn square(bc: Boundary) -> BilliardSpec {
    BilliardSpec::unit_square(bc)
}

fn j0() -> WaveSpec {
    WaveSpec::translates(BesselTranslateSum::radial(2))
}

fn two_translates() -> WaveSpec {
    WaveSpec::translates(BesselTranslateSum::planar(&[([0.0, 0.0], 1.0), ([0.8, -0.5], 0.6)]))
}

fn window() -> Window {
    Window::new(4.0, 0.05).unwrap()
}

#[test]
fn explicit_error_matches_subtraction() {
    let cases = [(Boundary::Dirichlet, 65, [0.31, 0.62]), (Boundary::Neumann, 1105, [0.7, 0.2]), (Boundary::Periodic, 325, [0.5, 0.5])];
    for (bc, mu, z0) in cases {
        let loc = build_localized(&square(bc), &two_translates(), mu, &z0).unwrap();
        for z in [[0.0, 0.0], [1.3, -0.7], [-2.1, 0.4], [3.9, 0.0]] {
            let a = loc.error_by_subtraction(&z).unwrap();
            let b = loc.error_explicit(&z).unwrap();
            assert!((a - b).abs() < 1e-10, "{bc:?}: {a} vs {b}");
        }
    }
}

#[test]
fn single_translate_at_origin_is_one_plus_error() {
    let loc = build_localized(&square(Boundary::Neumann), &j0(), 1105, &[0.23, 0.41]).unwrap();
    let v = loc.rescaled().unwrap().value_at(&[0.0, 0.0]);
    assert!((loc.kernel_part(&[0.0, 0.0]) - 1.0).abs() < 1e-14);
    assert!((v - 1.0 - loc.error_by_subtraction(&[0.0, 0.0]).unwrap()).abs() < 1e-13);
}

#[test]
fn iso_coefficients_are_antisymmetric() {
    let spec = BilliardSpec::new(BilliardKind::IsoTriangle, Boundary::Dirichlet).unwrap();
    let loc = build_localized(&spec, &two_translates(), 1105, &[0.6, 0.2]).unwrap();
    let c = |n: &[i64]| match loc.expansion.terms.iter().find(|t| t.index == n).unwrap().coeff {
        Coefficient::Scalar(x) => x,
        _ => panic!("scalar coefficient expected"),
    };
    for t in &loc.expansion.terms {
        let swapped = [t.index[1], t.index[0]];
        assert!((c(&t.index) + c(&swapped)).abs() < 1e-14);
    }
}

#[test]
fn excluded_shells_are_rejected() {
    assert!(build_localized(&square(Boundary::Dirichlet), &j0(), 25, &[0.5, 0.5]).is_err());
    let equi = BilliardSpec::new(BilliardKind::EquiTriangle, Boundary::Dirichlet).unwrap();
    assert!(build_localized(&equi, &j0(), 12, &[0.5, 0.3]).is_err());
}

#[test]
fn error_field_shrinks_with_the_shell() {
    let spec = square(Boundary::Dirichlet);
    let z0 = [0.37, 0.58];
    let sup = |mu: i64| {
        let loc = build_localized(&spec, &two_translates(), mu, &z0).unwrap();
        let ax = window().axis();
        let mut m: f64 = 0.0;
        for y in ax.iter().step_by(4) {
            for x in ax.iter().step_by(4) {
                if x * x + y * y <= 16.0 {
                    m = m.max(loc.error_by_subtraction(&[*x, *y]).unwrap().abs());
                }
            }
        }
        m
    };
    assert!(sup(32045) < sup(65));
}

#[test]
fn self_comparison_and_order_monotonicity() {
    let spec = square(Boundary::Neumann);
    let loc = build_localized(&spec, &j0(), 65, &[0.3, 0.4]).unwrap();
    let r = loc.rescaled().unwrap();
    assert!(field_distance(&r, &r, &window(), 2).unwrap() == 0.0);
    let e0 = localization_error(&loc.expansion, &loc.z0, &j0(), &window(), 0).unwrap();
    let e1 = localization_error(&loc.expansion, &loc.z0, &j0(), &window(), 1).unwrap();
    let e2 = localization_error(&loc.expansion, &loc.z0, &j0(), &window(), 2).unwrap();
    assert!(e0 <= e1 && e1 <= e2);
}

#[test]
fn admissible_fraction_grows_from_65_to_32045_at_quarter() {
    let spec = square(Boundary::Neumann);
    let frac = |mu: i64| {
        let lam = spec.lambda_of_mu(mu).unwrap();
        let base = base_points(&spec, 40, 40, 4.0 / lam.sqrt()).unwrap();
        admissible_fraction(&error_sweep(&spec, &j0(), mu, &base, &window(), 1).unwrap(), 0.25).unwrap()
    };
    assert!(frac(32045) > frac(65));
}

struct MeanSquareRun {
    points: Vec<(f64, f64)>,
    lipschitz: Vec<f64>,
}

fn mean_square_run() -> MeanSquareRun {
    let spec = square(Boundary::Neumann);
    let mut points = Vec::new();
    let mut lipschitz = Vec::new();
    for mu in [5i64, 65, 1105, 32045, 1185665] {
        let lam = spec.lambda_of_mu(mu).unwrap();
        let base = base_points(&spec, 8, 8, 4.0 / lam.sqrt()).unwrap();
        let ms = error_mean_square(&spec, &j0(), mu, &base, &window()).unwrap();
        points.push((lam.ln(), ms.ln()));
        let loc = build_localized(&spec, &j0(), mu, &base[27]).unwrap();
        let r = loc.rescaled().unwrap();
        let mut lip: f64 = 0.0;
        for y in window().axis().iter().step_by(8) {
            for x in window().axis().iter().step_by(8) {
                if x * x + y * y <= 16.0 {
                    let g = r.gradient(&[*x, *y]);
                    let k = loc.kernel.gradient(&[*x, *y]);
                    lip = lip.max(((g[0] - k[0]).powi(2) + (g[1] - k[1]).powi(2)).sqrt());
                }
            }
        }
        lipschitz.push(lip);
    }
    MeanSquareRun { points, lipschitz }
}

#[test]
fn mean_square_error_decreases_and_error_stays_lipschitz() {
    let run = mean_square_run();
    assert!(run.points.windows(2).all(|w| w[1].1 < w[0].1), "{:?}", run.points);
    assert!(run.lipschitz.iter().all(|&l| l <= 10.0 * run.lipschitz[0]), "{:?}", run.lipschitz);
}

#[test]
fn mean_square_error_log_slope_is_at_most_minus_quarter() {
    let p = mean_square_run().points;
    let n = p.len() as f64;
    let (mx, my) = (p.iter().map(|q| q.0).sum::<f64>() / n, p.iter().map(|q| q.1).sum::<f64>() / n);
    let slope = p.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum::<f64>() / p.iter().map(|q| (q.0 - mx).powi(2)).sum::<f64>();
    assert!(slope <= -0.25, "log-log slope {slope}");
}

fn symmetric_pair() -> WaveSpec {
    let row = SymmetryRow::new(SymmetryTable::FixedPoint, PolygonKind::Rectangle, SymmetryBc::Dirichlet);
    symmetrize_row(&two_translates(), &row).unwrap()
}

#[test]
fn fixed_point_parity_symmetry_and_trend() {
    let spec = square(Boundary::Dirichlet);
    let target = symmetric_pair();
    let half = [Ratio::new(1, 2), Ratio::new(1, 2)];
    let samples = WindowSamples::new(&target, window());
    let row = SymmetryRow::new(SymmetryTable::FixedPoint, PolygonKind::Rectangle, SymmetryBc::Dirichlet);
    let mut last = f64::INFINITY;
    for mu in [65i64, 1105, 32045] {
        let fp = build_fixed_point(&spec, &target, mu, &half).unwrap();
        assert_eq!(fp.s, 2);
        assert_eq!(fp.expansion.mu, Some(4 * mu));
        let r = fp.rescaled().unwrap();
        assert!(point_parity_residual(&r, &window(), true) <= 1e-10);
        let scale = r.value_at(&[0.3, 0.4]).abs().max(1e-3);
        for z in [[0.3, 0.4], [1.1, -0.7], [-2.0, 0.5]] {
            for g in row.reflections() {
                let gz = g.apply2(z);
                assert!((r.value_at(&gz) + r.value_at(&z)).abs() <= 1e-10 * scale.max(1.0));
            }
        }
        let e = samples.error_trig(&r, 0).unwrap();
        assert!(e < last, "mu={mu}: {e}");
        last = e;
    }
}

#[test]
fn fixed_point_requires_symmetric_target() {
    let spec = square(Boundary::Dirichlet);
    let half = [Ratio::new(1, 2), Ratio::new(1, 2)];
    assert!(build_fixed_point(&spec, &two_translates(), 65, &half).is_err());
}

#[test]
fn fixed_point_at_a_corner_is_the_group_average_of_localization() {
    let spec = square(Boundary::Dirichlet);
    let target = symmetric_pair();
    let corner = [Ratio::new(0, 1), Ratio::new(1, 1)];
    let fp = build_fixed_point(&spec, &target, 1105, &corner).unwrap();
    assert_eq!(fp.s, 1);
    let loc = build_localized(&spec, &target, 1105, &[0.0, 1.0]).unwrap();
    let (a, b) = (fp.rescaled().unwrap(), loc.rescaled().unwrap());
    for z in [[0.3, 0.2], [-1.0, 2.0], [2.5, -1.5]] {
        assert!((4.0 * a.value_at(&z) - b.value_at(&z)).abs() < 1e-10);
    }
}

#[test]
fn dirichlet_approximation_examples() {
    let a = dirichlet_approx(&[0.5], 10).unwrap();
    assert_eq!((a.r, a.s), (vec![1], 2));
    let b = dirichlet_approx(&[2f64.sqrt() - 1.0], 100).unwrap();
    assert!([2i64, 5, 12, 29, 70].contains(&b.s), "{b:?}");
    assert!(b.error < 0.5 / (b.s * b.s) as f64);
    assert!(b.error < b.bound);
    let c = dirichlet_approx(&[1.0 / 3.0, 1.0 / 7.0], 30).unwrap();
    assert!(c.error < c.bound && c.error <= 1e-15, "{c:?}");
    assert_eq!((c.r, c.s), (vec![7, 3], 21));
}

#[test]
fn unfolding_the_four_cell_polygon() {
    let d = CellDecomposition::four_cell_equilateral(Boundary::Dirichlet).unwrap();
    let u = d.unfold([0.5, 0.3]).unwrap();
    assert_eq!(u.cell, 0);
    assert!(u.linear.distance(&billiard_lens::waves::Isometry::identity(2)) < 1e-15);
    let s3 = 3f64.sqrt();
    let refl = billiard_lens::waves::Isometry::line_reflection(Some(-s3));
    let z = d.cell_point(1, [0.6, 0.2]);
    let u = d.unfold(z).unwrap();
    assert_eq!((u.cell, u.parity), (1, 1));
    assert!(u.linear.distance(&refl) < 1e-12);
    for j in 0..4 {
        for w in [[0.5, 0.3], [0.2, 0.1], [0.7, 0.4]] {
            let u = d.unfold(d.cell_point(j, w)).unwrap();
            assert_eq!(u.cell, j);
            assert!((u.local[0] - w[0]).abs() < 1e-12 && (u.local[1] - w[1]).abs() < 1e-12);
        }
    }
    assert_eq!(d.shared_edges().len(), 3);
    assert!(d.unfold([3.0, 0.1]).is_err());
}

#[test]
fn glued_fields_are_continuous_across_lattice_lines() {
    for bc in [Boundary::Dirichlet, Boundary::Neumann] {
        let d = CellDecomposition::four_cell_equilateral(bc).unwrap();
        let loc = build_localized(&d.base, &two_translates(), 53599, &[0.4, 0.3]).unwrap();
        let g = GluedField::new(d, &loc.expansion).unwrap();
        let (jump, normal) = g.gluing_residuals(100).unwrap();
        assert!(jump <= 1e-8 && normal <= 1e-6, "{bc:?}: {jump} {normal}");
    }
}

#[test]
fn fixed_gluing_needs_lattice_symmetry() {
    let d = CellDecomposition::four_cell_equilateral(Boundary::Dirichlet).unwrap();
    let z0 = d.cell_point(2, [0.5, 0.3]);
    let r = build_on_lattice_polygon(&d, &two_translates(), 1729, z0, GluingMode::Fixed, &window(), 0);
    assert!(r.is_err());
    let row = SymmetryRow::new(SymmetryTable::Lattice, PolygonKind::Equi, SymmetryBc::Dirichlet);
    let sym = symmetrize_row(&two_translates(), &row).unwrap();
    assert!(check_symmetry(&sym, &row, 64).unwrap() < 1e-10);
    let ok = build_on_lattice_polygon(&d, &sym, 1729, z0, GluingMode::Fixed, &window(), 0).unwrap();
    assert_eq!(ok.pieces.len(), 1);
    assert!(ok.best_error().is_finite());
}

#[test]
fn job_report_round_trips() {
    let job: LocalizationJob = serde_json::from_str(
        r#"{"spec":{"shape":"rectangle","sides":[{"rational":{"num":1,"den":1}}],"bc":"neumann"},
            "target":{"kind":"translates","d":2,"translates":[{"center":[0.0,0.0],"coeff":1.0}]},
            "mus":[65],"z0_grid":{"nx":4,"ny":4},"window_R":4.0,"k":1,"epsilon":0.9}"#,
    )
    .unwrap();
    let r = run_job(&job).unwrap();
    assert_eq!(r.shells.len(), 1);
    assert_eq!(r.shells[0].base_points, 16);
    let s = serde_json::to_string(&r).unwrap();
    assert_eq!(s, serde_json::to_string(&run_job(&job).unwrap()).unwrap());
}

proptest! {
    #[test]
    fn admissible_fraction_is_monotone(errors in prop::collection::vec(0.0f64..2.0, 1..50), a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let f = |e| admissible_fraction(&errors, e).unwrap();
        prop_assert!(f(lo) <= f(hi));
        prop_assert_eq!(f(f64::INFINITY), 1.0);
    }

    #[test]
    fn summary_quantiles_are_ordered(errors in prop::collection::vec(0.0f64..2.0, 1..50)) {
        let s = ErrorSummary::from_errors(&errors).unwrap();
        prop_assert!(s.min <= s.best_decile && s.best_decile <= s.q1 && s.q1 <= s.median);
        prop_assert!(s.median <= s.q3 && s.q3 <= s.max);
    }

    #[test]
    fn dirichlet_approx_satisfies_its_inequality(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let r = dirichlet_approx(&[a, b], 200).unwrap();
        prop_assert!(r.error < r.bound);
        prop_assert!(r.s >= 1 && r.s <= 200);
    }
}
