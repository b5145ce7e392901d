use billiard_lens::billiards::{
    irrationality_partition, robin_frequency, BilliardKind, BilliardSpec, Boundary, Coefficient, EigenExpansion,
    ExpansionTerm, SideSquare,
};
use billiard_lens::field::{FnField, Jet2};
use billiard_lens::obstruction::*;
use billiard_lens::waves::{BesselTranslateSum, WaveSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn irrational_rectangle(bc: Boundary) -> BilliardSpec {
    BilliardSpec::new(
        BilliardKind::Rectangle {
            sides: vec![SideSquare::Root { radicand: 2, index: 2 }],
        },
        bc,
    )
    .unwrap()
}

fn random_two_translates(rng: &mut ChaCha8Rng) -> WaveSpec {
    let a = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
    WaveSpec::translates(BesselTranslateSum::planar(&[([0.0, 0.0], 1.0), (a, rng.random_range(0.3..1.0))]))
}

#[test]
fn jet_of_plane_wave_and_radial_bessel() {
    let f = FnField(|z: [f64; 2]| Jet2 {
        value: z[0].cos(),
        grad: [-z[0].sin(), 0.0],
        hess: [-z[0].cos(), 0.0, 0.0],
        third: [z[0].sin(), 0.0, 0.0, 0.0],
    });
    let j = jet_at(&f, [0.0, 0.0]);
    assert_eq!(j.second, vec![-1.0, 0.0, 0.0]);
    assert_eq!(j.third, vec![0.0; 4]);
    assert_eq!(j.len(), 7);
    assert_eq!(rectangle_variety_residual(&j, &[1]).unwrap(), Some(0.0));
    let b = jet_at(&WaveSpec::translates(BesselTranslateSum::radial(2)), [0.0, 0.0]);
    assert!((b.second[0] + 0.5).abs() < 1e-14 && (b.second[2] + 0.5).abs() < 1e-14);
    assert!(b.second[1].abs() < 1e-14 && b.third.iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn jets_are_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (f, g) = (random_two_translates(&mut rng), random_two_translates(&mut rng));
    let (jf, jg) = (jet_at(&f, [0.2, -0.1]), jet_at(&g, [0.2, -0.1]));
    let sum = FnField(|z: [f64; 2]| {
        let mut a = billiard_lens::field::Field2::jet(&f, z).scaled(2.0);
        a.add_scaled(&billiard_lens::field::Field2::jet(&g, z), -3.0);
        a
    });
    let js = jet_at(&sum, [0.2, -0.1]);
    for (k, v) in js.second.iter().chain(&js.third).enumerate() {
        let want = if k < 3 { 2.0 * jf.second[k] - 3.0 * jg.second[k] } else { 2.0 * jf.third[k - 3] - 3.0 * jg.third[k - 3] };
        assert!((v - want).abs() < 1e-14);
    }
}

fn irrational_localized(rng: &mut ChaCha8Rng) -> JetVector {
    let bc = if rng.random_bool(0.5) { Boundary::Dirichlet } else { Boundary::Neumann };
    let spec = irrational_rectangle(bc);
    let n = vec![rng.random_range(1..40i64), rng.random_range(1..40i64)];
    let e = EigenExpansion::new(spec.clone(), vec![ExpansionTerm { index: n, coeff: Coefficient::Scalar(1.0) }]).unwrap();
    let l = spec.side_lengths();
    let z0 = [rng.random_range(0.0..l[0]), rng.random_range(0.0..l[1])];
    let f = e.compile().unwrap().trig().unwrap().rescaled(&z0, e.lambda.sqrt());
    jet_at(&f, [0.0, 0.0])
}

#[test]
fn irrational_rectangle_jets_lie_on_the_variety() {
    let spec = irrational_rectangle(Boundary::Dirichlet);
    let part = irrationality_partition(&spec);
    assert_eq!(part, vec![vec![0], vec![1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let r = rectangle_variety_residual(&irrational_localized(&mut rng), &part[0]).unwrap().unwrap();
        assert!(r <= 1e-10, "{r}");
    }
}

#[test]
fn rational_square_mixture_is_off_the_variety() {
    let spec = BilliardSpec::unit_square(Boundary::Dirichlet);
    let terms = vec![
        ExpansionTerm { index: vec![1, 2], coeff: Coefficient::Scalar(1.0) },
        ExpansionTerm { index: vec![2, 1], coeff: Coefficient::Scalar(1.0) },
    ];
    let e = EigenExpansion::new(spec, terms).unwrap();
    let f = e.compile().unwrap().trig().unwrap().rescaled(&[0.31, 0.17], e.lambda.sqrt());
    let r = rectangle_variety_residual(&jet_at(&f, [0.0, 0.0]), &[1]).unwrap().unwrap();
    assert!(r > 1e-3, "{r}");
}

#[test]
fn variety_residuals_are_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = random_two_translates(&mut rng);
    let j = jet_at(&w, [0.0, 0.0]);
    let r = rectangle_variety_residual(&j, &[1]).unwrap().unwrap();
    for c in [1e-3, 1e3] {
        let s = JetVector { d: 2, second: j.second.iter().map(|x| c * x).collect(), third: j.third.iter().map(|x| c * x).collect() };
        let rs = rectangle_variety_residual(&s, &[1]).unwrap().unwrap();
        assert!((rs - r).abs() <= 1e-12 * r);
    }
    let zero = JetVector { d: 2, second: vec![0.0; 3], third: vec![0.0; 4] };
    assert_eq!(rectangle_variety_residual(&zero, &[1]).unwrap(), None);
    let blocks = radial_samples(planar_ray(&w, [0.0, 0.0], [1.0, 0.0]), 2.0, 3).unwrap();
    let base = disk_constraint_residual(&blocks, 2).unwrap();
    for c in [1e-3, 1e3] {
        let scaled: Vec<SampleBlock> = blocks.iter().map(|b| b.scaled(c)).collect();
        for (a, b) in disk_constraint_residual(&scaled, 2).unwrap().iter().zip(&base) {
            assert!((a - b).abs() <= 1e-9 * b.max(1e-300));
        }
    }
}

#[test]
fn rectangle_contrast_is_wide() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut eig: Vec<f64> =
        (0..20).map(|_| rectangle_variety_residual(&irrational_localized(&mut rng), &[1]).unwrap().unwrap()).collect();
    let mut waves: Vec<f64> = (0..20)
        .map(|_| rectangle_variety_residual(&jet_at(&random_two_translates(&mut rng), [0.0, 0.0]), &[1]).unwrap().unwrap())
        .collect();
    eig.sort_by(f64::total_cmp);
    waves.sort_by(f64::total_cmp);
    assert!(eig[19] <= 1e-10);
    assert!(waves[0] >= 1e2 * eig[19].max(1e-10));
    assert!(waves[10] >= 1e2 * eig[10].max(1e-16));
}

#[test]
fn shifted_bessel_blocks_vanish() {
    for d in [2usize, 3] {
        let blocks = radial_samples(shifted_bessel_profile(d, 3.7, 2), 2.0, 3).unwrap();
        for r in disk_constraint_residual(&blocks, d).unwrap() {
            assert!(r <= 1e-8, "d={d}: {r}");
        }
    }
}

#[test]
fn profile_derivatives_match_differences() {
    let f = shifted_bessel_profile(2, 0.0, 0);
    let g = shifted_bessel_profile(2, 3.7, 1);
    for h in [1e-2, 5e-3] {
        for r in [0.3, 1.1, 1.9] {
            let fd1 = (g(r + h)[0] - g(r - h)[0]) / (2.0 * h);
            let fd2 = (g(r + h)[0] - 2.0 * g(r)[0] + g(r - h)[0]) / (h * h);
            assert!((fd1 - g(r)[1]).abs() < h * h && (fd2 - g(r)[2]).abs() < h * h);
        }
    }
    // f(r) = J0(r): f' = -J1, f'' = -J0 + J1 / r
    let [v, d1, d2] = f(1.3);
    let (a, b) = (billiard_lens::special::bessel_j(0.0, 1.3), billiard_lens::special::bessel_j(1.0, 1.3));
    assert!((v - a).abs() < 1e-15 && (d1 + b).abs() < 1e-15 && (d2 + a - b / 1.3).abs() < 1e-14);
}

#[test]
fn zero_field_gives_zero_blocks() {
    let blocks = radial_samples(|_| [0.0; 3], 2.0, 3).unwrap();
    assert!(blocks.iter().all(|b| b.values.iter().all(|&v| v == 0.0)));
    assert!(disk_constraint_residual(&blocks, 2).unwrap().iter().all(|&r| r == 0.0));
}

fn random_disk_eigenfunction(d: usize, rng: &mut ChaCha8Rng) -> (EigenExpansion, Vec<f64>, f64) {
    let bc = if rng.random_bool(0.5) { Boundary::Dirichlet } else { Boundary::Neumann };
    let spec = BilliardSpec::new(BilliardKind::Disk { d }, bc).unwrap();
    let l = rng.random_range(0..6i64);
    let n = rng.random_range(3..8i64);
    let ms: Vec<i64> = if d == 2 { vec![l, -l] } else { (-l..=l).collect() };
    let terms = ms
        .iter()
        .filter(|&&m| !(d == 2 && l == 0 && m < 0))
        .map(|&m| ExpansionTerm { index: vec![l, n, m], coeff: Coefficient::Scalar(rng.random_range(-1.0..1.0)) })
        .collect();
    let e = EigenExpansion::new(spec, terms).unwrap();
    let mut dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nrm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|x| *x /= nrm);
    let r0 = rng.random_range(0.1..0.5);
    (e, dir, r0)
}

#[test]
fn disk_eigenfunctions_satisfy_the_eliminant_and_waves_do_not() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for k in 0..10 {
        let d = 2 + k % 2;
        let (e, dir, r0) = random_disk_eigenfunction(d, &mut rng);
        let f = e.compile().unwrap();
        let billiard_lens::billiards::CompiledField::Disk(field) = f else { panic!("disk field expected") };
        let ray = disk_ray(&field, &dir, r0, e.lambda, 2.0).unwrap();
        let blocks = radial_samples(ray, 2.0, 3).unwrap();
        for r in disk_constraint_residual(&blocks, d).unwrap() {
            assert!(r <= 1e-6, "eigenfunction residual {r}");
        }
    }
    for _ in 0..10 {
        let (t, l) = (rng.random_range(0.5..20.0), rng.random_range(0..6usize));
        let blocks = radial_samples(shifted_bessel_profile(2, t, l), 2.0, 3).unwrap();
        assert!(disk_constraint_residual(&blocks, 2).unwrap().iter().all(|&r| r <= 1e-6));
    }
    let generic = WaveSpec::translates(BesselTranslateSum::planar(&[([0.5, 0.8], 1.0)]));
    let blocks = radial_samples(planar_ray(&generic, [0.0, 0.0], [1.0, 0.0]), 2.0, 3).unwrap();
    assert!(disk_constraint_residual(&blocks, 2).unwrap().iter().cloned().fold(0.0, f64::max) >= 1e-3);
    for _ in 0..10 {
        let w = random_two_translates(&mut rng);
        let blocks = radial_samples(planar_ray(&w, [0.0, 0.0], [1.0, 0.0]), 2.0, 3).unwrap();
        let worst = disk_constraint_residual(&blocks, 2).unwrap().iter().cloned().fold(0.0, f64::max);
        assert!(worst >= 1e-3, "{worst}");
    }
}

#[test]
fn eliminant_equals_scaled_resultant() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let mut values = [0.0; 12];
        values.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let b = SampleBlock { values, alpha: rng.random_range(0.0..2.0), width: rng.random_range(0.2..1.0) };
        for d in [2usize, 3] {
            let q = BlockQuadratics::new(&b, d);
            let lhs = q.q_tilde();
            let rhs = 4.0 * q.a * q.a * ode_resultant(&b, d);
            let (x2, y2d) = q.eliminant_terms();
            assert!((lhs - rhs).abs() <= 1e-9 * (x2 + y2d.abs()), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn uncorrected_single_block_coefficients_do_not_vanish_on_bessel_blocks() {
    let radius = 2.0;
    let blocks = radial_samples(shifted_bessel_profile(2, 3.7, 2), radius, 1).unwrap();
    let lit = BlockQuadratics::uncorrected(&blocks[0], 2, radius);
    let ours = BlockQuadratics::new(&blocks[0], 2);
    assert_eq!((lit.a, lit.b, lit.d, lit.e, lit.f), (ours.a, ours.b, ours.d, ours.e, ours.f));
    let rel = |q: &BlockQuadratics| {
        let (x2, y2d) = q.eliminant_terms();
        (x2 - y2d).abs() / (x2 + y2d.abs())
    };
    assert!(rel(&ours) < 1e-8);
    assert!(rel(&lit) > 1e-6);
}

#[test]
fn plane_wave_fits() {
    let waves: [(f64, f64); 4] = [(0.3, 1.0), (1.1, -0.4), (2.0, 0.7), (2.7, 0.2)];
    let field = FnField(move |z: [f64; 2]| {
        let mut v = 0.0;
        for (th, c) in waves {
            v += c * (th.cos() * z[0] + th.sin() * z[1] + 0.3).cos();
        }
        Jet2 { value: v, ..Jet2::default() }
    });
    let grid = FitGrid::sample(&field, 4.0, 0.2).unwrap();
    let angles: Vec<f64> = waves.iter().map(|w| w.0).collect();
    let fit = plane_wave_distance(&grid, 4, 0, 1, Some(&angles)).unwrap();
    assert!(fit.residual <= 1e-10, "{}", fit.residual);
}

#[test]
fn robin_eigenfunctions_lie_in_an_eight_wave_span() {
    let sigma = 0.3;
    let (m, n) = (7usize, 4usize);
    let e = billiard_lens::billiards::robin_eigenfunction(sigma, m, n, [0.8, -0.5]).unwrap();
    let f = e.compile().unwrap().trig().unwrap().rescaled(&[0.41, 0.33], e.lambda.sqrt());
    let grid = FitGrid::sample(&f, 4.0, 0.2).unwrap();
    let (km, kn) = (robin_frequency(sigma, m).unwrap(), robin_frequency(sigma, n).unwrap());
    let warm: Vec<f64> =
        [(km, kn), (km, -kn), (kn, km), (kn, -km), (-km, kn), (-km, -kn), (-kn, km), (-kn, -km)].iter().map(|(a, b)| b.atan2(*a)).collect();
    let fit = plane_wave_distance(&grid, 8, 0, 1, Some(&warm)).unwrap();
    assert!(fit.residual <= 1e-8, "{}", fit.residual);
}

#[test]
fn reports_carry_verdicts() {
    let r = ObstructionReport::new(ObstructionTest::RectJet, 1e-14, 1e-10);
    assert_eq!(r.verdict, Verdict::OnVariety);
    let s = serde_json::to_string(&ObstructionReport::new(ObstructionTest::DiskRadial, 0.5, 1e-6)).unwrap();
    assert!(s.contains("\"test\":\"disk-radial\"") && s.contains("\"verdict\":\"off-variety\""));
}

/// Best residual of an independent multistart least-squares run (60 starts).
const TWO_TRANSLATE_FLOOR: f64 = 7.779443219513203e-9;

#[test]
fn two_translate_target_stays_above_the_multistart_floor() {
    let w = WaveSpec::translates(BesselTranslateSum::planar(&[([0.0, 0.0], 1.0), ([1.2, 0.4], 0.7)]));
    let grid = FitGrid::sample(&w, 4.0, 0.2).unwrap();
    assert_eq!(grid.points.len(), 1257);
    let fit = plane_wave_distance(&grid, 8, 50, 11, None).unwrap();
    assert!(fit.residual >= TWO_TRANSLATE_FLOOR, "{}", fit.residual);
}
