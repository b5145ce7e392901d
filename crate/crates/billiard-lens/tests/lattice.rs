use billiard_lens::lattice::*;
use num_rational::Ratio;
use billiard_lens::lattice::Strategy;
use proptest::prelude::{prop_assert, prop_assert_eq, prop_assume, proptest};

/// Star discrepancies of the circle shells, from an independent numpy computation.
const DISCREPANCY: [(i64, f64); 6] = [
    (1, 0.25),
    (5, 0.07379180882521663),
    (65, 0.04270828791971726),
    (1105, 0.034968722731032686),
    (32045, 0.014325634285177635),
    (1185665, 0.01147890592955092),
];
/// Discrepancy-greedy picks on x^2 + 3y^2 (scipy arclength oracle).
const GREEDY_EQUI: [(i64, f64); 3] = [(1, 0.5), (3, 0.2500000000000001), (4, 0.184050493566982)];
const GREEDY_EQUI_MULTIPLES_OF_FOUR: [i64; 3] = [4, 12, 28];

fn brute_force_r2(n: i64) -> u64 {
    let r = (n as f64).sqrt() as i64 + 1;
    let mut c = 0;
    for a in -r..=r {
        for b in -r..=r {
            if a * a + b * b == n {
                c += 1;
            }
        }
    }
    c
}

#[test]
fn shell_examples() {
    let c = QuadraticForm::circle();
    let s5 = enumerate_shell(&c, 5).unwrap();
    let mut pts = s5.points.clone();
    pts.sort();
    let want = vec![vec![-2, -1], vec![-2, 1], vec![-1, -2], vec![-1, 2], vec![1, -2], vec![1, 2], vec![2, -1], vec![2, 1]];
    assert_eq!(pts, want);
    assert_eq!(s5.points, want, "enumeration order is lexicographic");
    assert_eq!(s5.points_dirichlet(), vec![vec![1, 2], vec![2, 1]]);
    let s0 = enumerate_shell(&c, 0).unwrap();
    assert_eq!(s0.points, vec![vec![0, 0]]);
    assert!(s0.points_dirichlet().is_empty());
    assert_eq!(enumerate_shell(&c, 25).unwrap().len(), 12);
    assert_eq!(representation_count(5), 8);
    assert_eq!(representation_count(3), 0);
    assert_eq!(representation_count(32045), 64);
    assert!(enumerate_shell(&c, -1).is_err());
}

#[test]
fn representation_count_matches_enumeration_up_to_ten_thousand() {
    let c = QuadraticForm::circle();
    let mut total = 0;
    for n in 0..=10_000u64 {
        let r = representation_count(n);
        assert_eq!(r as usize, enumerate_shell(&c, n as i64).unwrap().len(), "n = {n}");
        total += r;
    }
    assert_eq!(total, 31417);
    for n in [0, 1, 2, 25, 50, 65, 325, 1105] {
        assert_eq!(representation_count(n as u64), brute_force_r2(n));
    }
}

#[test]
fn integerized_forms_agree_with_rational_values() {
    let f = QuadraticForm::rectangle(&[Ratio::new(2, 3), Ratio::new(5, 7)]).unwrap();
    for n in [[1i64, 2, 3], [0, -4, 1], [7, 7, -2]] {
        let q = f.eval(&n).unwrap();
        assert_eq!(Ratio::from_integer(f.eval_int(&n).unwrap()), q * f.scale());
    }
    assert!(QuadraticForm::new(vec![Ratio::new(1, 1), Ratio::new(-1, 2)]).is_err());
    assert!(QuadraticForm::new(vec![Ratio::new(1, 1)]).is_err());
}

#[test]
fn overflowing_shells_are_rejected() {
    let f = QuadraticForm::integer(&[1, 1]).unwrap();
    assert!(matches!(enumerate_shell(&f, i64::MAX), Err(billiard_lens::error::Error::ShellTooLarge { .. })));
}

#[test]
fn prime_product_sequence() {
    let c = QuadraticForm::circle();
    let seq = equidistributed_sequence(&c, 5, Strategy::PrimeProducts, ShellFilter::default()).unwrap();
    assert_eq!(seq, vec![5, 65, 1105, 32045, 1185665]);
    assert_eq!(equidistributed_sequence(&c, 1, Strategy::PrimeProducts, ShellFilter::default()).unwrap(), vec![5]);
    assert!(equidistributed_sequence(&c, 0, Strategy::PrimeProducts, ShellFilter::default()).is_err());
}

#[test]
fn greedy_sequence_on_the_equilateral_form() {
    let f = QuadraticForm::integer(&[1, 3]).unwrap();
    let seq = equidistributed_sequence(&f, 3, Strategy::greedy(), ShellFilter::default()).unwrap();
    assert_eq!(seq, GREEDY_EQUI.map(|p| p.0).to_vec());
    for (mu, d) in GREEDY_EQUI {
        let got = angular_discrepancy(&enumerate_shell(&f, mu).unwrap()).unwrap();
        assert!((got - d).abs() <= 1e-9, "{mu}: {got} vs {d}");
    }
    let filter = ShellFilter { multiple_of: 4, ..ShellFilter::default() };
    let seq4 = equidistributed_sequence(&f, 3, Strategy::greedy(), filter).unwrap();
    assert_eq!(seq4, GREEDY_EQUI_MULTIPLES_OF_FOUR.to_vec());
    let tiny = Strategy::DiscrepancyGreedy { slack: 0.25, window: 3 };
    assert!(matches!(
        equidistributed_sequence(&f, 5, tiny, ShellFilter::default()),
        Err(billiard_lens::error::Error::Exhausted { .. })
    ));
}

#[test]
fn kernel_restriction_filters_squares() {
    let r = ShellFilter::kernel_restriction();
    assert!(!r.admits(25) && !r.admits(75) && !r.admits(0));
    assert!(r.admits(65) && r.admits(1105));
}

#[test]
fn circle_discrepancies() {
    let c = QuadraticForm::circle();
    let mut last = f64::INFINITY;
    for (i, (mu, d)) in DISCREPANCY.iter().enumerate() {
        let got = angular_discrepancy(&enumerate_shell(&c, *mu).unwrap()).unwrap();
        assert!((got - d).abs() <= 1e-12, "{mu}: {got} vs {d}");
        if i >= 1 {
            assert!(got <= last);
        }
        last = got;
    }
    let one = LatticeShell { form: c.clone(), mu: 1, points: vec![vec![1, 0]] };
    let d = angular_discrepancy(&one).unwrap();
    assert!((1.0 - 1e-12..=1.0).contains(&d));
    assert!(angular_discrepancy(&enumerate_shell(&c, 3).unwrap()).is_err());
}

#[test]
fn shell_averages() {
    let s = enumerate_shell(&QuadraticForm::circle(), 5).unwrap();
    let r5 = 5f64.sqrt();
    assert_eq!(shell_average(&s, r5, |_| 1.0).unwrap(), 1.0);
    assert!((shell_average(&s, r5, |x| x[0] * x[0]).unwrap() - 0.5).abs() < 1e-15);
    let w = [0.7, -1.9];
    let k = billiard_lens::kernel::reproducing_kernel(&s, billiard_lens::waves::PolygonKind::Rectangle, &w).unwrap();
    let avg = shell_average(&s, r5, |x| (x[0] * w[0] + x[1] * w[1]).cos()).unwrap();
    assert!((k - avg).abs() < 1e-15);
}

#[test]
fn shell_json_shape() {
    let s = enumerate_shell(&QuadraticForm::circle(), 5).unwrap();
    let v: serde_json::Value = serde_json::to_value(&s).unwrap();
    assert_eq!(v["form"]["d"], 2);
    assert_eq!(v["form"]["coeffs"], serde_json::json!([[1, 1], [1, 1]]));
    assert_eq!(v["mu"], 5);
    assert_eq!(v["points"][0], serde_json::json!([-2, -1]));
    let back: LatticeShell = serde_json::from_value(v).unwrap();
    assert_eq!(back, s);
}

#[test]
fn growth_ratio_is_the_point_count_in_the_plane() {
    let s = enumerate_shell(&QuadraticForm::circle(), 65).unwrap();
    assert_eq!(shell_growth_ratio(&s), 16.0);
}

proptest! {
    #[test]
    fn shells_are_sign_closed_and_exact(a in 1i64..6, b in 1i64..6, mu in 0i64..400) {
        let f = QuadraticForm::integer(&[a, b]).unwrap();
        let s = enumerate_shell(&f, mu).unwrap();
        for n in &s.points {
            prop_assert_eq!(f.eval_int(n).unwrap(), mu);
            for flip in [[-1, 1], [1, -1]] {
                let m = vec![n[0] * flip[0], n[1] * flip[1]];
                prop_assert!(s.points.contains(&m));
            }
            let swapped = vec![n[1], n[0]];
            if a == b {
                prop_assert!(s.points.contains(&swapped));
            }
        }
        let d = s.points_dirichlet();
        let nn = s.points_neumann();
        prop_assert!(d.iter().all(|p| nn.contains(p)));
        prop_assert!(nn.iter().all(|p| s.points.contains(p)));
    }

    #[test]
    fn discrepancy_ignores_order_and_quarter_turns(mu in 1i64..3000) {
        let c = QuadraticForm::circle();
        let s = enumerate_shell(&c, mu).unwrap();
        prop_assume!(!s.is_empty());
        let d = angular_discrepancy(&s).unwrap();
        let mut rev = s.clone();
        rev.points.reverse();
        prop_assert_eq!(angular_discrepancy(&rev).unwrap(), d);
        let mut rot = s.clone();
        rot.points = s.points.iter().map(|n| vec![-n[1], n[0]]).collect();
        prop_assert!((angular_discrepancy(&rot).unwrap() - d).abs() <= 1e-12);
    }
}
