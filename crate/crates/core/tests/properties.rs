use proptest::prelude::*;

use toral_rigidity::cocycle::finite_time_exponents;
use toral_rigidity::conjugacy::dyadic::DyadicOrbit;
use toral_rigidity::conjugacy::{estimate_regularity, skew_series, weierstrass, Conjugacy};
use toral_rigidity::perturbation::{torus_distance, wrap, Mode, ScalarTrig};
use toral_rigidity::toral_linear::{enumerate_periodic_points, periodic_point_count};
use toral_rigidity::{analyze, IntMatrix, PerturbedMapF64};

/// Hyperbolic elements of SL(2, ℤ) as short words in the two shears.
fn hyperbolic_sl2() -> impl Strategy<Value = [[i64; 2]; 2]> {
    prop::collection::vec(any::<bool>(), 2..6)
        .prop_map(|word| {
            word.iter().fold([[1i64, 0], [0, 1]], |m, &upper| {
                let g = if upper { [[1, 1], [0, 1]] } else { [[1, 0], [1, 1]] };
                [
                    [m[0][0] * g[0][0] + m[0][1] * g[1][0], m[0][0] * g[0][1] + m[0][1] * g[1][1]],
                    [m[1][0] * g[0][0] + m[1][1] * g[1][0], m[1][0] * g[0][1] + m[1][1] * g[1][1]],
                ]
            })
        })
        .prop_filter("hyperbolic", |m| (m[0][0] + m[1][1]).abs() > 2)
}

fn int_matrix(m: [[i64; 2]; 2]) -> IntMatrix {
    IntMatrix::from_i64(&[m[0].to_vec(), m[1].to_vec()]).unwrap()
}

fn unit_point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, d)
}

fn small_generic() -> impl Strategy<Value = PerturbedMapF64> {
    (-2i64..=2, -2i64..=2, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..6.3, 0.001f64..0.02)
        .prop_filter("nonzero mode", |(a, b, ..)| *a != 0 || *b != 0)
        .prop_filter_map("Anosov certificate", |(a, b, c0, c1, phase, eps)| {
            let mode = Mode { k: vec![a, b], c: vec![c0, c1], phase };
            PerturbedMapF64::make_generic(IntMatrix::cat_map(), vec![mode], eps).ok()
        })
}

/// tr(Lⁿ) by t_{k+1} = tr·t_k − t_{k−1}, valid for det L = 1.
fn trace_power(tr: i64, n: u32) -> i64 {
    let (mut a, mut b) = (2i64, tr);
    for _ in 0..n {
        (a, b) = (b, tr * b - a);
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenvalues_multiply_to_det_and_exponents_cancel(m in hyperbolic_sl2()) {
        let s = analyze(&int_matrix(m)).unwrap().spectral;
        let product: f64 = s.eigenvalues.iter().product();
        prop_assert!((product - 1.0).abs() < 1e-9);
        prop_assert!(s.exponents.iter().sum::<f64>().abs() < 1e-9);
        prop_assert_eq!(s.stable_count, 1);
    }

    #[test]
    fn periodic_counts_match_trace_recurrence(m in hyperbolic_sl2(), n in 1u32..4) {
        let l = int_matrix(m);
        let want = (trace_power(m[0][0] + m[1][1], n) - 2).abs();
        prop_assert_eq!(periodic_point_count(&l, n).unwrap(), want.into());
        let listed = enumerate_periodic_points(&l, n, 100_000).unwrap();
        prop_assert_eq!(listed.len() as i64, want);
    }

    #[test]
    fn derivative_matches_central_differences(f in small_generic(), x in unit_point(2)) {
        let h = 1e-6;
        let df = f.df(&x);
        for j in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (f.lift_eval(&xp), f.lift_eval(&xm));
            for i in 0..2 {
                prop_assert!(((fp[i] - fm[i]) / (2.0 * h) - df[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn inverse_undoes_the_map(f in small_generic(), x in unit_point(2)) {
        let back = f.inverse_eval(&f.eval(&x)).unwrap();
        prop_assert!(torus_distance(&back, &x) < 1e-12);
    }

    #[test]
    fn exponent_sum_tracks_log_det(f in small_generic(), x in unit_point(2)) {
        let e = finite_time_exponents(&f, &x, 200).unwrap();
        prop_assert!(e.det_residual() < 1e-10);
        prop_assert!(e.exponents[0] < 0.0 && e.exponents[1] > 0.0);
    }

    #[test]
    fn wrap_lands_in_unit_cube(x in prop::collection::vec(-1e3f64..1e3, 3)) {
        let w = wrap(&x);
        prop_assert!(w.iter().all(|&c| (0.0..1.0).contains(&c)));
        prop_assert!(torus_distance(&w, &x) < 1e-9);
    }

    #[test]
    fn dyadic_orbit_inverts(x in unit_point(2), k in 1i64..60) {
        let o = DyadicOrbit::new(&IntMatrix::cat_map(), &x);
        let there = o.point::<f64>(k);
        let back = DyadicOrbit::new(&IntMatrix::cat_map(), &there).point::<f64>(-k);
        prop_assert!(torus_distance(&back, &o.start::<f64>()) < 1e-15);
    }

    #[test]
    fn conjugacy_is_periodic_and_consistent(f in small_generic(), x in unit_point(2)) {
        let c = Conjugacy::new(&f, 1e-10).unwrap();
        let u = c.displacement(&x).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        let us = c.displacement(&shifted).unwrap();
        prop_assert!(u.iter().zip(&us).all(|(a, b)| (a - b).abs() < 1e-9));
        prop_assert!(c.forward_residual(&x).unwrap() < 1e-8);
        let round = c.reverse(&c.forward(&x).unwrap()).unwrap();
        prop_assert!(torus_distance(&round, &x) < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn regularity_ignores_affine_rescaling(scale in 1e-3f64..1e3, shift in -10.0f64..10.0, alpha in 0.3f64..0.8) {
        let n = 1 << 15;
        let g: Vec<f64> = (0..n).map(|i| weierstrass(i as f64 / n as f64, alpha, 18)).collect();
        let h: Vec<f64> = g.iter().map(|v| scale * v + shift).collect();
        let a = estimate_regularity(&g, 1.0, true, 3..=13).unwrap();
        let b = estimate_regularity(&h, 1.0, true, 3..=13).unwrap();
        prop_assert!((a.alpha - b.alpha).abs() < 1e-9);
        prop_assert_eq!(a.verdict, b.verdict);
    }

    #[test]
    fn skew_series_conjugates(x in unit_point(4)) {
        let a = IntMatrix::cat_map();
        let f = PerturbedMapF64::make_counterexample(a.clone(), a, 1, 2, ScalarTrig::cosine(2, 0), 0.01).unwrap();
        let s = skew_series::<f64>(&f, Some(40)).unwrap();
        prop_assert!(s.functional_residual(&x) < 1e-12);
        let z = s.forward(&x);
        prop_assert!(torus_distance(&s.reverse(&z), &x) < 1e-14);
    }
}
