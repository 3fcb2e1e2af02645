//! End-to-end verdicts on the standard instances, plus the skew products with
//! a slow fiber (n > m) where η is genuinely rough.

use toral_rigidity::conjugacy::{
    estimate_regularity, rigidity_verdict, sample_line, skew_series, LipschitzVerdict,
    RegularityEstimate, RigidityClass,
};
use toral_rigidity::livsic::{obstruction_test, CocycleObservable, ObservableKind, DEFAULT_TAU_OBS};
use toral_rigidity::periodic::{
    compare_with_linear, continue_orbits, periodic_data, ContinuationOptions, DataVerdict,
    TAU_PD_SKEW,
};
use toral_rigidity::perturbation::ScalarTrig;
use toral_rigidity::toral_linear::is_irreducible_over_q;
use toral_rigidity::{IntMatrix, PerturbedMapF64};

fn skew(n: u32, m: u32, eps: f64) -> PerturbedMapF64 {
    let a = IntMatrix::cat_map();
    PerturbedMapF64::make_counterexample(a.clone(), a, n, m, ScalarTrig::cosine(2, 0), eps).unwrap()
}

fn eta_regularity(f: &PerturbedMapF64) -> RegularityEstimate {
    let s = skew_series::<f64>(f, None).unwrap();
    let g = |x: &[f64]| s.eta(x);
    let samples = sample_line(&g, &[0.1234, 0.0], &[1.0, 0.0], 1 << 16);
    estimate_regularity(&samples, 1.0, true, 3..=14).unwrap()
}

fn verdict(f: &PerturbedMapF64, regularity: Option<&RegularityEstimate>) -> RigidityClass {
    let cont = continue_orbits(f, 2, &ContinuationOptions::default()).unwrap();
    let rep = periodic_data(&cont.records, TAU_PD_SKEW).unwrap();
    assert_eq!(rep.verdict, DataVerdict::Constant);
    let d = f.dim();
    let k = f.analysis().spectral.stable_count;
    let lam = f.analysis().spectral.exponents[k];
    let g = CocycleObservable::new(f, ObservableKind::UnstableFlag(1), lam).unwrap();
    let obs = obstruction_test(&g, &cont.records, DEFAULT_TAU_OBS).unwrap();
    let lm = compare_with_linear(&rep, &f.analysis().spectral);
    let irr = is_irreducible_over_q(&f.linear_part().char_poly()).unwrap().is_irreducible();
    assert_eq!(irr, d == 2);
    rigidity_verdict(&rep, &lm, irr, Some(&obs), regularity).class
}

/// η is Hölder with exponent m·log λ / (n·log μ) when that is below one.
fn predicted(n: u32, m: u32) -> f64 {
    (m as f64 / n as f64).min(1.0)
}

#[test]
fn linear_cat_is_rigid_expected() {
    let f = PerturbedMapF64::linear(IntMatrix::cat_map()).unwrap();
    assert_eq!(verdict(&f, None), RigidityClass::RigidExpected);
}

#[test]
fn fast_fiber_gives_smooth_eta() {
    let f = skew(1, 2, 0.01);
    let r = eta_regularity(&f);
    assert!(r.alpha > 0.95, "{r:?}");
    assert_eq!(r.verdict, LipschitzVerdict::Lipschitz);
    assert_eq!(verdict(&f, Some(&r)), RigidityClass::Inconclusive);
}

#[test]
fn slow_fiber_half_exponent() {
    let r = eta_regularity(&skew(2, 1, 0.01));
    assert!((r.alpha - predicted(2, 1)).abs() < 0.05, "{r:?}");
    assert_ne!(r.verdict, LipschitzVerdict::Lipschitz);
}

#[test]
fn slow_fiber_third_exponent_is_counterexample() {
    // ε = 0.005 keeps the derivative of f^{-1} bounded for A³.
    let f = skew(3, 1, 0.005);
    let r = eta_regularity(&f);
    assert!((r.alpha - predicted(3, 1)).abs() < 0.05, "{r:?}");
    assert_eq!(r.verdict, LipschitzVerdict::NotLipschitz);
    assert_eq!(verdict(&f, Some(&r)), RigidityClass::CounterexampleRegime);
}
