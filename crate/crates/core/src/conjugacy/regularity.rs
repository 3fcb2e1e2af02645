//! Hölder exponent from the sup-oscillation structure function
//! `S(δ) = sup_{|s−t|≤δ} |g(s) − g(t)|` over dyadic `δ = 2^{−j}`, and the
//! rigidity classification that consumes it.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use super::ConjugacyError;
use crate::livsic::ObstructionReport;
use crate::periodic::{DataVerdict, LinearMatch, PeriodicDataReport};
use crate::scalar::Real;

pub const MIN_SAMPLES: usize = 1 << 14;
pub const MIN_SCALES: usize = 6;
/// Per-octave growth of `S(δ)/δ` that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1.5;
pub const DIVERGENCE_OCTAVES: usize = 4;
/// Per-octave growth of `S(δ)/δ` still counted as bounded.
pub const BOUNDED_FACTOR: f64 = 1.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LipschitzVerdict {
    Lipschitz,
    NotLipschitz,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleRow {
    pub j: u32,
    pub delta: f64,
    pub oscillation: f64,
    pub quotient: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityEstimate {
    /// Fitted slope clamped to (0, 1].
    pub alpha: f64,
    pub alpha_raw: f64,
    pub std_error: f64,
    /// 95% band `α̂ ± 1.96·SE` on the raw slope.
    pub ci: (f64, f64),
    /// RMS residual of the log2-log2 fit.
    pub fit_residual: f64,
    pub scales: Vec<ScaleRow>,
    pub samples: usize,
    pub verdict: LipschitzVerdict,
}

impl RegularityEstimate {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,delta,S,S_over_delta\n");
        for r in &self.scales {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e}\n",
                r.j, r.delta, r.oscillation, r.quotient
            ));
        }
        s
    }
}

/// Largest `max − min` over every window of `w + 1` consecutive samples.
fn oscillation<T: Real>(g: &[T], w: usize, periodic: bool) -> T {
    let n = g.len();
    let len = if periodic { n + w } else { n };
    let at = |i: usize| g[i % n];
    let mut hi: VecDeque<usize> = VecDeque::new();
    let mut lo: VecDeque<usize> = VecDeque::new();
    let mut best = T::zero();
    for i in 0..len {
        let v = at(i);
        while hi.back().is_some_and(|&k| at(k) <= v) {
            hi.pop_back();
        }
        hi.push_back(i);
        while lo.back().is_some_and(|&k| at(k) >= v) {
            lo.pop_back();
        }
        lo.push_back(i);
        while hi.front().is_some_and(|&k| k + w < i) {
            hi.pop_front();
        }
        while lo.front().is_some_and(|&k| k + w < i) {
            lo.pop_front();
        }
        if i >= w {
            best = best.max(at(hi[0]) - at(lo[0]));
        }
    }
    best
}

/// Regularity of samples `g_i = g(i·span/n)` (`periodic`: the segment closes
/// up, as for a coordinate circle) over the scales `2^{−j}`, `j ∈ scales`.
pub fn estimate_regularity<T: Real>(
    samples: &[T],
    span: f64,
    periodic: bool,
    scales: std::ops::RangeInclusive<u32>,
) -> Result<RegularityEstimate, ConjugacyError> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(ConjugacyError::InsufficientScales {
            need: MIN_SCALES,
            have: 0,
        });
    }
    let spacing = span / if periodic { n as f64 } else { (n - 1) as f64 };
    let mut rows = Vec::new();
    for j in scales {
        let delta = 2f64.powi(-(j as i32));
        let w = (delta / spacing).round() as usize;
        if w == 0 || w >= n {
            continue;
        }
        // Use the realized window length so that g(x) = x is exact.
        let realized = w as f64 * spacing;
        let osc = oscillation(samples, w, periodic).to_f64_lossy();
        rows.push(ScaleRow {
            j,
            delta: realized,
            oscillation: osc,
            quotient: osc / realized,
        });
    }
    if rows.len() < MIN_SCALES || rows.iter().any(|r| !(r.oscillation > 0.0)) {
        return Err(ConjugacyError::InsufficientScales {
            need: MIN_SCALES,
            have: rows.iter().filter(|r| r.oscillation > 0.0).count(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.delta.log2()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.oscillation.log2()).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let icpt = ybar - slope * xbar;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - icpt - slope * x).powi(2))
        .sum();
    let se = (ss / (m - 2.0) / sxx).sqrt();

    let q: Vec<f64> = rows.iter().map(|r| r.quotient).collect();
    let steps: Vec<f64> = q.windows(2).map(|w| w[1] / w[0]).collect();
    let last = |k: usize| &steps[steps.len().saturating_sub(k)..];
    let verdict = if steps.len() >= 2 && last(2).iter().all(|&s| s <= BOUNDED_FACTOR) {
        LipschitzVerdict::Lipschitz
    } else if steps.len() >= DIVERGENCE_OCTAVES && {
        let tail = last(DIVERGENCE_OCTAVES);
        tail.iter().all(|&s| s >= 1.0)
            && tail.iter().product::<f64>() >= DIVERGENCE_FACTOR.powi(DIVERGENCE_OCTAVES as i32)
    } {
        LipschitzVerdict::NotLipschitz
    } else {
        LipschitzVerdict::Indeterminate
    };

    Ok(RegularityEstimate {
        alpha: slope.clamp(f64::MIN_POSITIVE, 1.0),
        alpha_raw: slope,
        std_error: se,
        ci: (slope - 1.96 * se, slope + 1.96 * se),
        fit_residual: (ss / m).sqrt(),
        scales: rows,
        samples: n,
        verdict,
    })
}

/// `g(x₀ + (i/count)·v)` for `i < count`.
pub fn sample_line<T: Real>(
    g: &(dyn Fn(&[T]) -> T + Sync),
    x0: &[T],
    v: &[T],
    count: usize,
) -> Vec<T> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let t = T::from_usize_lossy(i) / T::from_usize_lossy(count);
            let p: Vec<T> = x0.iter().zip(v).map(|(&a, &b)| a + t * b).collect();
            g(&p)
        })
        .collect()
}

/// `Σ_{k=0}^{k_max} 2^{−αk} cos(2π·2^k x)`, Hölder exponent `α`.
pub fn weierstrass(x: f64, alpha: f64, k_max: u32) -> f64 {
    (0..=k_max)
        .map(|k| 2f64.powf(-alpha * k as f64) * (std::f64::consts::TAU * 2f64.powi(k as i32) * x).cos())
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RigidityClass {
    RigidExpected,
    CounterexampleRegime,
    Obstructed,
    /// Constant data without either regime's full set of hypotheses.
    Inconclusive,
}

/// `α̂` below this counts as measurably non-smooth.
pub const ROUGH_ALPHA: f64 = 0.95;

#[derive(Clone, Debug, Serialize)]
pub struct RigidityVerdict {
    pub class: RigidityClass,
    pub evidence: Vec<String>,
}

pub fn rigidity_verdict(
    periodic: &PeriodicDataReport,
    linear: &LinearMatch,
    irreducible: bool,
    obstruction: Option<&ObstructionReport>,
    regularity: Option<&RegularityEstimate>,
) -> RigidityVerdict {
    let mut ev = vec![format!(
        "periodic_data: {:?}, max deviation {:.3e} over {} orbits up to period {} (tau_pd {:.0e})",
        periodic.verdict, periodic.max_deviation, periodic.orbit_count, periodic.max_period, periodic.tolerance
    )];
    if let Some(o) = obstruction {
        ev.push(format!(
            "obstruction_test[{}]: {}, max |average| {:.3e} (tau_obs {:.0e})",
            o.observable,
            if o.pass { "PASS" } else { "FAIL" },
            o.max_abs_average,
            o.tolerance
        ));
    }
    ev.push(format!("compare_with_linear: {linear:?}"));
    ev.push(format!("is_irreducible_over_q: {irreducible}"));
    if let Some(r) = regularity {
        ev.push(format!(
            "estimate_regularity: alpha {:.4} (CI {:.4}..{:.4}), {:?}",
            r.alpha, r.ci.0, r.ci.1, r.verdict
        ));
    }
    let obstructed = periodic.verdict == DataVerdict::Nonconstant
        || obstruction.is_some_and(|o| !o.pass);
    let class = if obstructed {
        RigidityClass::Obstructed
    } else if irreducible && matches!(linear, LinearMatch::MatchesLinear { .. }) {
        RigidityClass::RigidExpected
    } else if !irreducible
        && regularity.is_some_and(|r| r.alpha < ROUGH_ALPHA && r.verdict != LipschitzVerdict::Lipschitz)
    {
        RigidityClass::CounterexampleRegime
    } else {
        RigidityClass::Inconclusive
    };
    RigidityVerdict {
        class,
        evidence: ev,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(g: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| g(i as f64 / n as f64)).collect()
    }

    #[test]
    fn identity_is_lipschitz() {
        let g = line(|x| x, 1 << 16);
        let r = estimate_regularity(&g, 1.0, false, 3..=14).unwrap();
        assert!((r.alpha - 1.0).abs() < 1e-9, "{}", r.alpha);
        assert_eq!(r.verdict, LipschitzVerdict::Lipschitz);
    }

    #[test]
    fn weierstrass_calibration() {
        let g = line(|x| weierstrass(x, 0.5, 20), 1 << 16);
        let r = estimate_regularity(&g, 1.0, true, 3..=14).unwrap();
        assert!((0.45..=0.55).contains(&r.alpha), "{r:?}");
    }

    #[test]
    fn rough_weierstrass_is_not_lipschitz() {
        let g = line(|x| weierstrass(x, 0.25, 20), 1 << 16);
        let r = estimate_regularity(&g, 1.0, true, 3..=14).unwrap();
        assert_eq!(r.verdict, LipschitzVerdict::NotLipschitz, "{r:#?}");
    }

    #[test]
    fn oscillation_matches_brute_force() {
        let g: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        for w in [1, 3, 7] {
            for periodic in [false, true] {
                let n = g.len();
                let mut want = 0.0f64;
                let end = if periodic { n } else { n - w };
                for s in 0..end {
                    let win: Vec<f64> = (0..=w).map(|k| g[(s + k) % n]).collect();
                    let hi = win.iter().cloned().fold(f64::MIN, f64::max);
                    let lo = win.iter().cloned().fold(f64::MAX, f64::min);
                    want = want.max(hi - lo);
                }
                assert_eq!(oscillation(&g, w, periodic), want);
            }
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let g = line(|x| x, 1000);
        assert!(matches!(
            estimate_regularity(&g, 1.0, false, 3..=14),
            Err(ConjugacyError::InsufficientScales { .. })
        ));
    }
}
