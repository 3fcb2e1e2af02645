//! Periodic orbits of `f` continued from the exact periodic orbits of `L`,
//! their monodromy spectra, and the constant-periodic-data verdict.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, Mat};
use crate::perturbation::{torus_distance, PerturbationError, PerturbedMap};
use crate::scalar::Real;
use crate::toral_linear::{
    divisors, exact_orbits, periodic_point_count, ExactOrbit, LinearError, SpectralData,
};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PeriodicError {
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Map(#[from] PerturbationError),
    #[error("period {period}: recovered {recovered} periodic points, expected {expected}")]
    CountMismatch {
        period: u32,
        expected: String,
        recovered: usize,
    },
    #[error("{0} orbits exceed the cap")]
    TooManyOrbits(usize),
    #[error("at least two orbits are needed, got {0}")]
    InsufficientOrbits(usize),
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContinuationOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Cap on the total number of orbits over all periods.
    pub orbit_cap: usize,
    /// Cap on periodic points per period, passed to the exact enumeration.
    pub point_cap: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-12,
            orbit_cap: 10_000,
            point_cap: 100_000,
        }
    }
}

/// A periodic orbit of `f` with its derivative cocycle data.
#[derive(Clone, Debug, Serialize)]
pub struct PeriodicOrbitRecord<T> {
    pub period: u32,
    /// `p, f(p), …, f^{τ−1}(p)` in [0,1)^d.
    pub points: Vec<Vec<T>>,
    /// `Df^τ(p)`.
    #[serde(skip)]
    pub monodromy: Mat<T>,
    /// Eigenvalue moduli of the monodromy, ascending.
    pub moduli: Vec<T>,
    /// `(1/τ)·log|eig_i|`, ascending.
    pub exponents: Vec<T>,
    pub newton_iterations: usize,
    pub residual: T,
    /// Exact seed `L`-orbit representative.
    pub seed: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedFailure {
    pub period: u32,
    pub seed: String,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Continuation<T> {
    pub records: Vec<PeriodicOrbitRecord<T>>,
    pub failures: Vec<SeedFailure>,
    /// `(τ, |det(L^τ − I)|, recovered points of period dividing τ)`.
    pub counts: Vec<(u32, String, usize)>,
}

/// `log|eig|` of the cyclic product `m_{τ−1} ⋯ m_0`, ascending, by QR
/// iteration around the cycle. Works without forming the ill-conditioned
/// product.
pub fn cyclic_log_moduli<T: Real>(factors: &[Mat<T>]) -> Vec<T> {
    let d = factors[0].rows();
    let mut q = Mat::identity(d);
    let mut last = vec![T::zero(); d];
    for cycle in 0..200 {
        let mut logs = vec![T::zero(); d];
        for m in factors {
            let (qn, r) = (m * &q).qr();
            for i in 0..d {
                logs[i] += r[(i, i)].ln();
            }
            q = qn;
        }
        let change = linalg::sub(&logs, &last)
            .iter()
            .fold(T::zero(), |a, &b| a.max(b.abs()));
        last = logs;
        if cycle > 4 && change <= T::epsilon() * T::lit(64.0) {
            break;
        }
    }
    last.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    last
}

fn to_t<T: Real>(v: &[BigInt]) -> Vec<T> {
    v.iter()
        .map(|c| T::lit(c.to_f64().unwrap_or(f64::NAN)))
        .collect()
}

/// Multiple-shooting Newton for `F(x_i) = x_{i+1} + v_i`, `i` mod τ, where the
/// exact linear orbit provides both the seed and the lattice shifts `v_i`.
fn continue_one<T: Real>(
    f: &PerturbedMap<T>,
    orbit: &ExactOrbit,
    opts: &ContinuationOptions,
) -> Result<PeriodicOrbitRecord<T>, PerturbationError> {
    let tau = orbit.period as usize;
    let d = f.dim();
    let l = f.linear_part();
    let mut xs: Vec<Vec<T>> = orbit.points.iter().map(|p| p.to_vec()).collect();
    // v_i = L p_i − p_{i+1}, exact.
    let shifts: Vec<Vec<T>> = (0..tau)
        .map(|i| {
            let p = &orbit.points[i].0;
            let q = &orbit.points[(i + 1) % tau].0;
            let lp: Vec<num_rational::BigRational> = l
                .rows()
                .iter()
                .map(|r| {
                    r.iter()
                        .zip(p)
                        .map(|(a, c)| num_rational::BigRational::from_integer(a.clone()) * c)
                        .sum()
                })
                .collect();
            let v: Vec<BigInt> = lp.iter().zip(q).map(|(a, b)| (a - b).to_integer()).collect();
            to_t(&v)
        })
        .collect();

    let residual_of = |xs: &[Vec<T>]| -> (Vec<T>, T) {
        let mut r = Vec::with_capacity(tau * d);
        for i in 0..tau {
            let fx = f.lift_eval(&xs[i]);
            for k in 0..d {
                r.push(fx[k] - xs[(i + 1) % tau][k] - shifts[i][k]);
            }
        }
        let n = r.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        (r, n)
    };

    let tol = T::lit(opts.tolerance).max(T::epsilon() * T::lit(256.0));
    let (mut r, mut res) = residual_of(&xs);
    let mut iterations = 0;
    while res > tol {
        if iterations >= opts.max_iterations {
            return Err(PerturbationError::NewtonDiverged {
                residual: res.to_f64_lossy(),
            });
        }
        iterations += 1;
        // Block-cyclic Jacobian: row block i has Df(x_i) at column block i
        // and −I at column block i+1.
        let n = tau * d;
        let mut jac = Mat::zeros(n, n);
        for i in 0..tau {
            let dfi = f.df(&xs[i]);
            let j = (i + 1) % tau;
            for a in 0..d {
                for b in 0..d {
                    jac[(i * d + a, i * d + b)] += dfi[(a, b)];
                }
                jac[(i * d + a, j * d + a)] -= T::one();
            }
        }
        let step = jac.solve(&r).ok_or(PerturbationError::NewtonDiverged {
            residual: res.to_f64_lossy(),
        })?;
        let mut damping = T::one();
        loop {
            let trial: Vec<Vec<T>> = xs
                .iter()
                .enumerate()
                .map(|(i, x)| (0..d).map(|k| x[k] - damping * step[i * d + k]).collect())
                .collect();
            let (tr, tres) = residual_of(&trial);
            if tres < res || damping < T::lit(1e-3) {
                xs = trial;
                r = tr;
                res = tres;
                break;
            }
            damping = damping * T::lit(0.5);
        }
    }

    let points: Vec<Vec<T>> = xs.iter().map(|x| crate::perturbation::wrap(x)).collect();
    let jacs: Vec<Mat<T>> = points.iter().map(|x| f.df(x)).collect();
    let monodromy = jacs
        .iter()
        .fold(Mat::identity(d), |acc, m| m.matmul(&acc));
    let logs = cyclic_log_moduli(&jacs);
    let tt = T::from_usize_lossy(tau);
    Ok(PeriodicOrbitRecord {
        period: orbit.period,
        moduli: logs.iter().map(|l| l.exp()).collect(),
        exponents: logs.iter().map(|&l| l / tt).collect(),
        points,
        monodromy,
        newton_iterations: iterations,
        residual: res,
        seed: orbit.points[0].display(),
    })
}

/// One record per `L`-orbit of minimal period `τ ≤ t_max`.
pub fn continue_orbits<T: Real>(
    f: &PerturbedMap<T>,
    t_max: u32,
    opts: &ContinuationOptions,
) -> Result<Continuation<T>, PeriodicError> {
    let l = f.linear_part();
    let mut by_period: Vec<Vec<ExactOrbit>> = Vec::new();
    let mut total = 0usize;
    for tau in 1..=t_max {
        let orbits = exact_orbits(l, tau, opts.point_cap)?;
        total += orbits.len();
        if total > opts.orbit_cap {
            return Err(PeriodicError::TooManyOrbits(total));
        }
        by_period.push(orbits);
    }
    let seeds: Vec<&ExactOrbit> = by_period.iter().flatten().collect();
    let outcomes: Vec<Result<PeriodicOrbitRecord<T>, PerturbationError>> = seeds
        .par_iter()
        .map(|o| continue_one(f, o, opts))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (o, out) in seeds.iter().zip(outcomes) {
        match out {
            Ok(r) => records.push(r),
            Err(e) => failures.push(SeedFailure {
                period: o.period,
                seed: o.points[0].display(),
                error: e.to_string(),
            }),
        }
    }

    // Distinct recovered points per minimal period, then the divisor sum.
    let mut distinct_by_period = vec![0usize; t_max as usize + 1];
    for tau in 1..=t_max {
        let mut seen = HashSet::new();
        for r in records.iter().filter(|r| r.period == tau) {
            for p in &r.points {
                let key: Vec<i64> = p
                    .iter()
                    .map(|&c| (crate::perturbation::wrap1(c + T::lit(1e-9)).to_f64_lossy() * 1e7).round() as i64)
                    .collect();
                seen.insert(key);
            }
        }
        distinct_by_period[tau as usize] = seen.len();
    }
    let mut counts = Vec::new();
    for tau in 1..=t_max {
        let expected = periodic_point_count(l, tau)?;
        let recovered: usize = divisors(tau)
            .into_iter()
            .map(|q| distinct_by_period[q as usize])
            .sum();
        if BigInt::from(recovered) != expected {
            return Err(PeriodicError::CountMismatch {
                period: tau,
                expected: expected.to_string(),
                recovered,
            });
        }
        counts.push((tau, expected.to_string(), recovered));
    }
    Ok(Continuation {
        records,
        failures,
        counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DataVerdict {
    Constant,
    Nonconstant,
}

pub const TAU_PD_SKEW: f64 = 1e-6;
pub const TAU_PD_GENERIC: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicDataReport {
    pub orbit_count: usize,
    pub max_period: u32,
    /// Largest `|e_i(p) − e_i(q)|` over orbit pairs and indices.
    pub max_deviation: f64,
    /// Orbit indices realizing `max_deviation`.
    pub witness: (usize, usize),
    pub tolerance: f64,
    pub verdict: DataVerdict,
    /// Mean exponent vector, ascending.
    pub mean_exponents: Vec<f64>,
    /// Per-orbit exponent vectors, ascending.
    pub exponents: Vec<Vec<f64>>,
}

/// Compares the per-iterate exponent vectors of all orbits.
pub fn periodic_data<T: Real>(
    records: &[PeriodicOrbitRecord<T>],
    tolerance: f64,
) -> Result<PeriodicDataReport, PeriodicError> {
    if records.len() < 2 {
        return Err(PeriodicError::InsufficientOrbits(records.len()));
    }
    let ex: Vec<Vec<f64>> = records
        .iter()
        .map(|r| r.exponents.iter().map(|e| e.to_f64_lossy()).collect())
        .collect();
    let d = ex[0].len();
    let mut max_deviation = 0.0;
    let mut witness = (0, 1);
    for i in 0..d {
        let (mut lo, mut hi) = (0usize, 0usize);
        for (k, e) in ex.iter().enumerate() {
            if e[i] < ex[lo][i] {
                lo = k;
            }
            if e[i] > ex[hi][i] {
                hi = k;
            }
        }
        let dev = ex[hi][i] - ex[lo][i];
        if dev > max_deviation {
            max_deviation = dev;
            witness = (lo.min(hi), lo.max(hi));
        }
    }
    let mean_exponents = (0..d)
        .map(|i| ex.iter().map(|e| e[i]).sum::<f64>() / ex.len() as f64)
        .collect();
    Ok(PeriodicDataReport {
        orbit_count: records.len(),
        max_period: records.iter().map(|r| r.period).max().unwrap_or(0),
        max_deviation,
        witness,
        tolerance,
        verdict: if max_deviation < tolerance {
            DataVerdict::Constant
        } else {
            DataVerdict::Nonconstant
        },
        mean_exponents,
        exponents: ex,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Band {
    /// `λ^u_i`, 1-based.
    Unstable(usize),
    /// `λ^s_i`, 1-based.
    Stable(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LinearMatch {
    MatchesLinear { max_deviation: f64 },
    Differs { band: Band, deviation: f64 },
    /// The report was not `Constant`, so there is no single set of
    /// periodic exponents to compare.
    NotApplicable,
}

/// Checks `λ^u_i(p, f) = λ^u_i(L)` then `λ^s_i(p, f) = λ^s_i(L)` for every
/// orbit, within the report's tolerance.
pub fn compare_with_linear(report: &PeriodicDataReport, spectral: &SpectralData) -> LinearMatch {
    if report.verdict != DataVerdict::Constant {
        return LinearMatch::NotApplicable;
    }
    let k = spectral.stable_count;
    let d = spectral.dim();
    let order: Vec<(usize, Band)> = (0..d - k)
        .map(|i| (k + i, Band::Unstable(i + 1)))
        .chain((0..k).map(|i| (i, Band::Stable(i + 1))))
        .collect();
    let mut worst = 0.0f64;
    for (idx, band) in order {
        let dev = report
            .exponents
            .iter()
            .map(|e| (e[idx] - spectral.exponents[idx]).abs())
            .fold(0.0, f64::max);
        if dev >= report.tolerance {
            return LinearMatch::Differs {
                band,
                deviation: dev,
            };
        }
        worst = worst.max(dev);
    }
    LinearMatch::MatchesLinear {
        max_deviation: worst,
    }
}

/// Monodromy log-moduli starting from each point of the orbit; the largest
/// spread across starting points, for the cyclic-invariance check.
pub fn cyclic_spread<T: Real>(f: &PerturbedMap<T>, record: &PeriodicOrbitRecord<T>) -> T {
    let jacs: Vec<Mat<T>> = record.points.iter().map(|x| f.df(x)).collect();
    let base = cyclic_log_moduli(&jacs);
    let mut worst = T::zero();
    for s in 1..jacs.len() {
        let mut rot = jacs[s..].to_vec();
        rot.extend_from_slice(&jacs[..s]);
        let other = cyclic_log_moduli(&rot);
        for (a, b) in base.iter().zip(&other) {
            worst = worst.max((*a - *b).abs());
        }
    }
    worst
}

/// Closing error `max_i dist(f(p_i), p_{i+1})` on the torus.
pub fn closing_error<T: Real>(f: &PerturbedMap<T>, record: &PeriodicOrbitRecord<T>) -> T {
    let n = record.points.len();
    (0..n).fold(T::zero(), |m, i| {
        m.max(torus_distance(&f.eval(&record.points[i]), &record.points[(i + 1) % n]))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::{Mode, ScalarTrig};
    use crate::toral_linear::IntMatrix;

    fn skew() -> PerturbedMap<f64> {
        let cat = IntMatrix::cat_map();
        PerturbedMap::make_counterexample(cat.clone(), cat, 1, 2, ScalarTrig::cosine(2, 0), 0.01)
            .unwrap()
    }

    #[test]
    fn linear_cat_orbits() {
        let f = PerturbedMap::<f64>::linear(IntMatrix::cat_map()).unwrap();
        let c = continue_orbits(&f, 2, &ContinuationOptions::default()).unwrap();
        assert_eq!(c.records.len(), 3);
        assert_eq!(c.records[0].points, vec![vec![0.0, 0.0]]);
        let rep = periodic_data(&c.records, TAU_PD_GENERIC).unwrap();
        assert_eq!(rep.verdict, DataVerdict::Constant);
        assert!(rep.max_deviation < 1e-10);
        let m = compare_with_linear(&rep, &f.analysis().spectral);
        assert!(matches!(m, LinearMatch::MatchesLinear { .. }));
    }

    #[test]
    fn skew_orbits_converge_fast() {
        let f = skew();
        let c = continue_orbits(&f, 3, &ContinuationOptions::default()).unwrap();
        assert!(c.failures.is_empty());
        assert!(c.records.iter().all(|r| r.newton_iterations <= 6));
        for r in c.records.iter().take(20) {
            assert!(closing_error(&f, r) < 1e-10);
            assert!(cyclic_spread(&f, r) < 1e-8);
        }
    }

    #[test]
    fn generic_is_nonconstant() {
        let f = PerturbedMap::make_generic(
            IntMatrix::cat_map(),
            vec![Mode {
                k: vec![1, 0],
                c: vec![0.0, 1.0],
                phase: 0.0,
            }],
            0.05,
        )
        .unwrap();
        let c = continue_orbits(&f, 4, &ContinuationOptions::default()).unwrap();
        let rep = periodic_data(&c.records, TAU_PD_GENERIC).unwrap();
        assert_eq!(rep.verdict, DataVerdict::Nonconstant);
        assert_ne!(rep.witness.0, rep.witness.1);
        assert_eq!(
            compare_with_linear(&rep, &f.analysis().spectral),
            LinearMatch::NotApplicable
        );
    }

    #[test]
    fn scaled_report_differs_at_first_unstable() {
        let f = PerturbedMap::<f64>::linear(IntMatrix::cat_map()).unwrap();
        let c = continue_orbits(&f, 3, &ContinuationOptions::default()).unwrap();
        let mut rep = periodic_data(&c.records, TAU_PD_GENERIC).unwrap();
        for e in rep.exponents.iter_mut() {
            e.iter_mut().for_each(|x| *x *= 1.01);
        }
        assert!(matches!(
            compare_with_linear(&rep, &f.analysis().spectral),
            LinearMatch::Differs {
                band: Band::Unstable(1),
                ..
            }
        ));
    }

    #[test]
    fn too_few_orbits() {
        let f = PerturbedMap::<f64>::linear(IntMatrix::cat_map()).unwrap();
        let c = continue_orbits(&f, 1, &ContinuationOptions::default()).unwrap();
        assert_eq!(
            periodic_data(&c.records, 1e-6).unwrap_err(),
            PeriodicError::InsufficientOrbits(1)
        );
    }
}
