//! Finite-time Lyapunov exponents of the derivative cocycle by the discrete QR
//! method, grid-wide regularity evidence, and the one-dimensional band
//! splitting from forward and backward QR frames.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, Mat};
use crate::perturbation::{PerturbationError, PerturbedMap};
use crate::scalar::Real;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CocycleError {
    #[error(transparent)]
    Map(#[from] PerturbationError),
    #[error("adjacent exponents {lo:.6} and {hi:.6} are closer than {gap:e}; band directions are unreliable")]
    SlowDomination { lo: f64, hi: f64, gap: f64 },
    #[error("horizon must be at least 10, got {0}")]
    HorizonTooShort(usize),
    #[error("grid with {0} points exceeds the 10^6 limit")]
    GridTooLarge(usize),
}

/// A linear cocycle over an invertible base map.
pub trait DerivativeCocycle<T: Real>: Sync {
    fn dim(&self) -> usize;
    /// Next base point and the matrix carrying the fiber at `x` to the fiber
    /// at the next point.
    fn step(&self, x: &[T]) -> Result<(Vec<T>, Mat<T>), CocycleError>;
}

/// `(x, v) ↦ (f(x), Df(x)·v)`.
pub struct Forward<'a, T>(pub &'a PerturbedMap<T>);

/// `(x, v) ↦ (f⁻¹(x), Df(f⁻¹x)⁻¹·v)`.
pub struct Backward<'a, T>(pub &'a PerturbedMap<T>);

impl<T: Real> DerivativeCocycle<T> for Forward<'_, T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn step(&self, x: &[T]) -> Result<(Vec<T>, Mat<T>), CocycleError> {
        Ok((self.0.eval(x), self.0.df(x)))
    }
}

impl<T: Real> DerivativeCocycle<T> for Backward<'_, T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn step(&self, x: &[T]) -> Result<(Vec<T>, Mat<T>), CocycleError> {
        let y = self.0.inverse_eval(x)?;
        let m = if self.0.is_linear() {
            self.0.l_inv().clone()
        } else {
            self.0
                .df(&y)
                .inverse()
                .ok_or(PerturbationError::NewtonDiverged { residual: f64::NAN })?
        };
        Ok((y, m))
    }
}

/// Constant cocycle over the identity base, used for synthetic spectra.
pub struct ConstantCocycle<T> {
    pub matrix: Mat<T>,
}

impl<T: Real> DerivativeCocycle<T> for ConstantCocycle<T> {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn step(&self, x: &[T]) -> Result<(Vec<T>, Mat<T>), CocycleError> {
        Ok((x.to_vec(), self.matrix.clone()))
    }
}

/// Settings of the QR method.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QrOptions {
    /// Steps run before accumulation so that the seed frame aligns
    /// with the Oseledets flag.
    pub warmup: usize,
}

impl Default for QrOptions {
    fn default() -> Self {
        Self { warmup: 32 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentEstimate<T> {
    pub x: Vec<T>,
    pub horizon: usize,
    pub warmup: usize,
    /// `λ̂_1 ≤ … ≤ λ̂_d` over the measured window.
    pub exponents: Vec<T>,
    /// Largest change of any exponent between horizons N/2 and N.
    pub tail_slope: T,
    /// Same between N/4 and N/2.
    pub previous_tail_slope: T,
    /// `(1/N)·log|det Df^N|` over the measured window, from per-step
    /// determinants.
    pub log_det_rate: T,
}

impl<T: Real> ExponentEstimate<T> {
    /// `|Σ λ̂_i − (1/N) log|det Df^N||`.
    pub fn det_residual(&self) -> T {
        let s: T = self.exponents.iter().copied().sum();
        (s - self.log_det_rate).abs()
    }
}

struct QrRun<T> {
    /// Per-step `log|R_ii|` summed, in QR order (fastest first).
    sums: Vec<T>,
    half: Vec<T>,
    quarter: Vec<T>,
    log_det: T,
}

fn qr_run<T: Real>(
    c: &dyn DerivativeCocycle<T>,
    x: &[T],
    warmup: usize,
    steps: usize,
    q0: Mat<T>,
) -> Result<QrRun<T>, CocycleError> {
    let d = c.dim();
    let mut q = q0;
    let mut x = x.to_vec();
    for _ in 0..warmup {
        let (nx, m) = c.step(&x)?;
        q = (&m * &q).qr().0;
        x = nx;
    }
    let mut sums = vec![T::zero(); d];
    let mut half = sums.clone();
    let mut quarter = sums.clone();
    let mut log_det = T::zero();
    for k in 0..steps {
        if k == steps / 4 {
            quarter = sums.clone();
        }
        if k == steps / 2 {
            half = sums.clone();
        }
        let (nx, m) = c.step(&x)?;
        log_det += m.det().abs().ln();
        let (qn, r) = (&m * &q).qr();
        for i in 0..d {
            sums[i] += r[(i, i)].ln();
        }
        q = qn;
        x = nx;
    }
    Ok(QrRun {
        sums,
        half,
        quarter,
        log_det,
    })
}

fn ascending<T: Real>(v: &[T], n: usize) -> Vec<T> {
    let nn = T::from_usize_lossy(n.max(1));
    let mut out: Vec<T> = v.iter().map(|&s| s / nn).collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    out
}

fn max_change<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&p, &q)| m.max((p - q).abs()))
}

/// Finite-time exponents of an arbitrary cocycle.
pub fn cocycle_exponents<T: Real>(
    c: &dyn DerivativeCocycle<T>,
    x: &[T],
    horizon: usize,
    opts: QrOptions,
) -> Result<ExponentEstimate<T>, CocycleError> {
    if horizon < 10 {
        return Err(CocycleError::HorizonTooShort(horizon));
    }
    let run = qr_run(c, x, opts.warmup, horizon, generic_frame(c.dim()))?;
    let full = ascending(&run.sums, horizon);
    let half = ascending(&run.half, horizon / 2);
    let quarter = ascending(&run.quarter, horizon / 4);
    Ok(ExponentEstimate {
        x: x.to_vec(),
        horizon,
        warmup: opts.warmup,
        tail_slope: max_change(&full, &half),
        previous_tail_slope: max_change(&half, &quarter),
        exponents: full,
        log_det_rate: run.log_det / T::from_usize_lossy(horizon),
    })
}

/// Finite-time exponents of `Df` along the forward orbit of `x`.
pub fn finite_time_exponents<T: Real>(
    f: &PerturbedMap<T>,
    x: &[T],
    horizon: usize,
) -> Result<ExponentEstimate<T>, CocycleError> {
    cocycle_exponents(&Forward(f), x, horizon, QrOptions::default())
}

/// Which coordinates a field grid varies; the others stay at `offset`.
#[derive(Clone, Debug, Serialize)]
pub struct FieldGrid {
    pub resolution: usize,
    pub axes: Vec<usize>,
    pub offset: Vec<f64>,
}

impl FieldGrid {
    pub fn full(dim: usize, resolution: usize) -> Self {
        Self {
            resolution,
            axes: (0..dim).collect(),
            offset: vec![0.0; dim],
        }
    }

    /// Grid over the given coordinates with the rest fixed.
    pub fn sub(dim: usize, resolution: usize, axes: Vec<usize>, fixed: f64) -> Self {
        Self {
            resolution,
            axes,
            offset: vec![fixed; dim],
        }
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.axes.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points `offset + i/res` over the chosen axes, lexicographic order.
    pub fn points<T: Real>(&self) -> Vec<Vec<T>> {
        let r = self.resolution;
        let n = self.len();
        (0..n)
            .map(|mut idx| {
                let mut p: Vec<T> = self.offset.iter().map(|&o| T::lit(o)).collect();
                for &ax in self.axes.iter().rev() {
                    let i = idx % r;
                    idx /= r;
                    p[ax] = T::from_usize_lossy(i) / T::from_usize_lossy(r);
                }
                p
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FieldVerdict {
    RegularConsistent,
    Inconclusive,
    Nonconstant,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovField<T> {
    pub grid: FieldGrid,
    pub horizon: usize,
    pub tau_reg: f64,
    pub estimates: Vec<ExponentEstimate<T>>,
    pub medians: Vec<T>,
    /// `max_x |λ̂_i(x) − median_i|` per exponent.
    pub spread: Vec<T>,
    pub max_tail_slope: T,
    pub max_previous_tail_slope: T,
    pub verdict: FieldVerdict,
}

impl<T: Real> LyapunovField<T> {
    pub fn max_spread(&self) -> T {
        self.spread.iter().fold(T::zero(), |m, &s| m.max(s))
    }

    /// One row per base point: coordinates, N, exponents, tail slope.
    pub fn to_csv(&self) -> String {
        let d = self.medians.len();
        let mut s = String::new();
        let xs: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        let ls: Vec<String> = (1..=d).map(|i| format!("lambda_{i}")).collect();
        s.push_str(&format!("{},N,{},tail_slope\n", xs.join(","), ls.join(",")));
        for e in &self.estimates {
            let xs: Vec<String> = e.x.iter().map(|v| format!("{v:.10}")).collect();
            let ls: Vec<String> = e.exponents.iter().map(|v| format!("{v:.12e}")).collect();
            s.push_str(&format!(
                "{},{},{},{:.6e}\n",
                xs.join(","),
                e.horizon,
                ls.join(","),
                e.tail_slope
            ));
        }
        s
    }
}

pub const DEFAULT_TAU_REG: f64 = 5e-3;

fn median<T: Real>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

/// Exponent field over a grid with the regularity verdict.
///
/// `RegularConsistent` needs spread below `tau_reg` and tail drift that does
/// not grow from N/2 to N; spread at or above `tau_reg` is `Nonconstant`.
pub fn exponent_field<T: Real>(
    f: &PerturbedMap<T>,
    grid: &FieldGrid,
    horizon: usize,
    tau_reg: f64,
) -> Result<LyapunovField<T>, CocycleError> {
    if grid.len() > 1_000_000 {
        return Err(CocycleError::GridTooLarge(grid.len()));
    }
    let pts = grid.points::<T>();
    let estimates = pts
        .par_iter()
        .map(|x| finite_time_exponents(f, x, horizon))
        .collect::<Result<Vec<_>, _>>()?;
    let d = f.dim();
    let medians: Vec<T> = (0..d)
        .map(|i| median(estimates.iter().map(|e| e.exponents[i]).collect()))
        .collect();
    let spread: Vec<T> = (0..d)
        .map(|i| {
            estimates
                .iter()
                .fold(T::zero(), |m, e| m.max((e.exponents[i] - medians[i]).abs()))
        })
        .collect();
    let max_tail_slope = estimates.iter().fold(T::zero(), |m, e| m.max(e.tail_slope));
    let max_previous_tail_slope = estimates
        .iter()
        .fold(T::zero(), |m, e| m.max(e.previous_tail_slope));
    let max_spread = spread.iter().fold(T::zero(), |m, &s| m.max(s)).to_f64_lossy();
    let shrinking = max_tail_slope <= max_previous_tail_slope + T::lit(1e-12);
    let verdict = if max_spread >= tau_reg {
        FieldVerdict::Nonconstant
    } else if shrinking {
        FieldVerdict::RegularConsistent
    } else {
        FieldVerdict::Inconclusive
    };
    Ok(LyapunovField {
        grid: grid.clone(),
        horizon,
        tau_reg,
        estimates,
        medians,
        spread,
        max_tail_slope,
        max_previous_tail_slope,
        verdict,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstancyReport {
    /// Whether the input field carried the `RegularConsistent` verdict.
    pub precondition_met: bool,
    pub max_deviation: Vec<f64>,
    pub tolerance: f64,
    pub constant: bool,
}

/// Whether each sampled exponent function is constant within the field's `τ_reg`.
pub fn local_constancy_check<T: Real>(field: &LyapunovField<T>) -> ConstancyReport {
    let max_deviation: Vec<f64> = field.spread.iter().map(|s| s.to_f64_lossy()).collect();
    ConstancyReport {
        precondition_met: field.verdict == FieldVerdict::RegularConsistent,
        constant: max_deviation.iter().all(|&s| s < field.tau_reg),
        max_deviation,
        tolerance: field.tau_reg,
    }
}

/// Estimated one-dimensional bands at a point.
#[derive(Clone, Debug, Serialize)]
pub struct SplittingSample<T> {
    pub x: Vec<T>,
    /// Unit band directions sorted by exponent, ascending.
    pub bands: Vec<Vec<T>>,
    /// QR exponent estimates used for the domination check, ascending.
    pub exponents: Vec<T>,
    pub stable_count: usize,
    /// Orthonormal bases of `E^u_{(1,i)}`.
    pub unstable_flags: Vec<Vec<Vec<T>>>,
    /// Orthonormal bases of `E^s_{(1,i)}`.
    pub stable_flags: Vec<Vec<Vec<T>>>,
    /// `max_j dist(Df(x)·e_j(x)/‖·‖, span e_j(f(x)))`.
    pub invariance_residual: T,
}

impl<T: Real> SplittingSample<T> {
    pub fn unstable(&self, i: usize) -> &[T] {
        &self.bands[self.stable_count + i]
    }
}

pub const SLOW_DOMINATION_GAP: f64 = 1e-3;

/// Bands from QR frames as flag intersections: with `B_j` the first `j`
/// backward-QR columns (the `j` slowest directions) and `F` the first
/// `d − j + 1` forward-QR columns (the fastest ones), `E_j = B_j ∩ F`.
fn bands_from_frames<T: Real>(fwd: &Mat<T>, bwd: &Mat<T>) -> Vec<Vec<T>> {
    let d = fwd.rows();
    (1..=d)
        .map(|j| {
            let b: Vec<Vec<T>> = (0..j).map(|c| bwd.column(c)).collect();
            if j == 1 {
                return linalg::normalize(&b[0]);
            }
            // v = Σ a_c b_c must be orthogonal to the slowest j−1 forward columns.
            let perp: Vec<Vec<T>> = (d - j + 1..d).map(|c| fwd.column(c)).collect();
            let g = Mat::from_fn(j - 1, j, |r, c| linalg::dot(&perp[r], &b[c]));
            let a = linalg::kernel_vector(&g);
            let mut v = vec![T::zero(); d];
            for (c, bc) in b.iter().enumerate() {
                v = linalg::axpy(a[c], bc, &v);
            }
            let mut v = linalg::normalize(&v);
            let (imax, _) = v.iter().enumerate().fold((0, T::zero()), |(bi, bm), (i, x)| {
                if x.abs() > bm {
                    (i, x.abs())
                } else {
                    (bi, bm)
                }
            });
            if v[imax] < T::zero() {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect()
}

/// Orthogonal frame in general position. Identity frames can miss invariant
/// directions entirely (for skew products the fiber-stable direction is never
/// excited from coordinate vectors except by rounding), so the splitting uses
/// this fixed rotation instead.
fn generic_frame<T: Real>(d: usize) -> Mat<T> {
    Mat::from_fn(d, d, |i, j| {
        T::one() / T::from_usize_lossy(i + j + 1) + if i == j { T::one() } else { T::zero() }
    })
    .qr()
    .0
}

/// Band splitting at `x` from forward and backward cocycles over `n` steps.
pub fn estimate_splitting_with<T: Real>(
    fwd: &dyn DerivativeCocycle<T>,
    bwd: &dyn DerivativeCocycle<T>,
    x: &[T],
    n: usize,
    stable_count: usize,
) -> Result<SplittingSample<T>, CocycleError> {
    let d = fwd.dim();
    // Both QR runs multiply derivatives at stored orbit points. Re-iterating
    // from the far end of an orbit would land on a different pseudo-orbit,
    // since rounding grows by the expansion rate at every step.
    let mut past = vec![x.to_vec()];
    for _ in 0..n {
        let p = bwd.step(past.last().expect("non-empty"))?.0;
        past.push(p);
    }
    let mut q = generic_frame(d);
    let mut sums = vec![T::zero(); d];
    for p in past[1..].iter().rev() {
        let m = fwd.step(p)?.1;
        let (qn, r) = (&m * &q).qr();
        for i in 0..d {
            sums[i] += r[(i, i)].ln();
        }
        q = qn;
    }
    let q_fwd_x = q;
    let (fx, dfx) = fwd.step(x)?;
    let q_fwd_fx = (&dfx * &q_fwd_x).qr().0;

    let mut future = vec![fx.clone()];
    for _ in 0..n {
        let p = fwd.step(future.last().expect("non-empty"))?.0;
        future.push(p);
    }
    let mut q = generic_frame(d);
    for p in future[1..].iter().rev() {
        let m = bwd.step(p)?.1;
        q = (&m * &q).qr().0;
    }
    let q_bwd_fx = q;
    let (_, dbx) = bwd.step(&fx)?;
    let q_bwd_x = (&dbx * &q_bwd_fx).qr().0;

    let exponents = ascending(&sums, n);
    for w in exponents.windows(2) {
        if (w[1] - w[0]).to_f64_lossy() < SLOW_DOMINATION_GAP {
            return Err(CocycleError::SlowDomination {
                lo: w[0].to_f64_lossy(),
                hi: w[1].to_f64_lossy(),
                gap: SLOW_DOMINATION_GAP,
            });
        }
    }

    let bands = bands_from_frames(&q_fwd_x, &q_bwd_x);
    let bands_fx = bands_from_frames(&q_fwd_fx, &q_bwd_fx);
    let mut residual = T::zero();
    for (e, e_next) in bands.iter().zip(&bands_fx) {
        let img = linalg::normalize(&dfx.mul_vec(e));
        residual = residual.max(linalg::distance_to_span(&img, std::slice::from_ref(e_next)));
    }
    let flags = |range: std::ops::Range<usize>| -> Vec<Vec<Vec<T>>> {
        (range.start + 1..=range.end)
            .map(|end| linalg::orthonormal_basis(&bands[range.start..end]))
            .collect()
    };
    Ok(SplittingSample {
        x: x.to_vec(),
        unstable_flags: flags(stable_count..d),
        stable_flags: flags(0..stable_count),
        bands,
        exponents,
        stable_count,
        invariance_residual: residual,
    })
}

/// Band splitting of `Df` at `x`.
pub fn estimate_splitting<T: Real>(
    f: &PerturbedMap<T>,
    x: &[T],
    n: usize,
) -> Result<SplittingSample<T>, CocycleError> {
    let k = f.analysis().spectral.stable_count;
    estimate_splitting_with(&Forward(f), &Backward(f), x, n, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::{Mode, ScalarTrig};
    use crate::toral_linear::IntMatrix;

    fn cat() -> PerturbedMap<f64> {
        PerturbedMap::linear(IntMatrix::cat_map()).unwrap()
    }

    #[test]
    fn linear_exponents_are_exact() {
        let mu = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        let e = finite_time_exponents(&cat(), &[0.2, 0.7], 100).unwrap();
        assert!((e.exponents[1] - mu).abs() < 1e-12);
        assert!((e.exponents[0] + mu).abs() < 1e-12);
        assert!(e.det_residual() < 1e-12);
    }

    #[test]
    fn rejects_short_horizon() {
        assert_eq!(
            finite_time_exponents(&cat(), &[0.1, 0.1], 5).unwrap_err(),
            CocycleError::HorizonTooShort(5)
        );
    }

    #[test]
    fn linear_field_has_zero_spread() {
        let f = cat();
        let field = exponent_field(&f, &FieldGrid::full(2, 4), 50, DEFAULT_TAU_REG).unwrap();
        assert!(field.max_spread() < 1e-12);
        assert_eq!(field.verdict, FieldVerdict::RegularConsistent);
        assert!(local_constancy_check(&field).constant);
        assert_eq!(field.to_csv().lines().count(), 17);
    }

    #[test]
    fn linear_splitting_matches_eigenvectors() {
        let f = cat();
        let s = estimate_splitting(&f, &[0.3, 0.4], 60).unwrap();
        let ev = &f.analysis().spectral.eigenvectors;
        for j in 0..2 {
            assert!(linalg::distance_to_span(&s.bands[j], &[ev[j].clone()]) < 1e-10);
        }
        assert!(s.invariance_residual < 1e-10);
    }

    #[test]
    fn perturbed_splitting_is_invariant() {
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
        let s = estimate_splitting(&f, &[0.3, 0.4], 60).unwrap();
        assert!(s.invariance_residual < 1e-8, "{}", s.invariance_residual);
    }

    #[test]
    fn skew_splitting_three_dim_intersection() {
        let cat = IntMatrix::cat_map();
        let f = PerturbedMap::<f64>::make_counterexample(
            cat.clone(),
            cat,
            1,
            2,
            ScalarTrig::cosine(2, 0),
            0.01,
        )
        .unwrap();
        let s = estimate_splitting(&f, &[0.1, 0.2, 0.3, 0.4], 60).unwrap();
        assert!(s.invariance_residual < 1e-6);
        // The fiber plane {dx = 0} is invariant, so the two bands belonging to
        // B² lie in it.
        for j in [0, 3] {
            assert!(s.bands[j][0].abs() < 1e-10 && s.bands[j][1].abs() < 1e-10);
        }
    }

    #[test]
    fn near_resonance_is_slow_domination() {
        let m = Mat::from_rows(&[
            vec![2.0, 0.0, 0.0],
            vec![0.0, 2.0005, 0.0],
            vec![0.0, 0.0, 0.25],
        ]);
        let minv = m.inverse().unwrap();
        let e = estimate_splitting_with(
            &ConstantCocycle { matrix: m },
            &ConstantCocycle { matrix: minv },
            &[0.0, 0.0, 0.0],
            40,
            1,
        )
        .unwrap_err();
        assert!(matches!(e, CocycleError::SlowDomination { .. }));
    }

    #[test]
    fn grid_points_cover_sub_block() {
        let g = FieldGrid::sub(4, 3, vec![0, 1], 0.5);
        let pts = g.points::<f64>();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[1], vec![0.0, 1.0 / 3.0, 0.5, 0.5]);
    }
}
