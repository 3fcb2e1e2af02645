//! Cohomological equations `g − Λ = φ∘f − φ` for log-Jacobians of the
//! derivative cocycle: periodic obstructions, a spectral least-squares solver,
//! telescoping checks, and (in [`leaf`]) the conformal leaf metric built from φ.
//!
//! Band Jacobians are measured in the length `|v|_i = |ℓ_i(v)|` given by the
//! dual eigen-covector `ℓ_i` of `L`, not in the Euclidean norm. Both lengths
//! are comparable along the band, so the two log-Jacobians differ by a
//! continuous coboundary; the adapted one makes the skew-product band
//! Jacobians exactly constant.

pub mod leaf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cocycle::{estimate_splitting, CocycleError, SplittingSample};
use crate::linalg::{self, Mat};
use crate::perturbation::{PerturbedMap, ScalarTrig};
use crate::periodic::PeriodicOrbitRecord;
use crate::scalar::Real;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LivsicError {
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error("periodic obstruction test failed: orbit {orbit} has average {average:e}")]
    ObstructionFailed { orbit: usize, average: f64 },
    #[error("normal equations are ill conditioned (condition {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("leaf tracing failed: {0}")]
    LeafTracingFailed(String),
    #[error("ODE step failure: {0}")]
    OdeStepFailure(String),
    #[error("band index {0} out of range")]
    BadBand(usize),
}

/// Which log-Jacobian an observable measures.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ObservableKind {
    /// Single band, index into the ascending spectrum.
    Band(usize),
    /// Flag `E^u_{(1,i)}`, `i ≥ 1`.
    UnstableFlag(usize),
    /// Flag `E^s_{(1,i)}`, `i ≥ 1`.
    StableFlag(usize),
    /// `φ₀∘f − φ₀ + Λ` for a known `φ₀`.
    Manufactured(ScalarTrig),
}

/// A continuous function `g` on the torus with its target constant `Λ`.
pub struct CocycleObservable<'a, T> {
    pub f: &'a PerturbedMap<T>,
    pub kind: ObservableKind,
    pub lambda: f64,
    /// Horizon of the QR runs that estimate band directions at each point.
    pub splitting_horizon: usize,
    bands: Vec<usize>,
    covectors: Vec<Vec<T>>,
}

impl<'a, T: Real> CocycleObservable<'a, T> {
    pub fn new(
        f: &'a PerturbedMap<T>,
        kind: ObservableKind,
        lambda: f64,
    ) -> Result<Self, LivsicError> {
        let s = &f.analysis().spectral;
        let (k, d) = (s.stable_count, s.dim());
        let bands: Vec<usize> = match &kind {
            ObservableKind::Band(i) if *i < d => vec![*i],
            ObservableKind::UnstableFlag(i) if *i >= 1 && k + i <= d => (k..k + i).collect(),
            ObservableKind::StableFlag(i) if *i >= 1 && *i <= k => (0..*i).collect(),
            ObservableKind::Manufactured(_) => Vec::new(),
            ObservableKind::Band(i)
            | ObservableKind::UnstableFlag(i)
            | ObservableKind::StableFlag(i) => return Err(LivsicError::BadBand(*i)),
        };
        if !bands.is_empty() && s.covectors.is_empty() {
            return Err(CocycleError::Map(crate::toral_linear::LinearError::NoRealSplitting.into()).into());
        }
        let covectors = bands
            .iter()
            .map(|&b| s.covectors[b].iter().map(|&c| T::lit(c)).collect())
            .collect();
        Ok(Self {
            f,
            kind,
            lambda,
            splitting_horizon: 40 + 10 * d,
            bands,
            covectors,
        })
    }

    /// The exponent sum of `L` over the observable's bands.
    pub fn linear_target(&self) -> f64 {
        let s = &self.f.analysis().spectral;
        self.bands.iter().map(|&b| s.exponents[b]).sum()
    }

    pub fn tag(&self) -> String {
        match &self.kind {
            ObservableKind::Band(i) => format!("log_jac_band_{}", i + 1),
            ObservableKind::UnstableFlag(i) => format!("log_jac_unstable_flag_1_{i}"),
            ObservableKind::StableFlag(i) => format!("log_jac_stable_flag_1_{i}"),
            ObservableKind::Manufactured(_) => "manufactured_coboundary".into(),
        }
    }

    /// `log|det[ℓ_j(Df·b_k)]| − log|det[ℓ_j(b_k)]|` over the band directions
    /// `b_k` at `x`.
    pub fn eval_with(&self, x: &[T], split: &SplittingSample<T>) -> T {
        let df = self.f.df(x);
        let b: Vec<&Vec<T>> = self.bands.iter().map(|&i| &split.bands[i]).collect();
        let r = b.len();
        let m0 = Mat::from_fn(r, r, |j, k| linalg::dot(&self.covectors[j], b[k]));
        let imgs: Vec<Vec<T>> = b.iter().map(|v| df.mul_vec(v)).collect();
        let m1 = Mat::from_fn(r, r, |j, k| linalg::dot(&self.covectors[j], &imgs[k]));
        m1.det().abs().ln() - m0.det().abs().ln()
    }

    pub fn eval(&self, x: &[T]) -> Result<T, LivsicError> {
        if let ObservableKind::Manufactured(phi0) = &self.kind {
            let fx = self.f.eval(x);
            return Ok(phi0.eval(&fx) - phi0.eval(x) + T::lit(self.lambda));
        }
        let split = estimate_splitting(self.f, x, self.splitting_horizon)?;
        Ok(self.eval_with(x, &split))
    }

    /// `g(x) − Λ`.
    pub fn centered(&self, x: &[T]) -> Result<T, LivsicError> {
        Ok(self.eval(x)? - T::lit(self.lambda))
    }
}

pub const DEFAULT_TAU_OBS: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct ObstructionReport {
    pub observable: String,
    pub lambda: f64,
    /// Birkhoff average of `g − Λ` per orbit.
    pub averages: Vec<f64>,
    pub max_abs_average: f64,
    pub witness: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Periodic-orbit averages of `g − Λ`.
pub fn obstruction_test<T: Real>(
    g: &CocycleObservable<'_, T>,
    records: &[PeriodicOrbitRecord<T>],
    tolerance: f64,
) -> Result<ObstructionReport, LivsicError> {
    let averages = records
        .par_iter()
        .map(|r| {
            let mut s = 0.0;
            for p in &r.points {
                s += g.centered(p)?.to_f64_lossy();
            }
            Ok(s / r.points.len() as f64)
        })
        .collect::<Result<Vec<f64>, LivsicError>>()?;
    let (witness, max_abs_average) = averages
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(wi, wm), (i, a)| {
            if a.abs() > wm {
                (i, a.abs())
            } else {
                (wi, wm)
            }
        });
    Ok(ObstructionReport {
        observable: g.tag(),
        lambda: g.lambda,
        pass: max_abs_average < tolerance,
        averages,
        max_abs_average,
        witness,
        tolerance,
    })
}

/// Where the least-squares equations are sampled.
#[derive(Clone, Debug, Serialize)]
pub enum Sampling {
    Grid { resolution: usize },
    Random { count: usize, seed: u64 },
}

impl Sampling {
    pub fn points<T: Real>(&self, d: usize) -> Vec<Vec<T>> {
        match *self {
            Sampling::Grid { resolution } => {
                crate::cocycle::FieldGrid::full(d, resolution).points()
            }
            Sampling::Random { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| (0..d).map(|_| T::lit(rng.gen::<f64>())).collect())
                    .collect()
            }
        }
    }
}

/// Default Fourier cutoff per dimension.
pub fn default_cutoff(d: usize) -> usize {
    match d {
        0..=2 => 8,
        3 => 3,
        _ => 2,
    }
}

/// Half-lattice `{k : 0 < |k|∞ ≤ K, first non-zero entry positive}`.
pub fn half_lattice(d: usize, k_max: usize) -> Vec<Vec<i64>> {
    let k = k_max as i64;
    let side = 2 * k + 1;
    let total = (side as usize).pow(d as u32);
    let mut out = Vec::new();
    for mut idx in 0..total {
        let mut v = vec![0i64; d];
        for c in (0..d).rev() {
            v[c] = (idx % side as usize) as i64 - k;
            idx /= side as usize;
        }
        if let Some(first) = v.iter().find(|&&c| c != 0) {
            if *first > 0 {
                out.push(v);
            }
        }
    }
    out
}

/// Real Fourier series `Σ a_k cos(2π⟨k,x⟩) + b_k sin(2π⟨k,x⟩)` with zero mean.
#[derive(Clone, Debug, Serialize)]
pub struct FourierSeries<T> {
    pub modes: Vec<Vec<i64>>,
    pub cos: Vec<T>,
    pub sin: Vec<T>,
}

impl<T: Real> FourierSeries<T> {
    pub fn zero(d: usize, k_max: usize) -> Self {
        let modes = half_lattice(d, k_max);
        let n = modes.len();
        Self {
            modes,
            cos: vec![T::zero(); n],
            sin: vec![T::zero(); n],
        }
    }

    /// Values of every basis function at `x`: cosines then sines.
    fn basis(modes: &[Vec<i64>], x: &[T], out: &mut [T]) {
        let n = modes.len();
        for (j, k) in modes.iter().enumerate() {
            let s = k
                .iter()
                .zip(x)
                .fold(T::zero(), |a, (&kk, &xi)| a + T::from_i64(kk).unwrap() * xi);
            let (sn, cs) = (T::two_pi() * s).sin_cos();
            out[j] = cs;
            out[n + j] = sn;
        }
    }

    pub fn eval(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for (j, k) in self.modes.iter().enumerate() {
            let s = k
                .iter()
                .zip(x)
                .fold(T::zero(), |a, (&kk, &xi)| a + T::from_i64(kk).unwrap() * xi);
            let (sn, cs) = (T::two_pi() * s).sin_cos();
            acc += self.cos[j] * cs + self.sin[j] * sn;
        }
        acc
    }

    /// `Σ |a_k| + |b_k|`, an upper bound for the sup norm.
    pub fn sup_bound(&self) -> T {
        self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum()
    }
}

/// Numerical solution φ of `φ∘f − φ = g − Λ`.
#[derive(Clone, Debug, Serialize)]
pub struct TransferFunction<T> {
    pub observable: String,
    pub lambda: f64,
    pub cutoff: usize,
    pub series: FourierSeries<T>,
    /// Sup of the equation residual over the samples.
    pub residual: f64,
    pub residual_rms: f64,
    /// `(K, residual)` for each cutoff tried, ascending K.
    pub residual_vs_cutoff: Vec<(usize, f64)>,
    pub condition: f64,
    /// Max over sample points of |φ|.
    pub sup_norm: f64,
    /// Orbit-propagation cross-check: max over n of
    /// `|Σ_{k<n}(g − Λ)(f^k x) − (φ(f^n x) − φ(x))| / n`.
    pub propagation_discrepancy: f64,
    pub propagation_steps: usize,
    /// Hölder-exponent evidence, filled in by the regularity estimator.
    pub holder_exponent: Option<f64>,
}

impl<T: Real> TransferFunction<T> {
    pub fn eval(&self, x: &[T]) -> T {
        self.series.eval(x)
    }

    /// `φ ≡ 0`, the gauge solution for constant data.
    pub fn zero(d: usize, observable: String, lambda: f64) -> Self {
        Self {
            observable,
            lambda,
            cutoff: 0,
            series: FourierSeries::zero(d, 0),
            residual: 0.0,
            residual_rms: 0.0,
            residual_vs_cutoff: Vec::new(),
            condition: 1.0,
            sup_norm: 0.0,
            propagation_discrepancy: 0.0,
            propagation_steps: 0,
            holder_exponent: None,
        }
    }

    /// Grid samples of φ as CSV.
    pub fn grid_csv(&self, d: usize, resolution: usize) -> String {
        let mut s = String::new();
        let xs: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        s.push_str(&format!("{},phi\n", xs.join(",")));
        for p in crate::cocycle::FieldGrid::full(d, resolution).points::<T>() {
            let cs: Vec<String> = p.iter().map(|v| format!("{v:.8}")).collect();
            s.push_str(&format!("{},{:.12e}\n", cs.join(","), self.eval(&p)));
        }
        s
    }

    /// Coefficient table as CSV.
    pub fn coefficients_csv(&self) -> String {
        let mut s = String::from("k,cos,sin\n");
        for (j, k) in self.series.modes.iter().enumerate() {
            let ks: Vec<String> = k.iter().map(ToString::to_string).collect();
            s.push_str(&format!(
                "{},{:.12e},{:.12e}\n",
                ks.join(" "),
                self.series.cos[j],
                self.series.sin[j]
            ));
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveOptions {
    pub cutoff: usize,
    pub sampling: Sampling,
    /// Also solve at `cutoff / 2` to report residual against K.
    pub sweep: bool,
    pub propagation_steps: usize,
    pub condition_limit: f64,
}

impl SolveOptions {
    pub fn for_dim(d: usize) -> Self {
        let cutoff = default_cutoff(d);
        let unknowns = 2 * half_lattice(d, cutoff).len();
        let sampling = if d <= 2 {
            Sampling::Grid { resolution: 64 }
        } else {
            Sampling::Random {
                count: (4 * unknowns).max(512),
                seed: 7,
            }
        };
        Self {
            cutoff,
            sampling,
            sweep: true,
            propagation_steps: 1000,
            condition_limit: 1e12,
        }
    }
}

/// Cholesky factor of a symmetric positive-definite matrix (lower).
fn cholesky<T: Real>(a: &Mat<T>) -> Option<Mat<T>> {
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if s <= T::zero() || !s.is_finite() {
            return None;
        }
        let d = s.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn chol_solve<T: Real>(l: &Mat<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = l[(k, i)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// `λ_max / λ_min` of an SPD matrix by power and inverse iteration.
fn condition_estimate<T: Real>(a: &Mat<T>, l: &Mat<T>) -> f64 {
    let n = a.rows();
    let mut v: Vec<T> = (0..n).map(|i| T::one() + T::lit(0.01 * (i % 7) as f64)).collect();
    let mut w = v.clone();
    let mut hi = T::zero();
    let mut lo = T::zero();
    for _ in 0..60 {
        let av = a.mul_vec(&linalg::normalize(&v));
        hi = linalg::norm(&av);
        v = av;
        let iw = chol_solve(l, &linalg::normalize(&w));
        lo = T::one() / linalg::norm(&iw);
        w = iw;
    }
    (hi / lo).to_f64_lossy()
}

struct Fit<T> {
    series: FourierSeries<T>,
    residual: f64,
    rms: f64,
    condition: f64,
}

fn fit<T: Real>(
    d: usize,
    cutoff: usize,
    xs: &[Vec<T>],
    fxs: &[Vec<T>],
    rhs: &[T],
    condition_limit: f64,
) -> Result<Fit<T>, LivsicError> {
    let modes = half_lattice(d, cutoff);
    let p = 2 * modes.len();
    // Accumulate normal equations in parallel chunks, summed in order.
    let chunks: Vec<(Mat<T>, Vec<T>)> = xs
        .par_chunks(256)
        .zip(fxs.par_chunks(256))
        .zip(rhs.par_chunks(256))
        .map(|((xc, fc), rc)| {
            let mut g = Mat::zeros(p, p);
            let mut b = vec![T::zero(); p];
            let mut r0 = vec![T::zero(); p];
            let mut r1 = vec![T::zero(); p];
            for ((x, fx), &y) in xc.iter().zip(fc).zip(rc) {
                FourierSeries::basis(&modes, x, &mut r0);
                FourierSeries::basis(&modes, fx, &mut r1);
                let row: Vec<T> = r1.iter().zip(&r0).map(|(a, b)| *a - *b).collect();
                for i in 0..p {
                    let ri = row[i];
                    if ri == T::zero() {
                        continue;
                    }
                    b[i] += ri * y;
                    for j in i..p {
                        g[(i, j)] += ri * row[j];
                    }
                }
            }
            (g, b)
        })
        .collect();
    let mut g = Mat::zeros(p, p);
    let mut b = vec![T::zero(); p];
    for (gc, bc) in chunks {
        g = g.add(&gc);
        b = b.iter().zip(&bc).map(|(x, y)| *x + *y).collect();
    }
    for i in 0..p {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    let l = cholesky(&g).ok_or(LivsicError::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let condition = condition_estimate(&g, &l);
    if condition > condition_limit {
        return Err(LivsicError::IllConditioned { condition });
    }
    let coef = chol_solve(&l, &b);
    let n = modes.len();
    let series = FourierSeries {
        cos: coef[..n].to_vec(),
        sin: coef[n..].to_vec(),
        modes,
    };
    let mut sup = 0.0f64;
    let mut ss = 0.0f64;
    for ((x, fx), &y) in xs.iter().zip(fxs).zip(rhs) {
        let r = (series.eval(fx) - series.eval(x) - y).to_f64_lossy();
        sup = sup.max(r.abs());
        ss += r * r;
    }
    Ok(Fit {
        series,
        residual: sup,
        rms: (ss / xs.len().max(1) as f64).sqrt(),
        condition,
    })
}

/// Least-squares solution of `φ∘f − φ = g − Λ` over Fourier modes
/// `0 < |k|∞ ≤ K`, gated on a passed obstruction test.
pub fn solve_transfer<T: Real>(
    g: &CocycleObservable<'_, T>,
    obstruction: &ObstructionReport,
    opts: &SolveOptions,
) -> Result<TransferFunction<T>, LivsicError> {
    if !obstruction.pass {
        return Err(LivsicError::ObstructionFailed {
            orbit: obstruction.witness,
            average: obstruction.averages.get(obstruction.witness).copied().unwrap_or(f64::NAN),
        });
    }
    let f = g.f;
    let d = f.dim();
    let xs = opts.sampling.points::<T>(d);
    let fxs: Vec<Vec<T>> = xs.iter().map(|x| f.eval(x)).collect();
    let rhs = xs
        .par_iter()
        .map(|x| g.centered(x))
        .collect::<Result<Vec<T>, LivsicError>>()?;

    let mut cutoffs = vec![opts.cutoff];
    if opts.sweep && opts.cutoff >= 2 {
        cutoffs.insert(0, opts.cutoff / 2);
    }
    let mut sweep = Vec::new();
    let mut last = None;
    for &k in &cutoffs {
        let fit = fit(d, k, &xs, &fxs, &rhs, opts.condition_limit)?;
        sweep.push((k, fit.residual));
        last = Some(fit);
    }
    let fit = last.expect("at least one cutoff");
    let sup_norm = xs
        .iter()
        .map(|x| fit.series.eval(x).abs().to_f64_lossy())
        .fold(0.0, f64::max);

    // Orbit propagation: telescoped partial sums along one orbit.
    let mut x = xs[xs.len() / 3].clone();
    let phi0 = fit.series.eval(&x);
    let mut partial = T::zero();
    let mut worst = 0.0f64;
    for n in 1..=opts.propagation_steps {
        partial += g.centered(&x)?;
        x = f.eval(&x);
        let disc = (partial - (fit.series.eval(&x) - phi0)).abs().to_f64_lossy();
        worst = worst.max(disc / n as f64);
    }

    Ok(TransferFunction {
        observable: g.tag(),
        lambda: g.lambda,
        cutoff: opts.cutoff,
        series: fit.series,
        residual: fit.residual,
        residual_rms: fit.rms,
        residual_vs_cutoff: sweep,
        condition: fit.condition,
        sup_norm,
        propagation_discrepancy: worst,
        propagation_steps: opts.propagation_steps,
        holder_exponent: None,
    })
}

/// Whether the orbit cross-check agrees with the solve residual.
pub fn propagation_agrees<T>(tf: &TransferFunction<T>) -> bool {
    tf.propagation_discrepancy <= 10.0 * tf.residual + 1e-12
}

#[derive(Clone, Debug, Serialize)]
pub struct TelescopingReport {
    pub n: usize,
    pub points: usize,
    /// `sup |Σ_{k<n} g(f^k x) − (φ(f^n x) − φ(x) + nΛ)|`.
    pub max_residual: f64,
    /// `C = exp(2‖φ‖_∞)` with the sample sup norm.
    pub constant: f64,
    /// Whether `C⁻¹e^{nΛ} ≤ |Jac f^n| ≤ C e^{nΛ}` held (in logs, with the
    /// residual as slack).
    pub uniform_bound_holds: bool,
}

/// The n-step identity `log|Jac f^n(x)| = φ(f^n x) − φ(x) + nΛ` on random points.
pub fn telescoping_check<T: Real>(
    phi: &TransferFunction<T>,
    g: &CocycleObservable<'_, T>,
    n: usize,
    points: usize,
    seed: u64,
) -> Result<TelescopingReport, LivsicError> {
    let f = g.f;
    let xs = Sampling::Random {
        count: points,
        seed,
    }
    .points::<T>(f.dim());
    let lam = T::lit(g.lambda);
    let nn = T::from_usize_lossy(n);
    let phi_sup = phi.sup_norm;
    let res = xs
        .par_iter()
        .map(|x0| {
            let mut x = x0.clone();
            let mut log_jac = T::zero();
            for _ in 0..n {
                log_jac += g.eval(&x)?;
                x = f.eval(&x);
            }
            let rhs = phi.eval(&x) - phi.eval(x0) + nn * lam;
            let dev = (log_jac - nn * lam).abs().to_f64_lossy();
            Ok(((log_jac - rhs).abs().to_f64_lossy(), dev))
        })
        .collect::<Result<Vec<(f64, f64)>, LivsicError>>()?;
    let max_residual = res.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_dev = res.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(TelescopingReport {
        n,
        points,
        max_residual,
        constant: (2.0 * phi_sup).exp(),
        uniform_bound_holds: max_dev <= 2.0 * phi_sup + max_residual + 1e-12,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformConvergence {
    /// `(n, max_x |(1/n) log|Jac f^n(x)| − Λ|, envelope (2‖φ‖ + residual·n)/n)`.
    pub rows: Vec<(usize, f64, f64)>,
    pub holds: bool,
}

/// Checks `max_x |(1/n)log|Jac f^n(x)| − Λ| ≤ (2‖φ‖_∞ + residual·n)/n` for
/// each horizon `n`.
pub fn uniform_convergence<T: Real>(
    phi: &TransferFunction<T>,
    g: &CocycleObservable<'_, T>,
    horizons: &[usize],
    points: usize,
    seed: u64,
) -> Result<UniformConvergence, LivsicError> {
    let f = g.f;
    let xs = Sampling::Random {
        count: points,
        seed,
    }
    .points::<T>(f.dim());
    let n_max = horizons.iter().copied().max().unwrap_or(0);
    let lam = g.lambda;
    // Birkhoff sums along each orbit, sampled at every requested horizon.
    let per_point = xs
        .par_iter()
        .map(|x0| {
            let mut x = x0.clone();
            let mut s = 0.0f64;
            let mut out = Vec::with_capacity(horizons.len());
            for k in 1..=n_max {
                s += g.eval(&x)?.to_f64_lossy();
                x = f.eval(&x);
                if horizons.contains(&k) {
                    out.push((s / k as f64 - lam).abs());
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f64>>, LivsicError>>()?;
    let mut sorted: Vec<usize> = horizons.to_vec();
    sorted.sort_unstable();
    let rows: Vec<(usize, f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let m = per_point.iter().map(|v| v[j]).fold(0.0, f64::max);
            let env = (2.0 * phi.sup_norm + phi.residual * n as f64) / n as f64;
            (n, m, env)
        })
        .collect();
    let holds = rows.iter().all(|&(_, m, e)| m <= e + 1e-12);
    Ok(UniformConvergence { rows, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toral_linear::IntMatrix;

    #[test]
    fn half_lattice_counts() {
        assert_eq!(half_lattice(2, 1).len(), 4);
        assert_eq!(half_lattice(2, 8).len(), (17 * 17 - 1) / 2);
        assert!(half_lattice(3, 2).iter().all(|k| k.iter().find(|&&c| c != 0).unwrap() > &0));
    }

    #[test]
    fn linear_band_observable_is_constant() {
        let f = PerturbedMap::<f64>::linear(IntMatrix::cat_map()).unwrap();
        let mu = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        let g = CocycleObservable::new(&f, ObservableKind::Band(1), mu).unwrap();
        for x in [[0.1, 0.2], [0.7, 0.3]] {
            assert!(g.centered(&x).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn manufactured_coboundary_is_recovered() {
        use crate::perturbation::Mode;
        let f = PerturbedMap::make_generic(
            IntMatrix::cat_map(),
            vec![Mode {
                k: vec![1, 0],
                c: vec![0.0, 1.0],
                phase: 0.0,
            }],
            0.01,
        )
        .unwrap();
        let phi0 = ScalarTrig::cosine(2, 0).scaled(0.3);
        let g = CocycleObservable::new(&f, ObservableKind::Manufactured(phi0.clone()), 0.5).unwrap();
        let obs = ObstructionReport {
            observable: g.tag(),
            lambda: 0.5,
            averages: vec![0.0],
            max_abs_average: 0.0,
            witness: 0,
            tolerance: 1e-6,
            pass: true,
        };
        let mut opts = SolveOptions::for_dim(2);
        opts.cutoff = 4;
        opts.sampling = Sampling::Grid { resolution: 32 };
        opts.propagation_steps = 200;
        let tf = solve_transfer(&g, &obs, &opts).unwrap();
        for x in [[0.1f64, 0.2], [0.77, 0.31], [0.5, 0.9]] {
            assert!((tf.eval(&x) - phi0.eval(&x)).abs() < 1e-6);
        }
        assert!(propagation_agrees(&tf));
    }

    #[test]
    fn cholesky_round_trip() {
        let a = Mat::<f64>::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        let x = chol_solve(&l, &[1.0, 2.0]);
        let r = a.mul_vec(&x);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14);
        let c = condition_estimate(&a, &l);
        let want = (7.0 + 5f64.sqrt()) / (7.0 - 5f64.sqrt());
        assert!((c - want).abs() < 1e-8);
    }
}
