//! One-dimensional band leaves, the conformal leaf metric `∫ e^{−φ}`, and the
//! leaf ODE that rebuilds a conjugacy from anchor pairs.
//!
//! Leaves are parametrized by the adapted length `s` with `ℓ_i(γ′) = 1`,
//! which keeps parameters comparable between a leaf and its image.

use serde::Serialize;

use super::{LivsicError, TransferFunction};
use crate::cocycle::estimate_splitting;
use crate::linalg;
use crate::perturbation::{torus_delta, torus_distance, wrap, PerturbedMap};
use crate::scalar::Real;

pub const DEFAULT_LEAF_STEP: f64 = 1e-3;

/// Integrates the normalized band direction field `e/ℓ(e)`.
pub struct LeafTracer<'a, T> {
    pub f: &'a PerturbedMap<T>,
    pub band: usize,
    pub covector: Vec<T>,
    pub step: T,
    pub horizon: usize,
    /// Largest transverse miss accepted when locating a point on a leaf.
    pub on_leaf_tolerance: T,
}

/// Polyline through a leaf with uniform parameter spacing.
#[derive(Clone, Debug, Serialize)]
pub struct LeafPath<T> {
    pub params: Vec<T>,
    /// Lifted coordinates, continuous along the path.
    pub points: Vec<Vec<T>>,
}

impl<T> LeafPath<T> {
    pub fn end(&self) -> &[T] {
        self.points.last().expect("non-empty path")
    }
}

impl<'a, T: Real> LeafTracer<'a, T> {
    pub fn new(f: &'a PerturbedMap<T>, band: usize) -> Result<Self, LivsicError> {
        let s = &f.analysis().spectral;
        if band >= s.dim() || s.covectors.is_empty() {
            return Err(LivsicError::BadBand(band));
        }
        Ok(Self {
            f,
            band,
            covector: s.covectors[band].iter().map(|&c| T::lit(c)).collect(),
            step: T::lit(DEFAULT_LEAF_STEP),
            horizon: 40 + 10 * s.dim(),
            on_leaf_tolerance: T::lit(1e-4),
        })
    }

    /// Band direction at `x`, scaled so that `ℓ(v) = 1`.
    pub fn direction(&self, x: &[T]) -> Result<Vec<T>, LivsicError> {
        if self.f.is_linear() {
            let e: Vec<T> = self.f.analysis().spectral.eigenvectors[self.band]
                .iter()
                .map(|&c| T::lit(c))
                .collect();
            let c = linalg::dot(&self.covector, &e);
            return Ok(e.iter().map(|&v| v / c).collect());
        }
        let split = estimate_splitting(self.f, &wrap(x), self.horizon)?;
        let e = &split.bands[self.band];
        let c = linalg::dot(&self.covector, e);
        if c.abs() < T::lit(1e-6) {
            return Err(LivsicError::LeafTracingFailed(format!(
                "band direction degenerate against covector at {x:?}"
            )));
        }
        Ok(e.iter().map(|&v| v / c).collect())
    }

    /// One RK4 step of adapted length `h`.
    pub fn rk4(&self, x: &[T], h: T) -> Result<Vec<T>, LivsicError> {
        let half = h / T::lit(2.0);
        let k1 = self.direction(x)?;
        let k2 = self.direction(&linalg::axpy(half, &k1, x))?;
        let k3 = self.direction(&linalg::axpy(half, &k2, x))?;
        let k4 = self.direction(&linalg::axpy(h, &k3, x))?;
        let six = T::lit(6.0);
        Ok(x
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                xi + h / six * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i])
            })
            .collect())
    }

    /// Leaf path from `x0` through signed adapted length `length` in `n` steps
    /// (`n` even, at least 2, step at most `self.step`).
    pub fn trace(&self, x0: &[T], length: T) -> Result<LeafPath<T>, LivsicError> {
        let mut n = (length.abs() / self.step).ceil().to_usize().unwrap_or(2).max(2);
        n += n % 2;
        let h = length / T::from_usize_lossy(n);
        let mut points = Vec::with_capacity(n + 1);
        let mut params = Vec::with_capacity(n + 1);
        let mut x = x0.to_vec();
        points.push(x.clone());
        params.push(T::zero());
        for k in 1..=n {
            x = self.rk4(&x, h)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(LivsicError::OdeStepFailure(format!("non-finite state at step {k}")));
            }
            points.push(x.clone());
            params.push(h * T::from_usize_lossy(k));
        }
        Ok(LeafPath { params, points })
    }

    /// Adapted parameter at which the leaf through `a` meets `b`.
    pub fn locate(&self, a: &[T], b: &[T]) -> Result<T, LivsicError> {
        // The leaf is a graph over its ℓ-coordinate, so Newton on the
        // ℓ-offset converges from the straight-line guess.
        let mut s = linalg::dot(&self.covector, &torus_delta(b, a));
        for _ in 0..6 {
            let end = self.trace(a, s)?;
            let miss = linalg::dot(&self.covector, &torus_delta(b, end.end()));
            s += miss;
            if miss.abs() < T::epsilon() * T::lit(64.0) {
                break;
            }
        }
        let end = self.trace(a, s)?;
        let gap = torus_distance(end.end(), b);
        if gap > self.on_leaf_tolerance {
            return Err(LivsicError::LeafTracingFailed(format!(
                "point misses the leaf by {gap:e}"
            )));
        }
        Ok(s)
    }
}

/// Composite Simpson rule on uniformly spaced samples (even interval count).
fn simpson<T: Real>(h: T, ys: &[T]) -> T {
    let n = ys.len() - 1;
    let mut acc = ys[0] + ys[n];
    for (i, &y) in ys.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) } * y;
    }
    acc * h / T::lit(3.0)
}

/// Leaf length weighted by `e^{−φ}`.
pub struct ConformalMetric<'a, T> {
    pub tracer: LeafTracer<'a, T>,
    pub phi: &'a TransferFunction<T>,
}

impl<'a, T: Real> ConformalMetric<'a, T> {
    pub fn new(tracer: LeafTracer<'a, T>, phi: &'a TransferFunction<T>) -> Self {
        Self { tracer, phi }
    }

    pub fn density(&self, x: &[T]) -> T {
        (-self.phi.eval(&wrap(x))).exp()
    }

    /// Signed `∫_0^s e^{−φ(γ)} ds` along the leaf from `a`.
    pub fn integrate(&self, a: &[T], s: T) -> Result<T, LivsicError> {
        let path = self.tracer.trace(a, s)?;
        let ys: Vec<T> = path.points.iter().map(|p| self.density(p)).collect();
        let h = path.params[1] - path.params[0];
        Ok(simpson(h, &ys))
    }

    /// `d(a, b)` for `b` on the leaf through `a`.
    pub fn distance(&self, a: &[T], b: &[T]) -> Result<T, LivsicError> {
        let s = self.tracer.locate(a, b)?;
        Ok(self.integrate(a, s)?.abs())
    }
}

pub fn conformal_distance<T: Real>(
    metric: &ConformalMetric<'_, T>,
    a: &[T],
    b: &[T],
) -> Result<T, LivsicError> {
    metric.distance(a, b)
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplicativityReport {
    pub pairs: usize,
    pub expected_factor: f64,
    /// `max |d(fa, fb) / d(a, b) − e^Λ| / e^Λ`.
    pub max_relative_error: f64,
}

/// Checks `d(f a, f b) = e^Λ d(a, b)` on leaf pairs `(a_j, a_j + δ)`.
pub fn multiplicativity_check<T: Real>(
    metric: &ConformalMetric<'_, T>,
    starts: &[Vec<T>],
    delta: T,
) -> Result<MultiplicativityReport, LivsicError> {
    let f = metric.tracer.f;
    let factor = metric.phi.lambda.exp();
    let mut worst = 0.0f64;
    for a in starts {
        let b = metric.tracer.trace(a, delta)?.end().to_vec();
        let d0 = metric.integrate(a, delta)?.abs();
        let (fa, fb) = (f.eval(a), f.eval(&wrap(&b)));
        let d1 = metric.distance(&fa, &fb)?;
        let ratio = (d1 / d0).to_f64_lossy();
        worst = worst.max((ratio - factor).abs() / factor);
    }
    Ok(MultiplicativityReport {
        pairs: starts.len(),
        expected_factor: factor,
        max_relative_error: worst,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LeafOdeComparison {
    pub samples: usize,
    /// `c = d(b₀, b₁) / |a₁ − a₀|_ℓ`.
    pub scale: f64,
    pub max_distance: f64,
    /// `(t, rebuilt point, reference point)`.
    pub rows: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

/// Rebuilds a leaf-conjugacy `h̃` from the anchors `a₀ ↦ b₀`, `a₁ ↦ b₁` by
/// integrating `z′ = c·e^{φ(z)}·e(z)/ℓ(e(z))`, where `a₁ = a₀ + t₁·v` runs
/// along the straight leaf of `L` with `ℓ(v) = 1`, and compares `h̃` with
/// `reference` at `samples` interior points.
pub fn leaf_ode_conjugacy<T: Real>(
    metric: &ConformalMetric<'_, T>,
    a0: &[T],
    t1: T,
    reference: &dyn Fn(&[T]) -> Vec<T>,
    samples: usize,
) -> Result<LeafOdeComparison, LivsicError> {
    let tr = &metric.tracer;
    let s = &tr.f.analysis().spectral;
    let mut v: Vec<T> = s.eigenvectors[tr.band].iter().map(|&c| T::lit(c)).collect();
    let c = linalg::dot(&tr.covector, &v);
    v.iter_mut().for_each(|x| *x /= c);
    let point = |t: T| wrap(&linalg::axpy(t, &v, a0));

    let b0 = reference(a0);
    let b1 = reference(&point(t1));
    let s1 = tr.locate(&b0, &b1)?;
    let scale = metric.integrate(&b0, s1)? / t1;

    // dz/dt = scale·e^{φ(z)}·(e/ℓ(e)), RK4 with leaf step ~ tr.step.
    let rhs = |z: &[T]| -> Result<Vec<T>, LivsicError> {
        let d = tr.direction(z)?;
        let w = scale * metric.phi.eval(&wrap(z)).exp();
        Ok(d.iter().map(|&x| w * x).collect())
    };
    let span = t1 / T::from_usize_lossy(samples + 1);
    let sub = ((span * scale).abs() / tr.step).ceil().to_usize().unwrap_or(1).max(1);
    let h = span / T::from_usize_lossy(sub);
    let half = h / T::lit(2.0);
    let mut z = b0.clone();
    let mut t = T::zero();
    let mut rows = Vec::with_capacity(samples);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        for _ in 0..sub {
            let k1 = rhs(&z)?;
            let k2 = rhs(&linalg::axpy(half, &k1, &z))?;
            let k3 = rhs(&linalg::axpy(half, &k2, &z))?;
            let k4 = rhs(&linalg::axpy(h, &k3, &z))?;
            for i in 0..z.len() {
                z[i] += h / T::lit(6.0) * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
            }
            if z.iter().any(|x| !x.is_finite()) {
                return Err(LivsicError::OdeStepFailure("non-finite leaf state".into()));
            }
        }
        t += span;
        let want = reference(&point(t));
        let got = wrap(&z);
        let dist = torus_distance(&got, &want).to_f64_lossy();
        worst = worst.max(dist);
        rows.push((
            t.to_f64_lossy(),
            got.iter().map(|x| x.to_f64_lossy()).collect(),
            want.iter().map(|x| x.to_f64_lossy()).collect(),
        ));
    }
    Ok(LeafOdeComparison {
        samples,
        scale: scale.to_f64_lossy(),
        max_distance: worst,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toral_linear::IntMatrix;

    #[test]
    fn linear_leaves_are_straight_and_metric_is_multiplicative() {
        let f = PerturbedMap::<f64>::linear(IntMatrix::cat_map()).unwrap();
        let tracer = LeafTracer::new(&f, 1).unwrap();
        let path = tracer.trace(&[0.1, 0.2], 0.05).unwrap();
        let v = &f.analysis().spectral.eigenvectors[1];
        let dev = linalg::distance_to_span(&linalg::sub(path.end(), &[0.1, 0.2]), &[v.clone()]);
        assert!(dev < 1e-12);
        let lam = f.analysis().spectral.exponents[1];
        let phi = TransferFunction::zero(2, "u".into(), lam);
        let m = ConformalMetric::new(tracer, &phi);
        let rep = multiplicativity_check(&m, &[vec![0.3, 0.4]], 0.02).unwrap();
        assert!(rep.max_relative_error < 1e-9, "{rep:?}");
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let ys: Vec<f64> = (0..=4).map(|i| (i as f64 * 0.25).powi(3)).collect();
        assert!((simpson(0.25, &ys) - 0.25).abs() < 1e-15);
    }
}
