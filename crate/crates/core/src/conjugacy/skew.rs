//! Closed-form conjugacy of the skew family `(Aⁿx, Bᵐy + ψ(x)e_u)`.
//!
//! `η(x) = −Σ_{k≥0} λ^{−m(k+1)} ψ(A^{nk}x)` solves `η(Aⁿx) = λᵐη(x) + ψ(x)`,
//! so `H(x, y) = (x, y + η(x)e_u)` satisfies `f∘H = H∘L` and the forward
//! conjugacy is `h(x, y) = (x, y − η(x)e_u)`.

use serde::Serialize;

use super::dyadic::DyadicOrbit;
use super::{ConjugacyError, DEFAULT_TAIL};
use crate::perturbation::{wrap, PerturbedMap, ScalarTrig};
use crate::scalar::Real;
use crate::toral_linear::IntMatrix;

#[derive(Clone, Debug, Serialize)]
pub struct SkewConjugacySeries {
    /// `Aⁿ`.
    pub base: IntMatrix,
    pub psi: ScalarTrig,
    /// `λᵐ`.
    pub rate: f64,
    pub e_u: Vec<f64>,
    pub dim_x: usize,
    pub terms: usize,
    /// `λ^{−mK}‖ψ‖_∞ / (λᵐ − 1)`.
    pub tail_bound: f64,
}

/// Builds the series with `terms` terms, or by the tail rule (< 1e−10) when
/// `terms` is `None`.
pub fn skew_series<T: Real>(
    f: &PerturbedMap<T>,
    terms: Option<usize>,
) -> Result<SkewConjugacySeries, ConjugacyError> {
    let sk = f.skew().ok_or(ConjugacyError::NotSkew)?;
    let rate = sk.fiber_rate().abs();
    let sup = sk.psi.sup_bound();
    let tail = |k: usize| rate.powi(-(k as i32)) * sup / (rate - 1.0);
    let terms = terms.unwrap_or_else(|| {
        if sup == 0.0 {
            0
        } else {
            ((tail(0) / DEFAULT_TAIL).ln() / rate.ln()).ceil().max(1.0) as usize
        }
    });
    Ok(SkewConjugacySeries {
        base: sk.a.pow(sk.n),
        psi: sk.psi.clone(),
        rate: sk.fiber_rate(),
        e_u: sk.e_u.clone(),
        dim_x: sk.dim_x(),
        terms,
        tail_bound: tail(terms),
    })
}

impl SkewConjugacySeries {
    /// `η(x)` over the base torus, with the `Aⁿ`-orbit computed exactly.
    pub fn eta<T: Real>(&self, x: &[T]) -> T {
        if self.terms == 0 {
            return T::zero();
        }
        let orbit: Vec<Vec<T>> = DyadicOrbit::new(&self.base, x).segment(0, self.terms - 1);
        let r = T::lit(self.rate);
        let mut s = T::zero();
        for p in orbit.iter().rev() {
            s = (s + self.psi.eval(p)) / r;
        }
        -s
    }

    /// `|η(Aⁿx) − λᵐη(x) − ψ(x)|`.
    pub fn functional_residual<T: Real>(&self, x: &[T]) -> T {
        let ax: Vec<T> = DyadicOrbit::new(&self.base, x).point(1);
        let x0: Vec<T> = DyadicOrbit::new(&self.base, x).start();
        (self.eta(&ax) - T::lit(self.rate) * self.eta(&x0) - self.psi.eval(&x0)).abs()
    }

    /// Rounding allowance for the residual check: a few ulps of each term.
    pub fn rounding_floor(&self) -> f64 {
        let sup = self.psi.sup_bound();
        64.0 * f64::EPSILON * (sup + self.rate.abs() * sup / (self.rate.abs() - 1.0))
    }

    /// Allowed functional residual. Truncation leaves exactly
    /// `λ^{−mK}ψ(A^{nK}x)` in the equation, which is `(λᵐ − 1)` times the tail
    /// bound at worst; rounding comes on top.
    pub fn residual_bound(&self) -> f64 {
        self.tail_bound * (self.rate.abs() - 1.0) + self.rounding_floor()
    }

    /// Max residual over `points` and whether it respects [`Self::residual_bound`].
    pub fn check_residual<T: Real>(&self, points: &[Vec<T>]) -> (f64, bool) {
        let worst = points
            .iter()
            .map(|p| self.functional_residual(&p[..self.dim_x]).to_f64_lossy())
            .fold(0.0, f64::max);
        (worst, worst <= self.residual_bound())
    }

    /// Worst-case error of the same series when the base orbit is iterated
    /// in floating point instead of exactly. A base error of `c·u·gᵏ` at step
    /// `k` moves term `k` by at most `Lip ψ` times that, and never by more
    /// than `2‖ψ‖`. `base_growth` is `|μ|ⁿ`.
    pub fn float_orbit_allowance(&self, base_growth: f64) -> f64 {
        let sup = self.psi.sup_bound();
        let lip: f64 = self
            .psi
            .terms
            .iter()
            .map(|(k, a, _)| std::f64::consts::TAU * a.abs() * k.iter().map(|x| x.abs() as f64).sum::<f64>())
            .sum();
        let r = self.rate.abs();
        (0..self.terms)
            .map(|k| {
                let drift = 8.0 * f64::EPSILON * base_growth.powi(k as i32);
                r.powi(-(k as i32 + 1)) * (lip * drift).min(2.0 * sup)
            })
            .sum()
    }

    fn shift<T: Real>(&self, z: &[T], sign: T) -> Vec<T> {
        let e = self.eta(&z[..self.dim_x]) * sign;
        let mut out = z.to_vec();
        for (j, &c) in self.e_u.iter().enumerate() {
            out[self.dim_x + j] += e * T::lit(c);
        }
        wrap(&out)
    }

    /// `h(x, y) = (x, y − η(x)e_u)`, with `h∘f = L∘h`.
    pub fn forward<T: Real>(&self, z: &[T]) -> Vec<T> {
        self.shift(z, -T::one())
    }

    /// `H(x, y) = (x, y + η(x)e_u)`, with `f∘H = H∘L`.
    pub fn reverse<T: Real>(&self, z: &[T]) -> Vec<T> {
        self.shift(z, T::one())
    }

    /// Forward displacement `u = −η·e_u` (zero in the base block).
    pub fn displacement<T: Real>(&self, z: &[T]) -> Vec<T> {
        let e = self.eta(&z[..self.dim_x]);
        let mut u = vec![T::zero(); z.len()];
        for (j, &c) in self.e_u.iter().enumerate() {
            u[self.dim_x + j] = -e * T::lit(c);
        }
        u
    }

    /// `η` on a `resolution^{d_x}` grid of the base, as CSV.
    pub fn eta_csv(&self, resolution: usize) -> String {
        let mut s = String::new();
        let xs: Vec<String> = (1..=self.dim_x).map(|i| format!("x{i}")).collect();
        s.push_str(&format!("{},eta\n", xs.join(",")));
        for p in crate::cocycle::FieldGrid::full(self.dim_x, resolution).points::<f64>() {
            let c: Vec<String> = p.iter().map(|v| format!("{v:.8}")).collect();
            s.push_str(&format!("{},{:.12e}\n", c.join(","), self.eta(&p)));
        }
        s
    }
}
