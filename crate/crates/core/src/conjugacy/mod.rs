//! The conjugacy `h = id + u` with `h∘f = L∘h`, its reverse `h̄ = id + w`
//! with `f∘h̄ = h̄∘L`, the explicit skew-product series, and the regularity
//! estimator that separates the two rigidity regimes.

pub mod dyadic;
pub mod regularity;
pub mod skew;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cocycle::FieldGrid;
use crate::linalg;
use crate::perturbation::{torus_delta, torus_distance, wrap, PerturbationError, PerturbedMap};
use crate::scalar::Real;
use dyadic::DyadicOrbit;

pub use regularity::{
    estimate_regularity, rigidity_verdict, sample_line, weierstrass, LipschitzVerdict,
    RegularityEstimate, RigidityClass, RigidityVerdict,
};
pub use skew::{skew_series, SkewConjugacySeries};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ConjugacyError {
    #[error(transparent)]
    Map(#[from] PerturbationError),
    #[error("geometric series rate {rate} exceeds 0.999")]
    SeriesStalled { rate: f64 },
    #[error("conjugacy series needs a real simple spectrum")]
    NoRealSplitting,
    #[error("shadowing iteration did not converge (last change {change:e})")]
    ShadowingDiverged { change: f64 },
    #[error("need at least {need} dyadic scales, have {have}")]
    InsufficientScales { need: usize, have: usize },
    #[error("map is not a skew product")]
    NotSkew,
}

pub const DEFAULT_TAIL: f64 = 1e-10;
pub const STALL_RATE: f64 = 0.999;

/// One real eigen-direction of `L` with its series truncation.
#[derive(Clone, Debug, Serialize)]
pub struct BandSeries<T> {
    pub eigenvalue: T,
    pub eigenvector: Vec<T>,
    pub covector: Vec<T>,
    /// `1/|β|` for expanding bands, `|β|` for contracting ones.
    pub rate: f64,
    pub terms: usize,
    /// Bound on `|Σ_{k≥K} …| · ‖e_β‖`.
    pub tail: f64,
}

fn band_series<T: Real>(f: &PerturbedMap<T>, tail: f64) -> Result<Vec<BandSeries<T>>, ConjugacyError> {
    let s = &f.analysis().spectral;
    if s.covectors.is_empty() || !s.flags.real_spectrum || !s.flags.diagonalizable {
        return Err(ConjugacyError::NoRealSplitting);
    }
    let c0 = f.displacement().c0_bound().to_f64_lossy();
    (0..s.dim())
        .map(|i| {
            let beta = s.eigenvalues[i];
            let rate = if beta.abs() > 1.0 { 1.0 / beta.abs() } else { beta.abs() };
            if rate > STALL_RATE {
                return Err(ConjugacyError::SeriesStalled { rate });
            }
            let ev = &s.eigenvectors[i];
            let cv = &s.covectors[i];
            let amp = c0 * cv.iter().map(|c| c.abs()).sum::<f64>() * linalg::norm(ev);
            let bound = |k: usize| amp * rate.powi(k as i32) / (1.0 - rate);
            let terms = if amp == 0.0 {
                0
            } else {
                let k = ((tail / bound(0)).ln() / rate.ln()).ceil().max(1.0) as usize;
                k
            };
            Ok(BandSeries {
                eigenvalue: T::lit(beta),
                eigenvector: ev.iter().map(|&v| T::lit(v)).collect(),
                covector: cv.iter().map(|&v| T::lit(v)).collect(),
                rate,
                terms,
                tail: if amp == 0.0 { 0.0 } else { bound(terms) },
            })
        })
        .collect()
}

/// Band-wise geometric series for `u` and `w`.
pub struct Conjugacy<'a, T> {
    pub f: &'a PerturbedMap<T>,
    pub bands: Vec<BandSeries<T>>,
    /// Max Picard sweeps for the reverse direction.
    pub max_sweeps: usize,
}

impl<'a, T: Real> Conjugacy<'a, T> {
    pub fn new(f: &'a PerturbedMap<T>, tail: f64) -> Result<Self, ConjugacyError> {
        Ok(Self {
            f,
            bands: band_series(f, tail)?,
            max_sweeps: 200,
        })
    }

    /// Sum of the per-band tail bounds.
    pub fn tail_bound(&self) -> f64 {
        self.bands.iter().map(|b| b.tail).sum()
    }

    fn forward_len(&self) -> usize {
        self.bands
            .iter()
            .filter(|b| b.eigenvalue.abs() > T::one())
            .map(|b| b.terms)
            .max()
            .unwrap_or(0)
    }

    fn backward_len(&self) -> usize {
        self.bands
            .iter()
            .filter(|b| b.eigenvalue.abs() < T::one())
            .map(|b| b.terms)
            .max()
            .unwrap_or(0)
    }

    /// `N_β` values along the orbit `f^{−back}x, …, f^{fwd}x`.
    fn orbit_values(&self, x: &[T], back: usize, fwd: usize) -> Result<Vec<Vec<T>>, ConjugacyError> {
        let f = self.f;
        let proj = |y: &[T]| -> Vec<T> {
            let n = f.nonlinearity(y);
            self.bands.iter().map(|b| linalg::dot(&b.covector, &n)).collect()
        };
        let mut past = Vec::with_capacity(back);
        let mut y = wrap(x);
        for _ in 0..back {
            y = f.inverse_eval(&y)?;
            past.push(proj(&y));
        }
        let mut out: Vec<Vec<T>> = past.into_iter().rev().collect();
        let mut y = wrap(x);
        out.push(proj(&y));
        for _ in 0..fwd {
            y = f.eval(&y);
            out.push(proj(&y));
        }
        Ok(out)
    }

    /// `u` at orbit index `i` of `orbit_values`.
    fn series_at(&self, ns: &[Vec<T>], i: usize) -> Vec<T> {
        let mut u = vec![T::zero(); self.f.dim()];
        for (bi, b) in self.bands.iter().enumerate() {
            let beta = b.eigenvalue;
            let mut s = T::zero();
            if beta.abs() > T::one() {
                // Horner from the far end keeps the small terms first.
                for n in ns[i..i + b.terms].iter().rev() {
                    s = (s + n[bi]) / beta;
                }
            } else {
                for n in &ns[i - b.terms..i] {
                    s = s * beta + n[bi];
                }
                s = -s;
            }
            u = linalg::axpy(s, &b.eigenvector, &u);
        }
        u
    }

    /// `u(x)` with `h = id + u`: `u_β = Σ_{k≥0} β^{−(k+1)} N_β(f^k x)` for
    /// `|β| > 1` and `u_β = −Σ_{k≥1} β^{k−1} N_β(f^{−k} x)` for `|β| < 1`.
    pub fn displacement(&self, x: &[T]) -> Result<Vec<T>, ConjugacyError> {
        if self.f.is_linear() {
            return Ok(vec![T::zero(); self.f.dim()]);
        }
        let (nf, nb) = (self.forward_len(), self.backward_len());
        let ns = self.orbit_values(x, nb, nf)?;
        Ok(self.series_at(&ns, nb))
    }

    /// `(u(x), u(f x))` from one shared orbit.
    pub fn displacement_pair(&self, x: &[T]) -> Result<(Vec<T>, Vec<T>), ConjugacyError> {
        let d = self.f.dim();
        if self.f.is_linear() {
            return Ok((vec![T::zero(); d], vec![T::zero(); d]));
        }
        let (nf, nb) = (self.forward_len(), self.backward_len());
        let ns = self.orbit_values(x, nb, nf + 1)?;
        Ok((self.series_at(&ns, nb), self.series_at(&ns, nb + 1)))
    }

    /// `h(x) = x + u(x)` on the torus.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, ConjugacyError> {
        let u = self.displacement(x)?;
        Ok(wrap(&x.iter().zip(&u).map(|(&a, &b)| a + b).collect::<Vec<_>>()))
    }

    /// `w(x)` with `f∘h̄ = h̄∘L`, `h̄ = id + w`: the true `f`-orbit shadowing
    /// the exact `L`-orbit of `x` (Picard sweeps, unstable parts from the
    /// future and stable parts from the past).
    pub fn reverse_displacement(&self, x: &[T]) -> Result<Vec<T>, ConjugacyError> {
        let f = self.f;
        let d = f.dim();
        if f.is_linear() {
            return Ok(vec![T::zero(); d]);
        }
        let ku = self.forward_len();
        let ks = self.backward_len();
        let len = ks + ku + 1;
        let xs: Vec<Vec<T>> = DyadicOrbit::new(f.linear_part(), x).segment(ks, ku);
        // Band coordinates c[j][β] of w at orbit index j.
        let nb = self.bands.len();
        let mut c = vec![vec![T::zero(); nb]; len];
        let to_w = |cj: &[T]| {
            let mut w = vec![T::zero(); d];
            for (b, &v) in self.bands.iter().zip(cj) {
                w = linalg::axpy(v, &b.eigenvector, &w);
            }
            w
        };
        let tol = T::epsilon() * T::lit(16.0);
        let mut change = T::infinity();
        for _ in 0..self.max_sweeps {
            let ns: Vec<Vec<T>> = (0..len)
                .map(|j| {
                    let w = to_w(&c[j]);
                    let z: Vec<T> = xs[j].iter().zip(&w).map(|(&a, &b)| a + b).collect();
                    let n = f.nonlinearity(&z);
                    self.bands.iter().map(|b| linalg::dot(&b.covector, &n)).collect()
                })
                .collect();
            let mut next = vec![vec![T::zero(); nb]; len];
            for (bi, b) in self.bands.iter().enumerate() {
                let beta = b.eigenvalue;
                if beta.abs() > T::one() {
                    for j in (0..len - 1).rev() {
                        next[j][bi] = (next[j + 1][bi] - ns[j][bi]) / beta;
                    }
                } else {
                    for j in 0..len - 1 {
                        next[j + 1][bi] = beta * next[j][bi] + ns[j][bi];
                    }
                }
            }
            change = next[ks]
                .iter()
                .zip(&c[ks])
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max);
            c = next;
            if change <= tol {
                return Ok(to_w(&c[ks]));
            }
        }
        Err(ConjugacyError::ShadowingDiverged {
            change: change.to_f64_lossy(),
        })
    }

    /// `h̄(x) = x + w(x)` on the torus.
    pub fn reverse(&self, x: &[T]) -> Result<Vec<T>, ConjugacyError> {
        let w = self.reverse_displacement(x)?;
        Ok(wrap(&x.iter().zip(&w).map(|(&a, &b)| a + b).collect::<Vec<_>>()))
    }

    /// `‖h(f x) − L h(x)‖` on the torus.
    pub fn forward_residual(&self, x: &[T]) -> Result<T, ConjugacyError> {
        Ok(self.residual_from_pair(x, &self.displacement_pair(x)?))
    }

    fn residual_from_pair(&self, x: &[T], (u, ufx): &(Vec<T>, Vec<T>)) -> T {
        let x = wrap(x);
        let fx = self.f.eval(&x);
        let lhs: Vec<T> = fx.iter().zip(ufx).map(|(&a, &b)| a + b).collect();
        let hx: Vec<T> = x.iter().zip(u).map(|(&a, &b)| a + b).collect();
        torus_distance(&lhs, &self.f.l().mul_vec(&hx))
    }

    /// `‖f(h̄ x) − h̄(L x)‖` on the torus.
    pub fn reverse_residual(&self, x: &[T]) -> Result<T, ConjugacyError> {
        let lhs = self.f.eval(&self.reverse(x)?);
        let lx = DyadicOrbit::new(self.f.linear_part(), x).point::<T>(1);
        let rhs = self.reverse(&lx)?;
        Ok(torus_distance(&lhs, &rhs))
    }
}

/// Grid samples of `u` with the functional-equation residual.
#[derive(Clone, Debug, Serialize)]
pub struct ConjugacyField<T> {
    pub resolution: usize,
    pub points: Vec<Vec<T>>,
    pub displacement: Vec<Vec<T>>,
    pub terms: Vec<usize>,
    pub tail_bound: f64,
    /// `sup ‖h(f x) − L h(x)‖` over the grid.
    pub residual: f64,
    pub sup_norm: f64,
    /// `max ‖u(x + v) − u(x)‖` over unit lattice shifts at sample points.
    pub periodicity_defect: f64,
}

impl<T: Real> ConjugacyField<T> {
    pub fn to_csv(&self) -> String {
        let d = self.points.first().map_or(0, Vec::len);
        let mut s = String::new();
        let xs: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        let us: Vec<String> = (1..=d).map(|i| format!("u{i}")).collect();
        s.push_str(&format!("{},{}\n", xs.join(","), us.join(",")));
        for (p, u) in self.points.iter().zip(&self.displacement) {
            let a: Vec<String> = p.iter().map(|v| format!("{v:.8}")).collect();
            let b: Vec<String> = u.iter().map(|v| format!("{v:.12e}")).collect();
            s.push_str(&format!("{},{}\n", a.join(","), b.join(",")));
        }
        s
    }
}

/// Solves `h∘f = L∘h` on a grid and reports the residual.
pub fn solve_conjugacy<T: Real>(
    f: &PerturbedMap<T>,
    grid: &FieldGrid,
    tail: f64,
) -> Result<ConjugacyField<T>, ConjugacyError> {
    let c = Conjugacy::new(f, tail)?;
    let points = grid.points::<T>();
    let rows = points
        .par_iter()
        .map(|x| {
            let pair = c.displacement_pair(x)?;
            let r = c.residual_from_pair(x, &pair);
            Ok((pair.0, r.to_f64_lossy()))
        })
        .collect::<Result<Vec<_>, ConjugacyError>>()?;
    let residual = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let sup_norm = rows
        .iter()
        .map(|r| linalg::norm(&r.0).to_f64_lossy())
        .fold(0.0, f64::max);
    let mut defect = 0.0f64;
    for x in points.iter().step_by((points.len() / 16).max(1)) {
        let u0 = c.displacement(x)?;
        for i in 0..f.dim() {
            let mut xs = x.clone();
            xs[i] += T::one();
            let f_lift = c.displacement(&xs)?;
            defect = defect.max(linalg::norm(&linalg::sub(&f_lift, &u0)).to_f64_lossy());
        }
    }
    Ok(ConjugacyField {
        resolution: grid.resolution,
        displacement: rows.into_iter().map(|r| r.0).collect(),
        points,
        terms: c.bands.iter().map(|b| b.terms).collect(),
        tail_bound: c.tail_bound(),
        residual,
        sup_norm,
        periodicity_defect: defect,
    })
}

/// `max ‖h̄(h(x)) − x‖` over `points`.
pub fn inverse_consistency<T: Real>(
    c: &Conjugacy<'_, T>,
    points: &[Vec<T>],
) -> Result<f64, ConjugacyError> {
    let worst = points
        .par_iter()
        .map(|x| {
            let y = c.reverse(&c.forward(x)?)?;
            Ok(linalg::norm(&torus_delta(&y, x)).to_f64_lossy())
        })
        .collect::<Result<Vec<f64>, ConjugacyError>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::Mode;
    use crate::toral_linear::IntMatrix;

    fn generic(eps: f64) -> PerturbedMap<f64> {
        PerturbedMap::make_generic(
            IntMatrix::cat_map(),
            vec![Mode {
                k: vec![1, 0],
                c: vec![0.0, 1.0],
                phase: 0.0,
            }],
            eps,
        )
        .unwrap()
    }

    #[test]
    fn linear_map_has_zero_displacement() {
        let f = PerturbedMap::<f64>::linear(IntMatrix::cat_map()).unwrap();
        let c = Conjugacy::new(&f, DEFAULT_TAIL).unwrap();
        assert_eq!(c.displacement(&[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(c.reverse_displacement(&[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_and_reverse_solve_their_equations() {
        let f = generic(0.01);
        let c = Conjugacy::new(&f, DEFAULT_TAIL).unwrap();
        for x in [[0.1, 0.2], [0.73, 0.41], [0.5, 0.95]] {
            assert!(c.forward_residual(&x).unwrap() < 1e-9);
            assert!(c.reverse_residual(&x).unwrap() < 1e-9);
        }
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![0.1 * i as f64 + 0.03, 0.37]).collect();
        assert!(inverse_consistency(&c, &pts).unwrap() < 1e-9);
    }

    #[test]
    fn displacement_is_lattice_periodic() {
        let f = generic(0.01);
        let field = solve_conjugacy(&f, &FieldGrid::full(2, 8), DEFAULT_TAIL).unwrap();
        assert!(field.periodicity_defect < 1e-10, "{}", field.periodicity_defect);
        assert!(field.residual < 1e-9);
    }
}
