//! Smooth perturbations `f = L + u` of a toral automorphism, with closed-form
//! derivatives, an Anosov certificate, and the skew-product family
//! `f(x, y) = (Aⁿx, Bᵐy + ψ(x)·e_u)`.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, Mat};
use crate::scalar::Real;
use crate::toral_linear::{analyze, IntMatrix, LinearAnalysis, LinearError};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PerturbationError {
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error("perturbation too large: ‖Du‖ = {norm:.6} violates {violated} (bound {bound:.6})")]
    PerturbationTooLarge {
        norm: f64,
        bound: f64,
        violated: &'static str,
    },
    #[error("diag(Aⁿ, Bᵐ) has repeated eigenvalue moduli")]
    SpectrumClash,
    #[error("Newton inversion did not converge (residual {residual:e})")]
    NewtonDiverged { residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// One Fourier mode `c · cos(2π⟨k, x⟩ + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mode<T> {
    pub k: Vec<i64>,
    pub c: Vec<T>,
    pub phase: T,
}

/// Vector-valued trigonometric polynomial on `T^d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrigDisplacement<T> {
    dim: usize,
    modes: Vec<Mode<T>>,
}

impl<T: Real> TrigDisplacement<T> {
    pub fn new(dim: usize, modes: Vec<Mode<T>>) -> Result<Self, PerturbationError> {
        for m in &modes {
            for len in [m.k.len(), m.c.len()] {
                if len != dim {
                    return Err(PerturbationError::DimensionMismatch {
                        expected: dim,
                        got: len,
                    });
                }
            }
        }
        Ok(Self { dim, modes })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            modes: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[Mode<T>] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.c.iter().all(|c| c.is_zero()))
    }

    pub fn scaled(&self, eps: T) -> Self {
        Self {
            dim: self.dim,
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    k: m.k.clone(),
                    c: m.c.iter().map(|&c| c * eps).collect(),
                    phase: m.phase,
                })
                .collect(),
        }
    }

    #[inline]
    fn angle(m: &Mode<T>, x: &[T]) -> T {
        let s = m
            .k
            .iter()
            .zip(x)
            .fold(T::zero(), |acc, (&k, &xi)| acc + T::from_i64(k).unwrap() * xi);
        T::two_pi() * s + m.phase
    }

    pub fn eval(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for m in &self.modes {
            let cs = Self::angle(m, x).cos();
            for (o, &c) in out.iter_mut().zip(&m.c) {
                *o += c * cs;
            }
        }
        out
    }

    /// `Du(x)_{ij} = −Σ c_i · 2π k_j · sin(2π⟨k,x⟩ + phase)`.
    pub fn jacobian(&self, x: &[T]) -> Mat<T> {
        let d = self.dim;
        let mut out = Mat::zeros(d, d);
        for m in &self.modes {
            let sn = -Self::angle(m, x).sin() * T::two_pi();
            for i in 0..d {
                if m.c[i].is_zero() {
                    continue;
                }
                for j in 0..d {
                    if m.k[j] != 0 {
                        out[(i, j)] += m.c[i] * T::from_i64(m.k[j]).unwrap() * sn;
                    }
                }
            }
        }
        out
    }

    /// Upper bound `Σ 2π |k| |c|` for `sup ‖Du‖`.
    pub fn c1_bound(&self) -> T {
        self.modes
            .iter()
            .map(|m| {
                let k: Vec<T> = m.k.iter().map(|&k| T::from_i64(k).unwrap()).collect();
                T::two_pi() * linalg::norm(&k) * linalg::norm(&m.c)
            })
            .sum()
    }

    /// Upper bound `Σ |c|` for `sup ‖u‖`.
    pub fn c0_bound(&self) -> T {
        self.modes.iter().map(|m| linalg::norm(&m.c)).sum()
    }
}

/// Scalar trigonometric polynomial `Σ a cos(2π⟨k,x⟩ + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalarTrig {
    pub dim: usize,
    /// `(k, amplitude, phase)`
    pub terms: Vec<(Vec<i64>, f64, f64)>,
}

impl ScalarTrig {
    /// `cos(2π x_axis)` on `T^dim`.
    pub fn cosine(dim: usize, axis: usize) -> Self {
        let mut k = vec![0; dim];
        k[axis] = 1;
        Self {
            dim,
            terms: vec![(k, 1.0, 0.0)],
        }
    }

    pub fn eval<T: Real>(&self, x: &[T]) -> T {
        self.terms
            .iter()
            .map(|(k, a, ph)| {
                let s = k
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&k, &xi)| acc + T::from_i64(k).unwrap() * xi);
                T::lit(*a) * (T::two_pi() * s + T::lit(*ph)).cos()
            })
            .sum()
    }

    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.1.abs()).sum()
    }

    pub fn mean(&self) -> f64 {
        self.terms
            .iter()
            .filter(|(k, _, _)| k.iter().all(|&x| x == 0))
            .map(|(_, a, ph)| a * ph.cos())
            .sum()
    }

    pub fn scaled(&self, eps: f64) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(k, a, p)| (k.clone(), a * eps, *p))
                .collect(),
        }
    }
}

/// Parameters of `f(x, y) = (Aⁿx, Bᵐy + ψ(x)·e_u)`.
#[derive(Clone, Debug, Serialize)]
pub struct SkewProduct {
    pub a: IntMatrix,
    pub b: IntMatrix,
    pub n: u32,
    pub m: u32,
    /// ψ with ε already applied.
    pub psi: ScalarTrig,
    pub epsilon: f64,
    /// Unit eigenvector of `B` for `λ`.
    pub e_u: Vec<f64>,
    /// Expanding eigenvalue of `B`.
    pub lambda: f64,
    /// Expanding eigenvalue of `A`.
    pub mu: f64,
    /// `n·log|μ| / (m·log|λ|)`, the critical exponent formula as stated for
    /// this family.
    pub predicted_exponent: f64,
    /// `min(1, m·log|λ| / (n·log|μ|))`, the Hölder exponent of the series η.
    pub series_exponent: f64,
}

impl SkewProduct {
    pub fn dim_x(&self) -> usize {
        self.a.dim()
    }

    pub fn dim_y(&self) -> usize {
        self.b.dim()
    }

    /// `λᵐ`, the factor in `η(Aⁿx) = λᵐ η(x) + ψ(x)`.
    pub fn fiber_rate(&self) -> f64 {
        self.lambda.powi(self.m as i32)
    }
}

/// Result of the cone-field certificate. `Du` is the perturbation derivative;
/// `κ` is the condition number of `L`'s eigenbasis.
#[derive(Clone, Debug, Serialize)]
pub struct AnosovCertificate {
    pub displacement_c1: f64,
    pub eigenbasis_condition: f64,
    /// Smallest unstable and largest stable eigenvalue modulus of `L`.
    pub weakest_expansion: f64,
    pub weakest_contraction: f64,
    pub sigma_min: f64,
    /// Largest admissible `‖Du‖` under every constraint.
    pub max_displacement_c1: f64,
    /// `max_displacement_c1 − displacement_c1`.
    pub margin: f64,
}

fn certify(
    analysis: &LinearAnalysis,
    l: &Mat<f64>,
    c1: f64,
) -> Result<AnosovCertificate, PerturbationError> {
    let s = &analysis.spectral;
    let a = s.moduli[s.stable_count];
    let b = s.moduli[s.stable_count - 1];
    let sigma_min = l.min_singular_value().unwrap_or(0.0);
    let kappa = if c1 == 0.0 {
        1.0
    } else {
        if !s.flags.diagonalizable {
            return Err(PerturbationError::Linear(LinearError::NoRealSplitting));
        }
        let p = s.eigenbasis();
        let pinv = p.inverse().ok_or(LinearError::NoRealSplitting)?;
        p.op_norm() * pinv.op_norm()
    };
    let r2 = std::f64::consts::SQRT_2;
    // In eigen-coordinates Df = diag(β) + E with ‖E‖ ≤ κ‖Du‖ =: δ. The
    // unit-slope cones around E^u and E^s are invariant and expanded/
    // contracted when  b + √2δ ≤ a − √2δ,  a − √2δ > 1,  b + √2δ < 1.
    let constraints = [
        ((a - b) / (2.0 * r2 * kappa), "cone invariance b + √2δ ≤ a − √2δ"),
        ((a - 1.0) / (r2 * kappa), "unstable expansion a − √2δ > 1"),
        ((1.0 - b) / (r2 * kappa), "stable contraction b + √2δ < 1"),
        (sigma_min, "invertibility ‖Du‖ < σ_min(L)"),
    ];
    let (bound, violated) = constraints
        .iter()
        .copied()
        .fold((f64::INFINITY, ""), |acc, c| if c.0 < acc.0 { c } else { acc });
    if c1 >= bound {
        return Err(PerturbationError::PerturbationTooLarge {
            norm: c1,
            bound,
            violated,
        });
    }
    Ok(AnosovCertificate {
        displacement_c1: c1,
        eigenbasis_condition: kappa,
        weakest_expansion: a,
        weakest_contraction: b,
        sigma_min,
        max_displacement_c1: bound,
        margin: bound - c1,
    })
}

/// Jacobian `Df(x)` at a base point.
#[derive(Clone, Debug)]
pub struct JacobianSample<T> {
    pub x: Vec<T>,
    pub df: Mat<T>,
}

/// `f = L + u` on `T^d`, with lift `F(x) = Lx + u(x)`.
#[derive(Clone, Debug)]
pub struct PerturbedMap<T> {
    linear: IntMatrix,
    analysis: LinearAnalysis,
    l: Mat<T>,
    l_inv: Mat<T>,
    displacement: TrigDisplacement<T>,
    skew: Option<SkewProduct>,
    certificate: AnosovCertificate,
}

fn integer_inverse<T: Real>(l: &IntMatrix) -> Mat<T> {
    // |det| = 1, so the inverse is integral; round the f64 inverse.
    let inv = l
        .to_mat::<f64>()
        .inverse()
        .expect("unimodular matrix is invertible");
    Mat::from_fn(l.dim(), l.dim(), |i, j| T::lit(inv[(i, j)].round()))
}

/// Reduces every coordinate into [0, 1).
pub fn wrap<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| wrap1(v)).collect()
}

#[inline]
pub fn wrap1<T: Real>(v: T) -> T {
    let w = v - v.floor();
    if w >= T::one() {
        T::zero()
    } else {
        w
    }
}

/// Difference `a − b` reduced to the nearest lattice translate, coordinates in [−½, ½].
pub fn torus_delta<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d - d.round()
        })
        .collect()
}

/// Quotient metric `min_{v ∈ ℤ^d} |a − b − v|`.
pub fn torus_distance<T: Real>(a: &[T], b: &[T]) -> T {
    linalg::norm(&torus_delta(a, b))
}

impl<T: Real> PerturbedMap<T> {
    /// `f = L` exactly.
    pub fn linear(l: IntMatrix) -> Result<Self, PerturbationError> {
        let d = l.dim();
        Self::build(l, TrigDisplacement::zero(d), None)
    }

    /// `f = L + ε·u` for the given modes, certified Anosov.
    pub fn make_generic(
        l: IntMatrix,
        modes: Vec<Mode<T>>,
        epsilon: T,
    ) -> Result<Self, PerturbationError> {
        let disp = TrigDisplacement::new(l.dim(), modes)?.scaled(epsilon);
        Self::build(l, disp, None)
    }

    /// The skew product `(x, y) ↦ (Aⁿx, Bᵐy + ε·ψ(x)·e_u)` on `T^{dA + dB}`.
    pub fn make_counterexample(
        a: IntMatrix,
        b: IntMatrix,
        n: u32,
        m: u32,
        psi: ScalarTrig,
        epsilon: f64,
    ) -> Result<Self, PerturbationError> {
        let (da, db) = (a.dim(), b.dim());
        if psi.dim != da {
            return Err(PerturbationError::DimensionMismatch {
                expected: da,
                got: psi.dim,
            });
        }
        let an = analyze(&a)?;
        let bn = analyze(&b)?;
        if !an.spectral.flags.diagonalizable || !bn.spectral.flags.diagonalizable {
            return Err(LinearError::NoRealSplitting.into());
        }
        let big_l = a.pow(n).block_diag(&b.pow(m));
        let ln = analyze(&big_l)?;
        if !ln.spectral.flags.distinct_modulus {
            return Err(PerturbationError::SpectrumClash);
        }
        let top = |s: &LinearAnalysis| {
            let d = s.spectral.dim();
            (s.spectral.eigenvalues[d - 1], s.spectral.eigenvectors[d - 1].clone())
        };
        let (mu, _) = top(&an);
        let (lambda, e_u) = top(&bn);
        let psi = psi.scaled(epsilon);
        let modes = psi
            .terms
            .iter()
            .map(|(k, amp, ph)| {
                let mut kk = k.clone();
                kk.extend(std::iter::repeat(0).take(db));
                let mut c = vec![T::zero(); da];
                c.extend(e_u.iter().map(|&e| T::lit(amp * e)));
                Mode {
                    k: kk,
                    c,
                    phase: T::lit(*ph),
                }
            })
            .collect();
        let disp = TrigDisplacement::new(da + db, modes)?;
        let ratio = (n as f64 * mu.abs().ln()) / (m as f64 * lambda.abs().ln());
        let skew = SkewProduct {
            a,
            b,
            n,
            m,
            psi,
            epsilon,
            e_u,
            lambda,
            mu,
            predicted_exponent: ratio,
            series_exponent: (1.0 / ratio).min(1.0),
        };
        Self::build(big_l, disp, Some(skew))
    }

    fn build(
        l: IntMatrix,
        displacement: TrigDisplacement<T>,
        skew: Option<SkewProduct>,
    ) -> Result<Self, PerturbationError> {
        let analysis = analyze(&l)?;
        let c1 = if displacement.is_zero() {
            0.0
        } else {
            displacement.c1_bound().to_f64_lossy()
        };
        let certificate = certify(&analysis, &l.to_mat(), c1)?;
        Ok(Self {
            l: l.to_mat(),
            l_inv: integer_inverse(&l),
            linear: l,
            analysis,
            displacement,
            skew,
            certificate,
        })
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    pub fn linear_part(&self) -> &IntMatrix {
        &self.linear
    }

    pub fn analysis(&self) -> &LinearAnalysis {
        &self.analysis
    }

    pub fn l(&self) -> &Mat<T> {
        &self.l
    }

    pub fn l_inv(&self) -> &Mat<T> {
        &self.l_inv
    }

    pub fn displacement(&self) -> &TrigDisplacement<T> {
        &self.displacement
    }

    pub fn skew(&self) -> Option<&SkewProduct> {
        self.skew.as_ref()
    }

    pub fn certificate(&self) -> &AnosovCertificate {
        &self.certificate
    }

    pub fn is_linear(&self) -> bool {
        self.displacement.is_zero()
    }

    /// `N(x) = F(x) − Lx = u(x)`.
    pub fn nonlinearity(&self, x: &[T]) -> Vec<T> {
        self.displacement.eval(x)
    }

    pub fn lift_eval(&self, x: &[T]) -> Vec<T> {
        let lx = self.l.mul_vec(x);
        if self.is_linear() {
            return lx;
        }
        let u = self.displacement.eval(x);
        lx.iter().zip(&u).map(|(&a, &b)| a + b).collect()
    }

    pub fn eval(&self, x: &[T]) -> Vec<T> {
        wrap(&self.lift_eval(&wrap(x)))
    }

    pub fn df(&self, x: &[T]) -> Mat<T> {
        if self.is_linear() {
            return self.l.clone();
        }
        self.l.add(&self.displacement.jacobian(x))
    }

    pub fn jacobian(&self, x: &[T]) -> JacobianSample<T> {
        JacobianSample {
            x: x.to_vec(),
            df: self.df(x),
        }
    }

    fn newton_tolerance() -> T {
        T::lit(1e-13).max(T::epsilon() * T::lit(64.0))
    }

    /// Solves `F(x) = y` on the lift (F is a diffeomorphism of ℝ^d).
    pub fn lift_inverse(&self, y: &[T]) -> Result<Vec<T>, PerturbationError> {
        let mut x = self.l_inv.mul_vec(y);
        if self.is_linear() {
            return Ok(x);
        }
        let tol = Self::newton_tolerance() * T::one().max(linalg::norm(y));
        let mut res = T::infinity();
        for _ in 0..60 {
            let fx = self.lift_eval(&x);
            let r = linalg::sub(&fx, y);
            res = linalg::norm(&r);
            if res <= tol {
                return Ok(x);
            }
            let step = self
                .df(&x)
                .solve(&r)
                .ok_or(PerturbationError::NewtonDiverged {
                    residual: res.to_f64_lossy(),
                })?;
            x = linalg::sub(&x, &step);
        }
        // Last iterate may still be within a slightly looser bound in f32.
        if res <= tol * T::lit(16.0) {
            return Ok(x);
        }
        Err(PerturbationError::NewtonDiverged {
            residual: res.to_f64_lossy(),
        })
    }

    pub fn inverse_eval(&self, y: &[T]) -> Result<Vec<T>, PerturbationError> {
        Ok(wrap(&self.lift_inverse(&wrap(y))?))
    }

    /// `n`-fold lift iterate.
    pub fn lift_iterate(&self, x: &[T], n: usize) -> Vec<T> {
        (0..n).fold(x.to_vec(), |acc, _| self.lift_eval(&acc))
    }
}

impl<T: Real> JacobianSample<T> {
    /// The `dA × dB` block `∂x′/∂y` of a skew-product Jacobian; identically
    /// zero because the base map ignores the fiber.
    pub fn base_fiber_block(&self, dim_x: usize) -> Mat<T> {
        let d = self.df.rows();
        self.df.block(0, dim_x, dim_x, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn generic(eps: f64) -> Result<PerturbedMap<f64>, PerturbationError> {
        PerturbedMap::make_generic(
            IntMatrix::cat_map(),
            vec![Mode {
                k: vec![1, 0],
                c: vec![0.0, 1.0],
                phase: 0.0,
            }],
            eps,
        )
    }

    #[test]
    fn c1_distance_is_closed_form() {
        let f = generic(0.01).unwrap();
        assert!((f.certificate().displacement_c1 - std::f64::consts::TAU * 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_epsilon_is_linear() {
        let f = generic(0.0).unwrap();
        let x = [0.3, 0.7];
        let lx = wrap(&IntMatrix::cat_map().to_mat::<f64>().mul_vec(&x));
        assert_eq!(f.eval(&x), lx);
    }

    #[test]
    fn large_epsilon_rejected() {
        assert!(matches!(
            generic(10.0),
            Err(PerturbationError::PerturbationTooLarge { .. })
        ));
    }

    #[test]
    fn inverse_round_trip() {
        let f = generic(0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let back = f.inverse_eval(&f.eval(&x)).unwrap();
            assert!(torus_distance(&back, &x) < 1e-10);
        }
    }

    #[test]
    fn skew_product_structure() {
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
        let s = f.skew().unwrap();
        assert!((s.predicted_exponent - 0.5).abs() < 1e-12);
        assert!((s.series_exponent - 1.0).abs() < 1e-12);
        let j = f.jacobian(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(j.base_fiber_block(2).max_abs(), 0.0);
        assert_eq!(j.df.block(0, 2, 0, 2), IntMatrix::cat_map().to_mat());
    }

    #[test]
    fn equal_blocks_clash() {
        let cat = IntMatrix::cat_map();
        let e = PerturbedMap::<f64>::make_counterexample(
            cat.clone(),
            cat,
            1,
            1,
            ScalarTrig::cosine(2, 0),
            0.01,
        )
        .unwrap_err();
        assert_eq!(e, PerturbationError::SpectrumClash);
    }

    #[test]
    fn f32_map_evaluates() {
        let f = PerturbedMap::<f32>::make_generic(
            IntMatrix::cat_map(),
            vec![Mode {
                k: vec![1, 0],
                c: vec![0.0, 1.0],
                phase: 0.0,
            }],
            0.01,
        )
        .unwrap();
        let y = f.eval(&[0.25, 0.5]);
        let back = f.inverse_eval(&y).unwrap();
        assert!(torus_distance(&back, &[0.25, 0.5]) < 1e-5);
    }
}
