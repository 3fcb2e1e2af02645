//! Floating-point spectrum, eigenbasis and flags of an integer matrix.
//!
//! Exactness lives in the characteristic polynomial; its roots are found in
//! `f64` by simultaneous (Durand–Kerner) iteration and polished by Newton's
//! method on the exact coefficients.

use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use super::{IntMatrix, IntPoly, LinearError};
use crate::linalg::{self, Mat};

/// Eigenvalue moduli closer than this to 1 make the matrix non-hyperbolic.
pub const HYPERBOLICITY_MARGIN: f64 = 1e-9;
/// Minimal gap between log-moduli for the spectrum to count as distinct.
pub const DISTINCT_MODULUS_GAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpectralFlags {
    pub hyperbolic: bool,
    pub real_spectrum: bool,
    /// Real and simple, hence diagonalizable over ℝ.
    pub diagonalizable: bool,
    pub distinct_modulus: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SpectralWarning {
    ComplexSpectrum { pairs: usize },
    DegenerateSpectrum { min_log_gap: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    pub char_poly: IntPoly,
    /// All roots sorted by increasing modulus.
    pub roots: Vec<Complex64>,
    /// Real parts of `roots`; these are the eigenvalues when the spectrum is real.
    pub eigenvalues: Vec<f64>,
    pub moduli: Vec<f64>,
    /// `log|β_i|`, ascending.
    pub exponents: Vec<f64>,
    pub stable_count: usize,
    pub unstable_count: usize,
    /// Unit eigenvectors, one per eigenvalue; empty unless `diagonalizable`.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Dual basis: `covectors[i]·eigenvectors[j] = δ_ij`.
    pub covectors: Vec<Vec<f64>>,
    pub flags: SpectralFlags,
    pub warnings: Vec<SpectralWarning>,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.roots.len()
    }

    pub fn stable_exponents(&self) -> &[f64] {
        &self.exponents[..self.stable_count]
    }

    /// `λ^u_1 < … < λ^u_n`.
    pub fn unstable_exponents(&self) -> &[f64] {
        &self.exponents[self.stable_count..]
    }

    /// Index into the sorted spectrum of the unstable band `i` (0-based).
    pub fn unstable_index(&self, i: usize) -> usize {
        self.stable_count + i
    }

    /// `eigenvectors` as matrix columns.
    pub fn eigenbasis(&self) -> Mat<f64> {
        Mat::from_columns(&self.eigenvectors)
    }
}

/// Ordered one-dimensional bands and their partial-sum flags.
#[derive(Clone, Debug, Serialize)]
pub struct FlagSplitting {
    /// `E^u_1, …, E^u_n`, weakest expansion first.
    pub unstable: Vec<Vec<f64>>,
    /// `E^s_1, …, E^s_k`, strongest contraction first.
    pub stable: Vec<Vec<f64>>,
    /// Orthonormal bases of `E^u_{(1,i)}`, i = 1..n.
    pub unstable_flags: Vec<Vec<Vec<f64>>>,
    /// Orthonormal bases of `E^s_{(1,i)}`, i = 1..k.
    pub stable_flags: Vec<Vec<Vec<f64>>>,
}

impl FlagSplitting {
    /// Largest `‖(I − P)·L·b‖` over flag basis vectors `b`.
    pub fn invariance_residual(&self, l: &Mat<f64>) -> f64 {
        let mut worst = 0.0f64;
        for basis in self.unstable_flags.iter().chain(&self.stable_flags) {
            for b in basis {
                let lb = l.mul_vec(b);
                let r = linalg::distance_to_span(&lb, basis);
                worst = worst.max(r);
            }
        }
        worst
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearAnalysis {
    pub spectral: SpectralData,
    pub splitting: Option<FlagSplitting>,
}

impl LinearAnalysis {
    pub fn splitting(&self) -> Result<&FlagSplitting, LinearError> {
        self.splitting.as_ref().ok_or(LinearError::NoRealSplitting)
    }
}

/// Spectrum, exponents and flags of `L`.
pub fn analyze(l: &IntMatrix) -> Result<LinearAnalysis, LinearError> {
    let det = l.det();
    if det != 1.into() && det != (-1).into() {
        return Err(LinearError::NotUnimodular {
            det: det.to_string(),
        });
    }
    let poly = l.char_poly();
    let roots = check_hyperbolic(&poly)?;
    let d = roots.len();
    let moduli: Vec<f64> = roots.iter().map(|z| z.norm()).collect();
    let exponents: Vec<f64> = moduli.iter().map(|m| m.ln()).collect();
    let stable_count = moduli.iter().filter(|&&m| m < 1.0).count();

    let real_spectrum = roots.iter().all(|z| z.im == 0.0);
    let mut warnings = Vec::new();
    if !real_spectrum {
        let pairs = roots.iter().filter(|z| z.im > 0.0).count();
        warnings.push(SpectralWarning::ComplexSpectrum { pairs });
    }
    let min_log_gap = exponents
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let distinct_modulus = min_log_gap > DISTINCT_MODULUS_GAP;
    if !distinct_modulus {
        warnings.push(SpectralWarning::DegenerateSpectrum { min_log_gap });
    }
    let simple = real_spectrum && {
        let mut vals: Vec<f64> = roots.iter().map(|z| z.re).collect();
        vals.sort_by(f64::total_cmp);
        vals.windows(2)
            .all(|w| (w[1] - w[0]).abs() > DISTINCT_MODULUS_GAP * w[1].abs().max(1.0))
    };

    let lf = l.to_mat::<f64>();
    let (eigenvectors, covectors) = if simple {
        let vecs: Vec<Vec<f64>> = roots.iter().map(|z| eigenvector(&lf, z.re)).collect();
        let p = Mat::from_columns(&vecs);
        let pinv = p.inverse().ok_or(LinearError::NoRealSplitting)?;
        let covs = (0..d).map(|i| pinv.row(i).to_vec()).collect();
        (vecs, covs)
    } else {
        (Vec::new(), Vec::new())
    };

    let splitting = simple.then(|| {
        let stable: Vec<Vec<f64>> = eigenvectors[..stable_count].to_vec();
        let unstable: Vec<Vec<f64>> = eigenvectors[stable_count..].to_vec();
        let flags = |bands: &[Vec<f64>]| {
            (1..=bands.len())
                .map(|i| linalg::orthonormal_basis(&bands[..i]))
                .collect()
        };
        FlagSplitting {
            unstable_flags: flags(&unstable),
            stable_flags: flags(&stable),
            unstable,
            stable,
        }
    });

    let spectral = SpectralData {
        char_poly: poly,
        eigenvalues: roots.iter().map(|z| z.re).collect(),
        roots,
        moduli,
        exponents,
        stable_count,
        unstable_count: d - stable_count,
        eigenvectors,
        covectors,
        flags: SpectralFlags {
            hyperbolic: true,
            real_spectrum,
            diagonalizable: simple,
            distinct_modulus,
        },
        warnings,
    };
    Ok(LinearAnalysis {
        spectral,
        splitting,
    })
}

/// Roots sorted by modulus, or `NotHyperbolic` if one lies near the unit circle.
pub(crate) fn check_hyperbolic(poly: &IntPoly) -> Result<Vec<Complex64>, LinearError> {
    let roots = poly_roots(poly);
    if let Some(m) = roots
        .iter()
        .map(|z| z.norm())
        .find(|m| (m - 1.0).abs() < HYPERBOLICITY_MARGIN)
    {
        return Err(LinearError::NotHyperbolic { modulus: m });
    }
    Ok(roots)
}

/// Complex roots of a monic integer polynomial, sorted by (modulus, real part).
/// Roots with negligible imaginary part are snapped to the real axis.
pub fn poly_roots(poly: &IntPoly) -> Vec<Complex64> {
    let n = poly.degree();
    if n == 0 {
        return Vec::new();
    }
    let c: Vec<f64> = poly
        .coeffs()
        .iter()
        .map(|x| x.to_f64().unwrap_or(f64::NAN))
        .collect();
    let lead = c[n];
    let a: Vec<f64> = c.iter().map(|x| x / lead).collect();
    let radius = 1.0 + a[..n].iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let eval = |z: Complex64| a.iter().rev().fold(Complex64::zero(), |acc, &k| acc * z + k);
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * radius.min(2.0)).collect();
    for _ in 0..2000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            change = change.max(step.norm());
        }
        if change < 1e-15 * radius {
            break;
        }
    }

    let da: Vec<f64> = (1..=n).map(|k| a[k] * k as f64).collect();
    let deval = |z: Complex64| da.iter().rev().fold(Complex64::zero(), |acc, &k| acc * z + k);

    for r in z.iter_mut() {
        if r.im.abs() <= 1e-7 * r.norm().max(1.0) {
            // real polish, with a bracketing guard
            let mut x = r.re;
            for _ in 0..50 {
                let fx = poly.eval_f64(x);
                let dfx = deval(Complex64::new(x, 0.0)).re;
                if dfx == 0.0 {
                    break;
                }
                let step = fx / dfx;
                x -= step;
                if step.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            *r = Complex64::new(x, 0.0);
        } else {
            for _ in 0..20 {
                let d = deval(*r);
                if d.norm() == 0.0 {
                    break;
                }
                let step = eval(*r) / d;
                *r -= step;
                if step.norm() <= 1e-16 * r.norm() {
                    break;
                }
            }
        }
    }
    let mut pairs: Vec<Complex64> = z.iter().filter(|r| r.im > 0.0).copied().collect();
    let mut out: Vec<Complex64> = z.iter().filter(|r| r.im == 0.0).copied().collect();
    for p in pairs.drain(..) {
        out.push(p);
        out.push(p.conj());
    }
    // Unbalanced upper/lower half-plane counts mean the iteration did not
    // converge cleanly; fall back to the raw roots.
    if out.len() != n {
        out = z.clone();
    }
    out.sort_by(|p, q| {
        p.norm()
            .total_cmp(&q.norm())
            .then(p.re.total_cmp(&q.re))
            .then(p.im.total_cmp(&q.im))
    });
    out
}

/// Unit eigenvector for a simple real eigenvalue, sign fixed so that the
/// entry of largest magnitude is positive.
fn eigenvector(l: &Mat<f64>, beta: f64) -> Vec<f64> {
    let d = l.rows();
    let shifted = Mat::from_fn(d, d, |i, j| l[(i, j)] - if i == j { beta } else { 0.0 });
    // Kernel of the (d−1)×d matrix that omits one row; choose the omission
    // giving the best-conditioned signed-minor vector.
    let mut best: Vec<f64> = Vec::new();
    let mut best_norm = -1.0;
    for skip in 0..d {
        let rows: Vec<Vec<f64>> = (0..d)
            .filter(|&i| i != skip)
            .map(|i| shifted.row(i).to_vec())
            .collect();
        let v = linalg::kernel_vector(&Mat::from_rows(&rows));
        let nv = linalg::norm(&v);
        if nv > best_norm {
            best_norm = nv;
            best = v;
        }
    }
    let mut v = linalg::normalize(&best);
    // Two rounds of inverse iteration with a slightly perturbed shift.
    let eps = 1e-10 * beta.abs().max(1.0);
    let near = Mat::from_fn(d, d, |i, j| shifted[(i, j)] - if i == j { eps } else { 0.0 });
    if let Some(lu) = near.lu() {
        for _ in 0..2 {
            let w = lu.solve(&v);
            let nw = linalg::norm(&w);
            if nw.is_finite() && nw > 0.0 {
                v = w.iter().map(|x| x / nw).collect();
            }
        }
    }
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bm), (i, x)| if x.abs() > bm { (i, x.abs()) } else { (bi, bm) });
    if v[imax] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_map_spectrum() {
        let a = analyze(&IntMatrix::cat_map()).unwrap();
        let s = &a.spectral;
        let phi2 = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((s.eigenvalues[1] - phi2).abs() < 1e-12);
        assert!((s.eigenvalues[0] - 1.0 / phi2).abs() < 1e-12);
        assert!((s.exponents[1] - 0.9624236501192069).abs() < 1e-12);
        assert_eq!((s.stable_count, s.unstable_count), (1, 1));
        assert!(s.flags.diagonalizable && s.flags.distinct_modulus);
        let split = a.splitting().unwrap();
        assert!(split.invariance_residual(&IntMatrix::cat_map().to_mat()) < 1e-12);
    }

    #[test]
    fn identity_not_hyperbolic() {
        let id = IntMatrix::from_i64(&[vec![1, 0], vec![0, 1]]).unwrap();
        assert!(matches!(analyze(&id), Err(LinearError::NotHyperbolic { .. })));
    }

    #[test]
    fn companion_cubic() {
        let c = IntMatrix::from_i64(&[vec![0, 1, 0], vec![0, 0, 1], vec![-1, 0, 3]]).unwrap();
        let a = analyze(&c).unwrap();
        let s = &a.spectral;
        assert_eq!((s.stable_count, s.unstable_count), (2, 1));
        for &b in &s.eigenvalues {
            assert!(s.char_poly.eval_f64(b).abs() < 1e-8);
        }
        assert!(s.eigenvalues[2] > 2.87 && s.eigenvalues[2] < 2.89);
        assert!(a.splitting().unwrap().invariance_residual(&c.to_mat()) < 1e-12);
    }

    #[test]
    fn repeated_moduli_warn() {
        let a = IntMatrix::cat_map();
        let b = a.block_diag(&a);
        let an = analyze(&b).unwrap();
        assert!(!an.spectral.flags.distinct_modulus);
        assert!(an.splitting.is_none());
        assert!(an
            .spectral
            .warnings
            .iter()
            .any(|w| matches!(w, SpectralWarning::DegenerateSpectrum { .. })));
    }

    #[test]
    fn complex_spectrum_flagged() {
        // x³ − x − 1: one real root ≈ 1.3247 and a complex pair of modulus ≈ 0.8688.
        let c = IntMatrix::from_i64(&[vec![0, 1, 0], vec![0, 0, 1], vec![1, 1, 0]]).unwrap();
        let an = analyze(&c).unwrap();
        assert!(!an.spectral.flags.real_spectrum);
        assert!(an
            .spectral
            .warnings
            .iter()
            .any(|w| matches!(w, SpectralWarning::ComplexSpectrum { pairs: 1 })));
    }

    #[test]
    fn dual_covectors() {
        let c = IntMatrix::from_i64(&[vec![0, 1, 0], vec![0, 0, 1], vec![-1, 0, 3]]).unwrap();
        let s = analyze(&c).unwrap().spectral;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((linalg::dot(&s.covectors[i], &s.eigenvectors[j]) - want).abs() < 1e-12);
            }
        }
    }
}
