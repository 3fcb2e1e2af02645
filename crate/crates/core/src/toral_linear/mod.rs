//! Linear toral automorphisms: exact integer data and floating-point spectra.

mod irreducible;
mod periodic_points;
mod poly;
mod smith;
mod spectrum;

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::Mat;
use crate::scalar::Real;

pub use irreducible::{
    factor_monic, is_irreducible_over_q, Irreducibility, IrreducibleEvidence, MAX_DEGREE,
};
pub use periodic_points::{
    divisors, enumerate_periodic_points, exact_orbits, periodic_point_count, ExactOrbit, RationalPoint,
    DEFAULT_POINT_CAP,
};
pub use poly::{gcd_over_q, IntPoly};
pub use smith::{smith_normal_form, Smith};
pub use spectrum::{
    analyze, FlagSplitting, LinearAnalysis, SpectralData, SpectralFlags, SpectralWarning,
    DISTINCT_MODULUS_GAP, HYPERBOLICITY_MARGIN,
};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LinearError {
    #[error("matrix is not unimodular: det = {det}")]
    NotUnimodular { det: String },
    #[error("matrix is not hyperbolic: eigenvalue modulus {modulus} is within 1e-9 of 1")]
    NotHyperbolic { modulus: f64 },
    #[error("polynomial degree {degree} exceeds the supported bound {max}")]
    DegreeTooLarge { degree: usize, max: usize },
    #[error("polynomial is not monic")]
    NotMonic,
    #[error("coefficients too large for single-word modular arithmetic")]
    CoefficientsTooLarge,
    #[error("{count} periodic points exceed the cap {cap}")]
    TooManyPoints { count: String, cap: usize },
    #[error("period must be at least 1")]
    InvalidPeriod,
    #[error("matrix must be square with dimension at least 2")]
    BadShape,
    #[error("spectrum is not real and simple; no one-dimensional splitting exists")]
    NoRealSplitting,
    #[error("cannot parse matrix: {0}")]
    Parse(String),
}

/// Square integer matrix with |det| = 1 and size at least 2.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntMatrix {
    rows: Vec<Vec<BigInt>>,
}

impl IntMatrix {
    pub fn new(rows: Vec<Vec<BigInt>>) -> Result<Self, LinearError> {
        let d = rows.len();
        if d < 2 || rows.iter().any(|r| r.len() != d) {
            return Err(LinearError::BadShape);
        }
        let det = det_bareiss(&rows);
        if !det.abs().is_one() {
            return Err(LinearError::NotUnimodular {
                det: det.to_string(),
            });
        }
        Ok(Self { rows })
    }

    pub fn from_i64(rows: &[Vec<i64>]) -> Result<Self, LinearError> {
        Self::new(
            rows.iter()
                .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
                .collect(),
        )
    }

    /// The cat map `[[2,1],[1,1]]`.
    pub fn cat_map() -> Self {
        Self::from_i64(&[vec![2, 1], vec![1, 1]]).expect("cat map is unimodular")
    }

    /// Parses `d` on the first line followed by `d` rows of `d` integers.
    pub fn parse(text: &str) -> Result<Self, LinearError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let d: usize = lines
            .next()
            .ok_or_else(|| LinearError::Parse("empty input".into()))?
            .parse()
            .map_err(|e| LinearError::Parse(format!("dimension: {e}")))?;
        let mut rows = Vec::with_capacity(d);
        for i in 0..d {
            let line = lines
                .next()
                .ok_or_else(|| LinearError::Parse(format!("missing row {}", i + 1)))?;
            let row = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<BigInt>()
                        .map_err(|e| LinearError::Parse(format!("row {}: {e}", i + 1)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != d {
                return Err(LinearError::Parse(format!(
                    "row {} has {} entries, expected {d}",
                    i + 1,
                    row.len()
                )));
            }
            rows.push(row);
        }
        if lines.next().is_some() {
            return Err(LinearError::Parse("trailing data after matrix".into()));
        }
        Self::new(rows)
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<BigInt>] {
        &self.rows
    }

    pub fn entry(&self, i: usize, j: usize) -> &BigInt {
        &self.rows[i][j]
    }

    pub fn det(&self) -> BigInt {
        det_bareiss(&self.rows)
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        Self {
            rows: zmul(&self.rows, &rhs.rows),
        }
    }

    pub fn pow(&self, n: u32) -> Self {
        Self {
            rows: zpow(&self.rows, n),
        }
    }

    /// Block-diagonal `diag(self, other)`.
    pub fn block_diag(&self, other: &Self) -> Self {
        let (a, b) = (self.dim(), other.dim());
        let mut rows = vec![vec![BigInt::zero(); a + b]; a + b];
        for i in 0..a {
            for j in 0..a {
                rows[i][j] = self.rows[i][j].clone();
            }
        }
        for i in 0..b {
            for j in 0..b {
                rows[a + i][a + j] = other.rows[i][j].clone();
            }
        }
        Self { rows }
    }

    pub fn to_mat<T: Real>(&self) -> Mat<T> {
        let d = self.dim();
        Mat::from_fn(d, d, |i, j| {
            T::from_f64(self.rows[i][j].to_f64().unwrap_or(f64::NAN)).unwrap_or_else(T::nan)
        })
    }

    /// Exact `L·x` for an integer vector.
    pub fn apply_int(&self, v: &[BigInt]) -> Vec<BigInt> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn char_poly(&self) -> IntPoly {
        char_poly(&self.rows)
    }
}

impl fmt::Display for IntMatrix {
    /// Same plain-text layout accepted by [`IntMatrix::parse`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.dim())?;
        for r in &self.rows {
            let parts: Vec<String> = r.iter().map(ToString::to_string).collect();
            writeln!(f, "{}", parts.join(" "))?;
        }
        Ok(())
    }
}

impl Serialize for IntMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(ToString::to_string).collect())
            .collect();
        rows.serialize(s)
    }
}

/// Characteristic polynomial `det(xI − A)` of a square integer matrix, by
/// Faddeev–LeVerrier in exact integer arithmetic.
pub fn char_poly(a: &[Vec<BigInt>]) -> IntPoly {
    let n = a.len();
    let mut c = vec![BigInt::zero(); n + 1];
    c[n] = BigInt::one();
    let mut m = vec![vec![BigInt::zero(); n]; n];
    for k in 1..=n {
        // M_k = A·M_{k−1} + c_{n−k+1}·I
        let mut next = zmul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += &c[n - k + 1];
        }
        m = next;
        let am = zmul(a, &m);
        let tr: BigInt = (0..n).map(|i| am[i][i].clone()).sum();
        // Newton's identities guarantee exact division by k.
        c[n - k] = -tr / BigInt::from(k);
    }
    IntPoly::from_ascending(c)
}

pub(crate) fn zmul(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let n = a.len();
    let p = b[0].len();
    let mut out = vec![vec![BigInt::zero(); p]; n];
    for i in 0..n {
        for k in 0..b.len() {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..p {
                out[i][j] += &a[i][k] * &b[k][j];
            }
        }
    }
    out
}

pub(crate) fn zpow(a: &[Vec<BigInt>], mut n: u32) -> Vec<Vec<BigInt>> {
    let d = a.len();
    let mut result: Vec<Vec<BigInt>> = (0..d)
        .map(|i| (0..d).map(|j| BigInt::from((i == j) as i32)).collect())
        .collect();
    let mut base = a.to_vec();
    while n > 0 {
        if n & 1 == 1 {
            result = zmul(&result, &base);
        }
        n >>= 1;
        if n > 0 {
            base = zmul(&base, &base);
        }
    }
    result
}

/// Fraction-free Gaussian elimination.
pub(crate) fn det_bareiss(m: &[Vec<BigInt>]) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a = m.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            let Some(swap) = (k + 1..n).find(|&i| !a[i][k].is_zero()) else {
                return BigInt::zero();
            };
            a.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * a[n - 1][n - 1].clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> IntMatrix {
        IntMatrix::from_i64(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cat_map_char_poly() {
        assert_eq!(IntMatrix::cat_map().char_poly().to_string(), "[1, -3, 1]");
    }

    #[test]
    fn involution_char_poly() {
        assert_eq!(m(&[&[0, 1], &[1, 0]]).char_poly().to_string(), "[1, 0, -1]");
    }

    #[test]
    fn block_diag_char_poly_is_product() {
        let a = IntMatrix::cat_map();
        let b = a.pow(2);
        let p = a.block_diag(&b).char_poly();
        assert_eq!(p, a.char_poly().mul(&b.char_poly()));
    }

    #[test]
    fn companion_char_poly() {
        let c = m(&[&[0, 1, 0], &[0, 0, 1], &[-1, 0, 3]]);
        assert_eq!(c.char_poly().to_string(), "[1, -3, 0, 1]");
    }

    #[test]
    fn rejects_non_unimodular() {
        let e = IntMatrix::from_i64(&[vec![2, 0], vec![0, 1]]).unwrap_err();
        assert!(matches!(e, LinearError::NotUnimodular { .. }));
        assert_eq!(
            IntMatrix::from_i64(&[vec![1]]).unwrap_err(),
            LinearError::BadShape
        );
    }

    #[test]
    fn parse_round_trip() {
        let a = IntMatrix::parse("2\n2 1\n1 1\n").unwrap();
        assert_eq!(a, IntMatrix::cat_map());
        assert_eq!(IntMatrix::parse(&a.to_string()).unwrap(), a);
        assert!(IntMatrix::parse("2\n1 2 3\n1 1").is_err());
        assert!(IntMatrix::parse("3\n1 0 0\n0 1 0").is_err());
    }

    #[test]
    fn bareiss_matches_cofactor() {
        let a = vec![
            vec![BigInt::from(4), BigInt::from(3)],
            vec![BigInt::from(3), BigInt::from(1)],
        ];
        assert_eq!(det_bareiss(&a), BigInt::from(-5));
        let z = vec![vec![BigInt::zero(), BigInt::one()], vec![BigInt::zero(), BigInt::one()]];
        assert_eq!(det_bareiss(&z), BigInt::zero());
    }
}
