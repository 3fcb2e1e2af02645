//! Dense univariate polynomials with arbitrary-precision integer coefficients.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Integer polynomial, coefficients stored in ascending degree order.
///
/// The zero polynomial has an empty coefficient vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntPoly {
    coeffs: Vec<BigInt>,
}

impl IntPoly {
    pub fn from_ascending(coeffs: Vec<BigInt>) -> Self {
        let mut p = Self { coeffs };
        p.trim();
        p
    }

    /// Builds from coefficients listed highest degree first (constant term
    /// last), the same order used by [`fmt::Display`].
    pub fn from_descending_i64(coeffs: &[i64]) -> Self {
        Self::from_ascending(coeffs.iter().rev().map(|&c| BigInt::from(c)).collect())
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self {
            coeffs: vec![BigInt::one()],
        }
    }

    /// `x - r`.
    pub fn linear_factor(r: &BigInt) -> Self {
        Self::from_ascending(vec![-r.clone(), BigInt::one()])
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(Zero::is_zero) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> BigInt {
        self.coeffs.get(i).cloned().unwrap_or_default()
    }

    pub fn leading(&self) -> BigInt {
        self.coeffs.last().cloned().unwrap_or_default()
    }

    pub fn is_monic(&self) -> bool {
        self.coeffs.last().is_some_and(One::is_one)
    }

    /// Coefficients highest degree first, constant term last.
    pub fn descending(&self) -> Vec<BigInt> {
        self.coeffs.iter().rev().cloned().collect()
    }

    pub fn eval(&self, x: &BigInt) -> BigInt {
        self.coeffs
            .iter()
            .rev()
            .fold(BigInt::zero(), |acc, c| acc * x + c)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c.to_f64().unwrap_or(f64::NAN))
    }

    pub fn derivative(&self) -> Self {
        Self::from_ascending(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * BigInt::from(i))
                .collect(),
        )
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return Self::zero();
        }
        let mut out = vec![BigInt::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::from_ascending(out)
    }

    pub fn neg(&self) -> Self {
        Self::from_ascending(self.coeffs.iter().map(|c| -c).collect())
    }

    /// Exact division by a divisor with leading coefficient ±1. Returns
    /// `None` when the remainder is non-zero.
    pub fn div_exact(&self, divisor: &Self) -> Option<Self> {
        let lead = divisor.leading();
        if !lead.abs().is_one() {
            return None;
        }
        if self.is_zero() {
            return Some(Self::zero());
        }
        if divisor.degree() > self.degree() {
            return None;
        }
        let mut rem = self.coeffs.clone();
        let dd = divisor.degree();
        let mut quot = vec![BigInt::zero(); self.degree() - dd + 1];
        for k in (0..quot.len()).rev() {
            let c = &rem[k + dd] * &lead; // lead = ±1, so c / lead == c * lead
            if !c.is_zero() {
                for (j, dc) in divisor.coeffs.iter().enumerate() {
                    rem[k + j] -= &c * dc;
                }
            }
            quot[k] = c;
        }
        if rem.iter().any(|c| !c.is_zero()) {
            return None;
        }
        Some(Self::from_ascending(quot))
    }

    /// Sum of squared coefficients.
    pub fn norm_sq(&self) -> BigInt {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub(crate) fn to_rational(&self) -> Vec<BigRational> {
        self.coeffs
            .iter()
            .map(|c| BigRational::from_integer(c.clone()))
            .collect()
    }

    /// Primitive, positive-leading integer polynomial proportional to a
    /// rational one.
    pub(crate) fn from_rational_primitive(coeffs: &[BigRational]) -> Self {
        use num_integer::Integer;
        let mut denom_lcm = BigInt::one();
        for c in coeffs {
            denom_lcm = denom_lcm.lcm(c.denom());
        }
        let ints: Vec<BigInt> = coeffs
            .iter()
            .map(|c| (c * BigRational::from_integer(denom_lcm.clone())).to_integer())
            .collect();
        let mut g = BigInt::zero();
        for c in &ints {
            g = g.gcd(c);
        }
        if g.is_zero() {
            return Self::zero();
        }
        let mut p = Self::from_ascending(ints.into_iter().map(|c| c / &g).collect());
        if p.leading().is_negative() {
            p = p.neg();
        }
        p
    }

    /// Human-readable form such as `x^2 - 3x + 1`.
    pub fn pretty(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut s = String::new();
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let neg = c.is_negative();
            let mag = c.abs();
            if s.is_empty() {
                if neg {
                    s.push('-');
                }
            } else {
                s.push_str(if neg { " - " } else { " + " });
            }
            let show_mag = i == 0 || !mag.is_one();
            if show_mag {
                s.push_str(&mag.to_string());
            }
            match i {
                0 => {}
                1 => s.push('x'),
                _ => s.push_str(&format!("x^{i}")),
            }
        }
        s
    }
}

impl fmt::Display for IntPoly {
    /// Integer coefficient list, constant term last: `[1, -3, 1]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.descending().iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

impl serde::Serialize for IntPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Monic gcd over ℚ, returned as a primitive integer polynomial with positive
/// leading coefficient.
pub fn gcd_over_q(a: &IntPoly, b: &IntPoly) -> IntPoly {
    let mut x = a.to_rational();
    let mut y = b.to_rational();
    trim_q(&mut x);
    trim_q(&mut y);
    while !y.is_empty() {
        let r = rem_q(&x, &y);
        x = y;
        y = r;
    }
    IntPoly::from_rational_primitive(&x)
}

fn trim_q(p: &mut Vec<BigRational>) {
    while p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
}

fn rem_q(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let mut r = a.to_vec();
    let db = b.len() - 1;
    let lead = b[db].clone();
    while r.len() > db {
        let k = r.len() - 1 - db;
        let c = r[r.len() - 1].clone() / &lead;
        for (j, bc) in b.iter().enumerate() {
            let t = &c * bc;
            r[k + j] -= t;
        }
        r.pop();
        trim_q(&mut r);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_lists_constant_last() {
        let p = IntPoly::from_descending_i64(&[1, -3, 1]);
        assert_eq!(p.to_string(), "[1, -3, 1]");
        assert_eq!(p.pretty(), "x^2 - 3x + 1");
        assert_eq!(p.degree(), 2);
    }

    #[test]
    fn exact_division() {
        let f = IntPoly::from_descending_i64(&[1, -3, 1]);
        let sq = f.mul(&f);
        assert_eq!(sq.div_exact(&f), Some(f.clone()));
        assert_eq!(f.div_exact(&IntPoly::from_descending_i64(&[1, -1])), None);
    }

    #[test]
    fn gcd_finds_repeated_factor() {
        let f = IntPoly::from_descending_i64(&[1, -3, 1]);
        let sq = f.mul(&f);
        assert_eq!(gcd_over_q(&sq, &sq.derivative()), f);
        let g = gcd_over_q(&f, &IntPoly::from_descending_i64(&[1, -1]));
        assert_eq!(g, IntPoly::one());
    }
}
