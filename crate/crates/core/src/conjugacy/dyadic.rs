//! Exact orbits of an integer matrix on the dyadic lattice `2^{−52}ℤ^d / ℤ^d`.
//!
//! A float orbit of a hyperbolic automorphism loses one digit per unit of
//! expansion. Rounding the start point once to the dyadic lattice and then
//! iterating in integers modulo `2^52` gives the exact orbit of that point.

use crate::scalar::Real;
use crate::toral_linear::IntMatrix;
use num_traits::ToPrimitive;

const BITS: u32 = 52;
const MODULUS: i128 = 1 << BITS;

#[derive(Clone, Debug)]
pub struct DyadicOrbit {
    forward: Vec<Vec<i128>>,
    backward: Vec<Vec<i128>>,
    start: Vec<i128>,
}

fn reduce(v: i128) -> i128 {
    v.rem_euclid(MODULUS)
}

fn apply(m: &[Vec<i128>], x: &[i128]) -> Vec<i128> {
    m.iter()
        .map(|row| reduce(row.iter().zip(x).map(|(a, b)| a * b).sum()))
        .collect()
}

/// Exact inverse of a unimodular integer matrix via its adjugate.
fn inverse(m: &[Vec<i128>]) -> Vec<Vec<i128>> {
    let d = m.len();
    let minor = |r: usize, c: usize| -> Vec<Vec<i128>> {
        m.iter()
            .enumerate()
            .filter(|(i, _)| *i != r)
            .map(|(_, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != c)
                    .map(|(_, &v)| v)
                    .collect()
            })
            .collect()
    };
    fn det(m: &[Vec<i128>]) -> i128 {
        let d = m.len();
        if d == 1 {
            return m[0][0];
        }
        (0..d)
            .map(|c| {
                let sub: Vec<Vec<i128>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(j, _)| *j != c)
                            .map(|(_, &v)| v)
                            .collect()
                    })
                    .collect();
                let s = if c % 2 == 0 { 1 } else { -1 };
                s * m[0][c] * det(&sub)
            })
            .sum()
    }
    let dt = det(m);
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let s = if (i + j) % 2 == 0 { 1 } else { -1 };
                    s * det(&minor(j, i)) * dt
                })
                .collect()
        })
        .collect()
}

impl DyadicOrbit {
    pub fn new<T: Real>(l: &IntMatrix, x: &[T]) -> Self {
        let forward: Vec<Vec<i128>> = l
            .rows()
            .iter()
            .map(|r| r.iter().map(|v| v.to_i128().expect("small matrix entry")).collect())
            .collect();
        let scale = T::lit(MODULUS as f64);
        let start = x
            .iter()
            .map(|&v| {
                let w = v - v.floor();
                reduce((w * scale).round().to_i128().unwrap_or(0))
            })
            .collect();
        Self {
            backward: inverse(&forward),
            forward,
            start,
        }
    }

    fn to_point<T: Real>(v: &[i128]) -> Vec<T> {
        let scale = T::lit(MODULUS as f64);
        v.iter().map(|&c| T::lit(c as f64) / scale).collect()
    }

    /// The start point after rounding, in [0, 1)^d.
    pub fn start<T: Real>(&self) -> Vec<T> {
        Self::to_point(&self.start)
    }

    /// `L^k x` for any integer `k`.
    pub fn point<T: Real>(&self, k: i64) -> Vec<T> {
        let m = if k >= 0 { &self.forward } else { &self.backward };
        let mut v = self.start.clone();
        for _ in 0..k.unsigned_abs() {
            v = apply(m, &v);
        }
        Self::to_point(&v)
    }

    /// `L^k x` for `k = −back, …, fwd`.
    pub fn segment<T: Real>(&self, back: usize, fwd: usize) -> Vec<Vec<T>> {
        let mut past = Vec::with_capacity(back);
        let mut v = self.start.clone();
        for _ in 0..back {
            v = apply(&self.backward, &v);
            past.push(v.clone());
        }
        let mut out: Vec<Vec<T>> = past.iter().rev().map(|p| Self::to_point(p)).collect();
        let mut v = self.start.clone();
        out.push(Self::to_point(&v));
        for _ in 0..fwd {
            v = apply(&self.forward, &v);
            out.push(Self::to_point(&v));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orbit_returns_after_period() {
        // 2^{-52}e₁ is a lattice point, so its orbit is exact.
        let l = IntMatrix::cat_map();
        let x = [2f64.powi(-52), 0.0];
        let o = DyadicOrbit::new(&l, &x);
        let p: Vec<f64> = o.point(1);
        assert_eq!(p, vec![2.0 * 2f64.powi(-52), 2f64.powi(-52)]);
        let back: Vec<f64> = o.point(-1);
        let fwd_back: Vec<f64> = DyadicOrbit::new(&l, &back).point(1);
        assert_eq!(fwd_back, x.to_vec());
        let seg: Vec<Vec<f64>> = o.segment(2, 3);
        assert_eq!(seg.len(), 6);
        assert_eq!(seg[2], x.to_vec());
        assert_eq!(seg[3], p);
    }

    #[test]
    fn long_orbits_stay_exact() {
        // Forward then backward 200 steps lands exactly on the start.
        let l = IntMatrix::cat_map();
        let o = DyadicOrbit::new(&l, &[0.3f64, 0.7]);
        let far: Vec<f64> = o.point(200);
        let back: Vec<f64> = DyadicOrbit::new(&l, &far).point(-200);
        assert_eq!(back, o.start::<f64>());
    }
}
