//! Exact periodic points of linear toral automorphisms.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use super::smith::smith_normal_form;
use super::{det_bareiss, spectrum, zpow, IntMatrix, LinearError};
use crate::scalar::Real;

pub const DEFAULT_POINT_CAP: usize = 100_000;

/// A torus point with rational coordinates in [0, 1).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RationalPoint(pub Vec<BigRational>);

impl RationalPoint {
    pub fn origin(d: usize) -> Self {
        Self(vec![BigRational::zero(); d])
    }

    /// Splits an arbitrary rational vector into its representative in
    /// [0,1)^d and the integer part.
    pub fn reduce(v: Vec<BigRational>) -> (Self, Vec<BigInt>) {
        let shift: Vec<BigInt> = v.iter().map(|c| c.floor().to_integer()).collect();
        let frac = v
            .into_iter()
            .zip(&shift)
            .map(|(c, s)| c - BigRational::from_integer(s.clone()))
            .collect();
        (Self(frac), shift)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_vec<T: Real>(&self) -> Vec<T> {
        self.0
            .iter()
            .map(|c| T::from_f64(c.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(T::nan))
            .collect()
    }

    pub fn display(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        format!("({})", parts.join(", "))
    }
}

impl Serialize for RationalPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        parts.serialize(s)
    }
}

fn apply_rational(l: &IntMatrix, x: &RationalPoint) -> Vec<BigRational> {
    l.rows()
        .iter()
        .map(|r| {
            r.iter()
                .zip(&x.0)
                .map(|(a, c)| BigRational::from_integer(a.clone()) * c)
                .sum()
        })
        .collect()
}

fn shifted_minus_identity(l: &IntMatrix, period: u32) -> Vec<Vec<BigInt>> {
    let mut m = zpow(l.rows(), period);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= BigInt::one();
    }
    m
}

/// Number of points with `Lⁿx = x` on the torus, `|det(Lⁿ − I)|`.
pub fn periodic_point_count(l: &IntMatrix, period: u32) -> Result<BigInt, LinearError> {
    if period == 0 {
        return Err(LinearError::InvalidPeriod);
    }
    spectrum::check_hyperbolic(&l.char_poly())?;
    let det = det_bareiss(&shifted_minus_identity(l, period));
    if det.is_zero() {
        return Err(LinearError::NotHyperbolic { modulus: 1.0 });
    }
    Ok(det.abs())
}

/// All solutions of `Lⁿx ≡ x (mod ℤ^d)`, sorted lexicographically.
pub fn enumerate_periodic_points(
    l: &IntMatrix,
    period: u32,
    cap: usize,
) -> Result<Vec<RationalPoint>, LinearError> {
    let count = periodic_point_count(l, period)?;
    if count > BigInt::from(cap) {
        return Err(LinearError::TooManyPoints {
            count: count.to_string(),
            cap,
        });
    }
    let s = smith_normal_form(&shifted_minus_identity(l, period));
    let d = l.dim();
    let moduli: Vec<u64> = s
        .diag
        .iter()
        .map(|x| x.to_u64().expect("bounded by cap"))
        .collect();
    // (Lⁿ − I) x ∈ ℤ^d  ⇔  x = V·y with y_i ∈ (1/d_i)ℤ; V is unimodular so
    // distinct y mod ℤ^d give distinct x mod ℤ^d.
    let mut out = BTreeSet::new();
    let mut k = vec![0u64; d];
    loop {
        let y: Vec<BigRational> = k
            .iter()
            .zip(&moduli)
            .map(|(&ki, &di)| BigRational::new(BigInt::from(ki), BigInt::from(di)))
            .collect();
        let x: Vec<BigRational> = s
            .v
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&y)
                    .map(|(a, c)| BigRational::from_integer(a.clone()) * c)
                    .sum()
            })
            .collect();
        out.insert(RationalPoint::reduce(x).0);
        // odometer over the box ∏ [0, d_i)
        let mut i = 0;
        loop {
            if i == d {
                let pts: Vec<RationalPoint> = out.into_iter().collect();
                debug_assert_eq!(BigInt::from(pts.len()), count);
                return Ok(pts);
            }
            k[i] += 1;
            if k[i] < moduli[i] {
                break;
            }
            k[i] = 0;
            i += 1;
        }
    }
}

/// A periodic orbit of `L` with exact lift data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExactOrbit {
    /// Minimal period.
    pub period: u32,
    /// `p, L p, …, L^{τ−1} p` reduced to [0,1)^d; `points[0]` is the
    /// lexicographically smallest.
    pub points: Vec<RationalPoint>,
    /// Integer vector `v` with `L^τ p = p + v` for the lift of `points[0]`.
    #[serde(serialize_with = "serialize_ints")]
    pub shift: Vec<BigInt>,
}

fn serialize_ints<S: serde::Serializer>(v: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
    let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
    parts.serialize(s)
}

/// Orbits of minimal period exactly `period`, ordered by representative.
pub fn exact_orbits(
    l: &IntMatrix,
    period: u32,
    cap: usize,
) -> Result<Vec<ExactOrbit>, LinearError> {
    let pts = enumerate_periodic_points(l, period, cap)?;
    let mut seen = BTreeSet::new();
    let mut orbits = Vec::new();
    for p in pts {
        if seen.contains(&p) {
            continue;
        }
        let mut orbit = vec![p.clone()];
        let mut cur = p.clone();
        loop {
            let (next, _) = RationalPoint::reduce(apply_rational(l, &cur));
            if next == p {
                break;
            }
            orbit.push(next.clone());
            cur = next;
        }
        for q in &orbit {
            seen.insert(q.clone());
        }
        if orbit.len() as u32 != period {
            continue;
        }
        // orbit[0] = p is the smallest member because points arrive sorted.
        let mut lifted = p.0.clone();
        for _ in 0..period {
            lifted = apply_rational(l, &RationalPoint(lifted));
        }
        let shift = lifted
            .iter()
            .zip(&p.0)
            .map(|(a, b)| {
                let diff = a - b;
                debug_assert!(diff.is_integer());
                diff.to_integer()
            })
            .collect();
        orbits.push(ExactOrbit {
            period,
            points: orbit,
            shift,
        });
    }
    Ok(orbits)
}

pub fn divisors(n: u32) -> Vec<u32> {
    (1..=n).filter(|q| n % q == 0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rp(c: &[(i64, i64)]) -> RationalPoint {
        RationalPoint(
            c.iter()
                .map(|&(a, b)| BigRational::new(a.into(), b.into()))
                .collect(),
        )
    }

    #[test]
    fn cat_map_counts() {
        let l = IntMatrix::cat_map();
        assert_eq!(periodic_point_count(&l, 1).unwrap(), BigInt::from(1));
        assert_eq!(periodic_point_count(&l, 2).unwrap(), BigInt::from(5));
        assert_eq!(periodic_point_count(&l, 0), Err(LinearError::InvalidPeriod));
    }

    #[test]
    fn cat_map_fixed_point_is_origin() {
        let pts = enumerate_periodic_points(&IntMatrix::cat_map(), 1, DEFAULT_POINT_CAP).unwrap();
        assert_eq!(pts, vec![RationalPoint::origin(2)]);
    }

    #[test]
    fn cat_map_period_two() {
        let pts = enumerate_periodic_points(&IntMatrix::cat_map(), 2, DEFAULT_POINT_CAP).unwrap();
        assert_eq!(pts.len(), 5);
        assert!(pts.contains(&RationalPoint::origin(2)));
        assert!(pts.contains(&rp(&[(1, 5), (2, 5)])));
        let orbits = exact_orbits(&IntMatrix::cat_map(), 2, DEFAULT_POINT_CAP).unwrap();
        assert_eq!(orbits.len(), 2);
        for o in &orbits {
            assert_eq!(o.points.len(), 2);
        }
    }

    #[test]
    fn identity_is_rejected() {
        let id = IntMatrix::from_i64(&[vec![1, 0], vec![0, 1]]).unwrap();
        assert!(matches!(
            periodic_point_count(&id, 1),
            Err(LinearError::NotHyperbolic { .. })
        ));
    }

    #[test]
    fn cap_is_enforced() {
        let e = enumerate_periodic_points(&IntMatrix::cat_map(), 8, 100).unwrap_err();
        assert!(matches!(e, LinearError::TooManyPoints { .. }));
    }

    #[test]
    fn orbit_counts_sum_over_divisors() {
        let l = IntMatrix::cat_map();
        for tau in 1..=6u32 {
            let total: usize = divisors(tau)
                .into_iter()
                .map(|q| q as usize * exact_orbits(&l, q, DEFAULT_POINT_CAP).unwrap().len())
                .sum();
            assert_eq!(BigInt::from(total), periodic_point_count(&l, tau).unwrap());
        }
    }

    #[test]
    fn shift_is_exact_lattice_vector() {
        let l = IntMatrix::cat_map();
        for o in exact_orbits(&l, 3, DEFAULT_POINT_CAP).unwrap() {
            let mut x = o.points[0].0.clone();
            for _ in 0..3 {
                x = apply_rational(&l, &RationalPoint(x));
            }
            for i in 0..2 {
                assert_eq!(
                    &x[i] - &o.points[0].0[i],
                    BigRational::from_integer(o.shift[i].clone())
                );
            }
        }
    }
}
