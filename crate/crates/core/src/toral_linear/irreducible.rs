//! Exact irreducibility and factorization of monic integer polynomials over ℚ.
//!
//! Stages, cheapest first:
//! 1. repeated factors via gcd(f, f′) over ℚ;
//! 2. rational (integer) roots, which must divide the constant term;
//! 3. distinct-degree factorization modulo small primes. A prime where `f`
//!    stays irreducible, or a set of primes whose factor-degree patterns admit
//!    no common proper subset sum, proves irreducibility;
//! 4. a complete search: factor `f` modulo one prime `p` larger than twice the
//!    Mignotte coefficient bound and test every subset product of the modular
//!    factors, lifted to symmetric residues, for exact division.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::poly::{gcd_over_q, IntPoly};
use super::LinearError;

/// Largest degree accepted by [`is_irreducible_over_q`].
pub const MAX_DEGREE: usize = 8;

const SMALL_PRIMES: [u64; 25] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
];

/// Why a polynomial was declared irreducible.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum IrreducibleEvidence {
    /// Degree ≤ 1.
    Linear,
    /// `f mod p` is irreducible, hence so is `f`.
    IrreducibleModPrime { prime: u64 },
    /// Factor-degree patterns modulo these primes share no proper subset sum.
    DegreePatterns { patterns: Vec<(u64, Vec<usize>)> },
    /// No subset of the modular factors lifts to an integer factor.
    ExhaustiveLift {
        prime: u64,
        coefficient_bound: String,
        modular_degrees: Vec<usize>,
    },
}

/// Outcome of the irreducibility test with its certificate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Irreducibility {
    Irreducible(IrreducibleEvidence),
    /// Irreducible monic factors whose product is the input.
    Reducible { factors: Vec<IntPoly> },
}

impl Irreducibility {
    pub fn is_irreducible(&self) -> bool {
        matches!(self, Self::Irreducible(_))
    }

    pub fn factors(&self) -> Option<&[IntPoly]> {
        match self {
            Self::Reducible { factors } => Some(factors),
            Self::Irreducible(_) => None,
        }
    }
}

/// Decides irreducibility over ℚ of a monic integer polynomial of degree ≤ 8.
pub fn is_irreducible_over_q(f: &IntPoly) -> Result<Irreducibility, LinearError> {
    check_input(f)?;
    let factors = factor_monic(f)?;
    if factors.len() > 1 {
        return Ok(Irreducibility::Reducible { factors });
    }
    Ok(Irreducibility::Irreducible(irreducible_evidence(f)?))
}

fn check_input(f: &IntPoly) -> Result<(), LinearError> {
    if f.degree() > MAX_DEGREE {
        return Err(LinearError::DegreeTooLarge {
            degree: f.degree(),
            max: MAX_DEGREE,
        });
    }
    if !f.is_monic() {
        return Err(LinearError::NotMonic);
    }
    Ok(())
}

/// Complete factorization of a monic polynomial into monic irreducibles,
/// sorted by (degree, coefficients).
pub fn factor_monic(f: &IntPoly) -> Result<Vec<IntPoly>, LinearError> {
    check_input(f)?;
    let mut out = Vec::new();
    factor_into(f, &mut out)?;
    out.sort_by(|a, b| a.degree().cmp(&b.degree()).then_with(|| a.cmp(b)));
    Ok(out)
}

fn factor_into(f: &IntPoly, out: &mut Vec<IntPoly>) -> Result<(), LinearError> {
    if f.degree() <= 1 {
        if f.degree() == 1 {
            out.push(f.clone());
        }
        return Ok(());
    }
    // repeated factors
    let g = gcd_over_q(f, &f.derivative());
    if g.degree() > 0 {
        let g = monic_sign(g);
        let q = f.div_exact(&g).expect("gcd divides f");
        factor_into(&g, out)?;
        factor_into(&q, out)?;
        return Ok(());
    }
    if let Some(r) = integer_root(f) {
        let lin = IntPoly::linear_factor(&r);
        let q = f.div_exact(&lin).expect("root gives factor");
        out.push(lin);
        return factor_into(&q, out);
    }
    if small_prime_evidence(f).is_some() {
        out.push(f.clone());
        return Ok(());
    }
    match split_by_lifting(f)? {
        Some((g, h)) => {
            factor_into(&g, out)?;
            factor_into(&h, out)
        }
        None => {
            out.push(f.clone());
            Ok(())
        }
    }
}

fn monic_sign(g: IntPoly) -> IntPoly {
    if g.leading().is_negative() {
        g.neg()
    } else {
        g
    }
}

/// Certificate for a polynomial already known to be squarefree with no
/// proper factor.
fn irreducible_evidence(f: &IntPoly) -> Result<IrreducibleEvidence, LinearError> {
    if f.degree() <= 1 {
        return Ok(IrreducibleEvidence::Linear);
    }
    if let Some(ev) = small_prime_evidence(f) {
        return Ok(ev);
    }
    let (p, bound) = lifting_prime(f)?;
    let fp = reduce(f, p);
    let degrees = factor_mod_p(&fp, p).iter().map(|g| g.len() - 1).collect();
    Ok(IrreducibleEvidence::ExhaustiveLift {
        prime: p,
        coefficient_bound: bound.to_string(),
        modular_degrees: degrees,
    })
}

/// Integer root by the rational root theorem. Skipped when the constant term
/// is too large for trial division.
fn integer_root(f: &IntPoly) -> Option<BigInt> {
    let a0 = f.coeff(0);
    if a0.is_zero() {
        return Some(BigInt::zero());
    }
    let mag = a0.abs().to_u64()?;
    if mag > 1_000_000_000_000 {
        return None;
    }
    let mut d = 1u64;
    while d * d <= mag {
        if mag % d == 0 {
            for cand in [d, mag / d] {
                for r in [BigInt::from(cand), -BigInt::from(cand)] {
                    if f.eval(&r).is_zero() {
                        return Some(r);
                    }
                }
            }
        }
        d += 1;
    }
    None
}

fn small_prime_evidence(f: &IntPoly) -> Option<IrreducibleEvidence> {
    let n = f.degree();
    let mut possible: BTreeSet<usize> = (1..n).collect();
    let mut patterns = Vec::new();
    for &p in &SMALL_PRIMES {
        let fp = reduce(f, p);
        if fp.len() != n + 1 || !is_squarefree_mod_p(&fp, p) {
            continue;
        }
        let pattern = distinct_degree_pattern(&fp, p);
        if pattern.len() == 1 {
            return Some(IrreducibleEvidence::IrreducibleModPrime { prime: p });
        }
        let sums = subset_sums(&pattern);
        possible.retain(|k| sums.contains(k));
        patterns.push((p, pattern));
        if possible.is_empty() {
            return Some(IrreducibleEvidence::DegreePatterns { patterns });
        }
    }
    None
}

fn subset_sums(parts: &[usize]) -> BTreeSet<usize> {
    let mut sums = BTreeSet::from([0usize]);
    for &d in parts {
        let next: Vec<usize> = sums.iter().map(|s| s + d).collect();
        sums.extend(next);
    }
    sums
}

/// Mignotte bound on the coefficients of any proper monic factor.
fn mignotte_bound(f: &IntPoly) -> BigInt {
    let n = f.degree();
    let norm = f.norm_sq().to_biguint().expect("non-negative").sqrt() + BigUint::one();
    let mut best = BigInt::one();
    for k in 1..n {
        for j in 0..=k {
            let c = binomial(k, j);
            if c > best {
                best = c;
            }
        }
    }
    best * BigInt::from(norm)
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

fn lifting_prime(f: &IntPoly) -> Result<(u64, BigInt), LinearError> {
    let bound = mignotte_bound(f);
    let start = (&bound * 2u32 + 1u32).to_u64().filter(|&s| s < (1u64 << 61));
    let Some(start) = start else {
        return Err(LinearError::CoefficientsTooLarge);
    };
    let mut p = start.max(1009) | 1;
    loop {
        if is_prime_u64(p) {
            let fp = reduce(f, p);
            if fp.len() == f.degree() + 1 && is_squarefree_mod_p(&fp, p) {
                return Ok((p, bound));
            }
        }
        p += 2;
        if p >= (1u64 << 62) {
            return Err(LinearError::CoefficientsTooLarge);
        }
    }
}

/// Finds a nontrivial monic factorization `f = g·h`, or proves none exists.
fn split_by_lifting(f: &IntPoly) -> Result<Option<(IntPoly, IntPoly)>, LinearError> {
    let (p, _) = lifting_prime(f)?;
    let modular = factor_mod_p(&reduce(f, p), p);
    let r = modular.len();
    if r < 2 {
        return Ok(None);
    }
    for size in 1..=r / 2 {
        for subset in combinations(r, size) {
            let mut prod = vec![1u64];
            for &i in &subset {
                prod = mul_mod(&prod, &modular[i], p);
            }
            let g = symmetric_lift(&prod, p);
            if g.degree() == 0 {
                continue;
            }
            if let Some(h) = f.div_exact(&g) {
                return Ok(Some((g, h)));
            }
        }
    }
    Ok(None)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn symmetric_lift(g: &[u64], p: u64) -> IntPoly {
    let half = p / 2;
    IntPoly::from_ascending(
        g.iter()
            .map(|&c| {
                if c > half {
                    BigInt::from(c) - BigInt::from(p)
                } else {
                    BigInt::from(c)
                }
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Arithmetic in 𝔽_p[x]; polynomials are ascending coefficient vectors with no
// trailing zeros. Requires p < 2^62.

type PolyP = Vec<u64>;

fn reduce(f: &IntPoly, p: u64) -> PolyP {
    let pb = BigInt::from(p);
    let mut v: PolyP = f
        .coeffs()
        .iter()
        .map(|c| c.mod_floor(&pb).to_u64().expect("reduced below p"))
        .collect();
    trim(&mut v);
    v
}

fn trim(v: &mut PolyP) {
    while v.last() == Some(&0) {
        v.pop();
    }
}

#[inline]
fn mulm(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn powm(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1u64;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = mulm(r, a, p);
        }
        a = mulm(a, a, p);
        e >>= 1;
    }
    r
}

fn inv_mod(a: u64, p: u64) -> u64 {
    powm(a, p - 2, p)
}

fn sub_mod(a: &PolyP, b: &PolyP, p: u64) -> PolyP {
    let n = a.len().max(b.len());
    let mut v: PolyP = (0..n)
        .map(|i| {
            let x = a.get(i).copied().unwrap_or(0);
            let y = b.get(i).copied().unwrap_or(0);
            (x + p - y) % p
        })
        .collect();
    trim(&mut v);
    v
}

fn mul_mod(a: &PolyP, b: &PolyP, p: u64) -> PolyP {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut v = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            v[i + j] = (v[i + j] + mulm(x, y, p)) % p;
        }
    }
    trim(&mut v);
    v
}

fn divrem_mod(a: &PolyP, b: &PolyP, p: u64) -> (PolyP, PolyP) {
    assert!(!b.is_empty(), "division by zero polynomial");
    let mut r = a.clone();
    let db = b.len() - 1;
    if r.len() <= db {
        return (Vec::new(), r);
    }
    let inv_lead = inv_mod(b[db], p);
    let mut q = vec![0u64; r.len() - db];
    while r.len() > db {
        let k = r.len() - 1 - db;
        let c = mulm(r[r.len() - 1], inv_lead, p);
        q[k] = c;
        for (j, &bc) in b.iter().enumerate() {
            r[k + j] = (r[k + j] + p - mulm(c, bc, p)) % p;
        }
        trim(&mut r);
        if r.len() > k + db + 1 {
            unreachable!("leading term not cancelled");
        }
    }
    trim(&mut q);
    (q, r)
}

fn rem_mod(a: &PolyP, b: &PolyP, p: u64) -> PolyP {
    divrem_mod(a, b, p).1
}

fn monic(a: &PolyP, p: u64) -> PolyP {
    match a.last() {
        None => Vec::new(),
        Some(&l) => {
            let inv = inv_mod(l, p);
            a.iter().map(|&c| mulm(c, inv, p)).collect()
        }
    }
}

fn gcd_mod(a: &PolyP, b: &PolyP, p: u64) -> PolyP {
    let mut x = a.clone();
    let mut y = b.clone();
    while !y.is_empty() {
        let r = rem_mod(&x, &y, p);
        x = y;
        y = r;
    }
    monic(&x, p)
}

fn derivative_mod(a: &PolyP, p: u64) -> PolyP {
    let mut v: PolyP = a
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| mulm(c, (i as u64) % p, p))
        .collect();
    trim(&mut v);
    v
}

fn is_squarefree_mod_p(f: &PolyP, p: u64) -> bool {
    let d = derivative_mod(f, p);
    if d.is_empty() {
        return false;
    }
    gcd_mod(f, &d, p).len() == 1
}

/// `base^e mod m` with a big exponent.
fn pow_poly_mod(base: &PolyP, e: &BigUint, m: &PolyP, p: u64) -> PolyP {
    let mut result: PolyP = vec![1];
    let b = rem_mod(base, m, p);
    for i in (0..e.bits()).rev() {
        result = rem_mod(&mul_mod(&result, &result, p), m, p);
        if e.bit(i) {
            result = rem_mod(&mul_mod(&result, &b, p), m, p);
        }
    }
    result
}

/// Degrees of the irreducible factors of a squarefree monic `f` mod p.
fn distinct_degree_pattern(f: &PolyP, p: u64) -> Vec<usize> {
    distinct_degree(f, p)
        .into_iter()
        .flat_map(|(deg, g)| std::iter::repeat(deg).take((g.len() - 1) / deg))
        .collect()
}

/// Distinct-degree factorization: pairs (d, product of all degree-d factors).
fn distinct_degree(f: &PolyP, p: u64) -> Vec<(usize, PolyP)> {
    let mut out = Vec::new();
    let mut rest = monic(f, p);
    let x: PolyP = vec![0, 1];
    let pe = BigUint::from(p);
    let mut h = x.clone();
    let mut d = 1usize;
    while rest.len() - 1 >= 2 * d {
        h = pow_poly_mod(&h, &pe, &rest, p);
        let g = gcd_mod(&rest, &sub_mod(&h, &x, p), p);
        if g.len() > 1 {
            out.push((d, g.clone()));
            rest = divrem_mod(&rest, &g, p).0;
            rest = monic(&rest, p);
            h = rem_mod(&h, &rest, p);
        }
        d += 1;
    }
    if rest.len() > 1 {
        out.push((rest.len() - 1, rest));
    }
    out
}

/// Full factorization of a squarefree monic polynomial over 𝔽_p, p odd.
fn factor_mod_p(f: &PolyP, p: u64) -> Vec<PolyP> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_f00d ^ p);
    let mut out = Vec::new();
    for (d, g) in distinct_degree(f, p) {
        equal_degree_split(&g, d, p, &mut rng, &mut out);
    }
    out
}

fn equal_degree_split(g: &PolyP, d: usize, p: u64, rng: &mut ChaCha8Rng, out: &mut Vec<PolyP>) {
    let n = g.len() - 1;
    if n == d {
        out.push(monic(g, p));
        return;
    }
    let e = (BigUint::from(p).pow(d as u32) - 1u32) / 2u32;
    loop {
        let mut a: PolyP = (0..n).map(|_| rng.gen_range(0..p)).collect();
        trim(&mut a);
        if a.len() < 2 {
            continue;
        }
        let b = sub_mod(&pow_poly_mod(&a, &e, g, p), &vec![1], p);
        let h = gcd_mod(g, &b, p);
        if h.len() > 1 && h.len() < g.len() {
            let q = monic(&divrem_mod(g, &h, p).0, p);
            equal_degree_split(&h, d, p, rng, out);
            equal_degree_split(&q, d, p, rng, out);
            return;
        }
    }
}

fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for sp in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % sp == 0 {
            return n == sp;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powm(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulm(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> IntPoly {
        IntPoly::from_descending_i64(c)
    }

    #[test]
    fn golden_polynomial_is_irreducible() {
        let res = is_irreducible_over_q(&p(&[1, -3, 1])).unwrap();
        assert!(res.is_irreducible());
    }

    #[test]
    fn square_of_golden_polynomial_is_reducible() {
        let f = p(&[1, -3, 1]);
        let res = is_irreducible_over_q(&f.mul(&f)).unwrap();
        assert_eq!(res.factors().unwrap(), &[f.clone(), f]);
    }

    #[test]
    fn difference_of_squares() {
        let res = is_irreducible_over_q(&p(&[1, 0, -1])).unwrap();
        assert_eq!(res.factors().unwrap(), &[p(&[1, -1]), p(&[1, 1])]);
    }

    #[test]
    fn product_without_rational_roots_needs_lifting() {
        // (x² − 3x + 1)(x² − 7x + 1): no integer roots, reducible.
        let f = p(&[1, -3, 1]).mul(&p(&[1, -7, 1]));
        let res = is_irreducible_over_q(&f).unwrap();
        assert_eq!(res.factors().unwrap(), &[p(&[1, -7, 1]), p(&[1, -3, 1])]);
    }

    #[test]
    fn swinnerton_dyer_like_quartic_is_irreducible() {
        // x⁴ − 10x² + 1 is reducible mod every prime but irreducible over ℚ.
        let res = is_irreducible_over_q(&p(&[1, 0, -10, 0, 1])).unwrap();
        match res {
            Irreducibility::Irreducible(IrreducibleEvidence::ExhaustiveLift { .. })
            | Irreducibility::Irreducible(IrreducibleEvidence::DegreePatterns { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cubic_companion_is_irreducible() {
        assert!(is_irreducible_over_q(&p(&[1, -3, 0, 1])).unwrap().is_irreducible());
    }

    #[test]
    fn degree_limit() {
        let f = p(&[1, 0, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert!(matches!(
            is_irreducible_over_q(&f),
            Err(LinearError::DegreeTooLarge { degree: 9, .. })
        ));
    }

    #[test]
    fn modular_factorization_recovers_all_linear_factors() {
        // (x−1)(x−2)(x−3) mod 1009
        let f = p(&[1, -6, 11, -6]);
        let fs = factor_mod_p(&reduce(&f, 1009), 1009);
        assert_eq!(fs.len(), 3);
    }

    #[test]
    fn primality() {
        assert!(is_prime_u64(1_000_000_007));
        assert!(!is_prime_u64(1_000_000_007 * 3));
        assert!(is_prime_u64(2));
        assert!(!is_prime_u64(1));
    }
}
