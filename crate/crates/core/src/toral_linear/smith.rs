//! Smith normal form over ℤ with unimodular transforms.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

/// `u · m · v = diag(d)` with `d_i | d_{i+1}`, `d_i ≥ 0`, and `u`, `v`
/// unimodular.
#[derive(Clone, Debug)]
pub struct Smith {
    pub u: Vec<Vec<BigInt>>,
    pub v: Vec<Vec<BigInt>>,
    pub diag: Vec<BigInt>,
}

fn identity(n: usize) -> Vec<Vec<BigInt>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect()
}

/// Smith form of a square integer matrix.
pub fn smith_normal_form(m: &[Vec<BigInt>]) -> Smith {
    let n = m.len();
    let mut a: Vec<Vec<BigInt>> = m.to_vec();
    let mut u = identity(n);
    let mut v = identity(n);

    for t in 0..n {
        // Pivot: smallest non-zero entry in the trailing block.
        loop {
            let mut best: Option<(usize, usize)> = None;
            for i in t..n {
                for j in t..n {
                    if !a[i][j].is_zero()
                        && best.map_or(true, |(bi, bj)| a[i][j].abs() < a[bi][bj].abs())
                    {
                        best = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = best else {
                break;
            };
            a.swap(t, pi);
            u.swap(t, pi);
            for row in a.iter_mut() {
                row.swap(t, pj);
            }
            for row in v.iter_mut() {
                row.swap(t, pj);
            }

            let mut clean = true;
            // Column t below the pivot.
            for i in t + 1..n {
                if a[i][t].is_zero() {
                    continue;
                }
                let q = a[i][t].div_floor(&a[t][t]);
                for j in 0..n {
                    let at = a[t][j].clone();
                    a[i][j] -= &q * at;
                    let ut = u[t][j].clone();
                    u[i][j] -= &q * ut;
                }
                if !a[i][t].is_zero() {
                    clean = false;
                }
            }
            // Row t right of the pivot.
            for j in t + 1..n {
                if a[t][j].is_zero() {
                    continue;
                }
                let q = a[t][j].div_floor(&a[t][t]);
                for i in 0..n {
                    let at = a[i][t].clone();
                    a[i][j] -= &q * at;
                    let vt = v[i][t].clone();
                    v[i][j] -= &q * vt;
                }
                if !a[t][j].is_zero() {
                    clean = false;
                }
            }
            if !clean {
                continue;
            }
            // Divisibility: fold any offending row into row t.
            let mut offending = None;
            'outer: for i in t + 1..n {
                for j in t + 1..n {
                    if !a[i][j].is_multiple_of(&a[t][t]) {
                        offending = Some(i);
                        break 'outer;
                    }
                }
            }
            match offending {
                Some(i) => {
                    for j in 0..n {
                        let ai = a[i][j].clone();
                        a[t][j] += ai;
                        let ui = u[i][j].clone();
                        u[t][j] += ui;
                    }
                }
                None => break,
            }
        }
        if a[t][t].is_negative() {
            for j in 0..n {
                a[t][j] = -a[t][j].clone();
                u[t][j] = -u[t][j].clone();
            }
        }
    }
    let diag = (0..n).map(|i| a[i][i].clone()).collect();
    Smith { u, v, diag }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(m: &[&[i64]]) -> Vec<Vec<BigInt>> {
        m.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect()
    }

    fn mul(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
        let n = a.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| &a[i][k] * &b[k][j]).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn transforms_reproduce_diagonal() {
        let m = big(&[&[4, 3], &[3, 1]]);
        let s = smith_normal_form(&m);
        let d = mul(&mul(&s.u, &m), &s.v);
        assert_eq!(d, big(&[&[1, 0], &[0, 5]]));
        assert_eq!(s.diag, vec![BigInt::from(1), BigInt::from(5)]);
    }

    #[test]
    fn divisibility_chain() {
        let m = big(&[&[2, 0, 0], &[0, 3, 0], &[0, 0, 4]]);
        let s = smith_normal_form(&m);
        assert_eq!(s.diag, vec![BigInt::from(1), BigInt::from(2), BigInt::from(12)]);
        let d = mul(&mul(&s.u, &m), &s.v);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { s.diag[i].clone() } else { BigInt::zero() };
                assert_eq!(d[i][j], want);
            }
        }
    }
}
