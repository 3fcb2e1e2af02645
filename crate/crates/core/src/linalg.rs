//! Small dense linear algebra for the d ≤ 8 matrices that appear along orbits.

use std::ops::{Index, IndexMut, Mul};

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<T>]) -> Self {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        let mut m = Self::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            for i in 0..r {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn set_column(&mut self, j: usize, v: &[T]) {
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&a| a * a).sum::<T>().sqrt()
    }

    /// Spectral norm, from the largest eigenvalue of AᵀA by power iteration.
    pub fn op_norm(&self) -> T {
        let ata = self.transpose().matmul(self);
        let n = ata.rows;
        if n == 0 {
            return T::zero();
        }
        let mut v: Vec<T> = (0..n).map(|i| T::one() + T::lit(0.1) * T::from_usize_lossy(i)).collect();
        let mut lambda = T::zero();
        for _ in 0..500 {
            let w = ata.mul_vec(&v);
            let nw = norm(&w);
            if nw == T::zero() {
                return T::zero();
            }
            let next = nw / norm(&v);
            v = w.iter().map(|&x| x / nw).collect();
            if (next - lambda).abs() <= T::epsilon() * T::lit(16.0) * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }

    /// Smallest singular value, via the spectral norm of the inverse.
    pub fn min_singular_value(&self) -> Option<T> {
        let inv = self.inverse()?;
        Some(T::one() / inv.op_norm())
    }

    /// Householder QR: `self = Q·R` with Q orthogonal (square) and R upper
    /// triangular with non-negative diagonal.
    pub fn qr(&self) -> (Self, Self) {
        let m = self.rows;
        let n = self.cols;
        let mut r = self.clone();
        let mut q = Self::identity(m);
        for k in 0..n.min(m) {
            let mut x: Vec<T> = (k..m).map(|i| r[(i, k)]).collect();
            let alpha = norm(&x);
            if alpha == T::zero() {
                continue;
            }
            let sign = if x[0] >= T::zero() { T::one() } else { -T::one() };
            x[0] += sign * alpha;
            let vn = norm(&x);
            if vn == T::zero() {
                continue;
            }
            for xi in x.iter_mut() {
                *xi /= vn;
            }
            // R ← (I − 2vvᵀ) R on rows k..m
            for j in 0..n {
                let s = (k..m).fold(T::zero(), |acc, i| acc + x[i - k] * r[(i, j)]);
                let two_s = s + s;
                for i in k..m {
                    r[(i, j)] -= two_s * x[i - k];
                }
            }
            // Q ← Q (I − 2vvᵀ) on cols k..m
            for i in 0..m {
                let s = (k..m).fold(T::zero(), |acc, j| acc + q[(i, j)] * x[j - k]);
                let two_s = s + s;
                for j in k..m {
                    q[(i, j)] -= two_s * x[j - k];
                }
            }
        }
        // non-negative diagonal
        for k in 0..n.min(m) {
            if r[(k, k)] < T::zero() {
                for j in 0..n {
                    r[(k, j)] = -r[(k, j)];
                }
                for i in 0..m {
                    q[(i, k)] = -q[(i, k)];
                }
            }
        }
        for i in 0..m {
            for j in 0..n.min(i) {
                r[(i, j)] = T::zero();
            }
        }
        (q, r)
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Option<Lu<T>> {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[(i, k)].abs()))
                .fold((k, -T::one()), |best, c| if c.1 > best.1 { c } else { best });
            if pmax == T::zero() || !pmax.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = a[(k, k)];
            for i in k + 1..n {
                let factor = a[(i, k)] / pivot;
                a[(i, k)] = factor;
                for j in k + 1..n {
                    let akj = a[(k, j)];
                    a[(i, j)] -= factor * akj;
                }
            }
        }
        Some(Lu { lu: a, perm, sign })
    }

    pub fn det(&self) -> T {
        self.lu().map_or(T::zero(), |lu| lu.det())
    }

    pub fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        self.lu().map(|lu| lu.solve(b))
    }

    pub fn inverse(&self) -> Option<Self> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            inv.set_column(j, &lu.solve(&e));
        }
        Some(inv)
    }

    /// Principal sub-block `[r0, r1) × [c0, c1)`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        Self::from_fn(r1 - r0, c1 - c0, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| U::lit(a.to_f64_lossy())).collect(),
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

impl<T: Real> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &Mat<T> {
    type Output = Mat<T>;
    fn mul(self, rhs: Self) -> Mat<T> {
        self.matmul(rhs)
    }
}

/// Packed LU factors.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Mat<T>,
    perm: Vec<usize>,
    sign: T,
}

impl<T: Real> Lu<T> {
    pub fn det(&self) -> T {
        (0..self.lu.rows).fold(self.sign, |acc, i| acc * self.lu[(i, i)])
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                x[i] = x[i] - l * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[(i, k)];
                x[i] = x[i] - u * x[k];
            }
            x[i] = x[i] / self.lu[(i, i)];
        }
        x
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn normalize<T: Real>(a: &[T]) -> Vec<T> {
    let n = norm(a);
    a.iter().map(|&x| x / n).collect()
}

pub fn axpy<T: Real>(alpha: T, x: &[T], y: &[T]) -> Vec<T> {
    x.iter().zip(y).map(|(&a, &b)| alpha * a + b).collect()
}

pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Orthonormal basis of the span of `vectors` by modified Gram–Schmidt
/// (two passes). Vectors that are numerically dependent are dropped.
pub fn orthonormal_basis<T: Real>(vectors: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        let n0 = norm(&w);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, &bi) in w.iter_mut().zip(b) {
                    *wi = *wi - c * bi;
                }
            }
        }
        let nw = norm(&w);
        if nw > T::lit(1e-10) * n0.max(T::min_positive_value()) {
            basis.push(w.iter().map(|&x| x / nw).collect());
        }
    }
    basis
}

/// Distance from `v` to the span of an orthonormal basis.
pub fn distance_to_span<T: Real>(v: &[T], basis: &[Vec<T>]) -> T {
    let mut w = v.to_vec();
    for b in basis {
        let c = dot(&w, b);
        for (wi, &bi) in w.iter_mut().zip(b) {
            *wi = *wi - c * bi;
        }
    }
    norm(&w)
}

/// Non-trivial kernel vector of an r × (r+1) matrix of full rank, by the
/// generalized cross product (signed maximal minors).
pub fn kernel_vector<T: Real>(m: &Mat<T>) -> Vec<T> {
    let r = m.rows();
    let c = m.cols();
    assert_eq!(c, r + 1, "kernel_vector expects r × (r+1)");
    if r == 0 {
        return vec![T::one()];
    }
    (0..c)
        .map(|skip| {
            let minor = Mat::from_fn(r, r, |i, j| m[(i, if j < skip { j } else { j + 1 })]);
            let d = minor.det();
            if skip % 2 == 0 {
                d
            } else {
                -d
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_reconstructs_and_is_orthogonal() {
        let a = Mat::from_rows(&[
            vec![2.0, 1.0, 0.5],
            vec![1.0, 1.0, -3.0],
            vec![0.0, 4.0, 1.0],
        ]);
        let (q, r) = a.qr();
        let back = q.matmul(&r);
        assert!(back.sub(&a).max_abs() < 1e-13);
        let qtq = q.transpose().matmul(&q);
        assert!(qtq.sub(&Mat::identity(3)).max_abs() < 1e-14);
        for i in 0..3 {
            assert!(r[(i, i)] >= 0.0);
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn lu_det_and_inverse() {
        let a: Mat<f64> = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]);
        assert!((a.det() - 1.0).abs() < 1e-15);
        let inv = a.inverse().unwrap();
        assert!(inv.sub(&Mat::from_rows(&[vec![1.0, -1.0], vec![-1.0, 2.0]])).max_abs() < 1e-15);
        assert!(Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).lu().is_none());
    }

    #[test]
    fn op_norm_of_cat_map_is_its_largest_eigenvalue() {
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]);
        let mu = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((a.op_norm() - mu).abs() < 1e-12);
        assert!((a.min_singular_value().unwrap() - 1.0 / mu).abs() < 1e-12);
    }

    #[test]
    fn kernel_vector_is_annihilated() {
        let m: Mat<f64> = Mat::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 1.0, -1.0]]);
        let k = kernel_vector(&m);
        assert!(m.mul_vec(&k).iter().all(|x| x.abs() < 1e-14));
        assert!(norm(&k) > 0.1);
    }

    #[test]
    fn f32_qr_works_too() {
        let a: Mat<f32> = Mat::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0]]);
        let (q, r) = a.qr();
        assert!(q.matmul(&r).sub(&a).max_abs() < 1e-5);
    }
}
