//! Small fixed-capacity vectors and tensors (dimension 1 to 3).
//!
//! Configuration vectors, velocity gradients and conformation tensors never
//! exceed 3×3, so storage is inline and the dimension is carried at runtime.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::scalar::Real;

pub const MAX_DIM: usize = 3;

/// Configuration-space vector of dimension `dim` ≤ 3.
#[derive(Clone, Copy, PartialEq)]
pub struct Vector<T> {
    dim: usize,
    c: [T; MAX_DIM],
}

impl<T: Real> Vector<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1, 2 or 3");
        Self {
            dim,
            c: [T::zero(); MAX_DIM],
        }
    }

    pub fn from_slice(values: &[T]) -> Self {
        let mut v = Self::zeros(values.len());
        v.c[..values.len()].copy_from_slice(values);
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.c[..self.dim]
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.c[..self.dim]
    }

    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.dim, other.dim);
        let mut acc = T::zero();
        for i in 0..self.dim {
            acc += self.c[i] * other.c[i];
        }
        acc
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        for x in out.as_mut_slice() {
            *x *= s;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    /// Outer product `self ⊗ other`.
    pub fn outer(&self, other: &Self) -> Tensor<T> {
        debug_assert_eq!(self.dim, other.dim);
        let mut t = Tensor::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.m[i][j] = self.c[i] * other.c[j];
            }
        }
        t
    }
}

impl<T: Real> Index<usize> for Vector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.as_slice()[i]
    }
}

impl<T: Real> IndexMut<usize> for Vector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.as_mut_slice()[i]
    }
}

impl<T: Real> Add for Vector<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for i in 0..self.dim {
            self.c[i] += rhs.c[i];
        }
        self
    }
}

impl<T: Real> Sub for Vector<T> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..self.dim {
            self.c[i] -= rhs.c[i];
        }
        self
    }
}

impl<T: fmt::Debug> fmt::Debug for Vector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.c[..self.dim]).finish()
    }
}

/// Square `dim × dim` tensor, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct Tensor<T> {
    dim: usize,
    m: [[T; MAX_DIM]; MAX_DIM],
}

impl<T: Real> Tensor<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1, 2 or 3");
        Self {
            dim,
            m: [[T::zero(); MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, T::one())
    }

    /// `s · I`.
    pub fn scalar(dim: usize, s: T) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            t.m[i][i] = s;
        }
        t
    }

    pub fn diag(values: &[T]) -> Self {
        let mut t = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            t.m[i][i] = v;
        }
        t
    }

    /// Builds a tensor from rows; panics when the rows are not square.
    pub fn from_rows(rows: &[&[T]]) -> Self {
        let dim = rows.len();
        let mut t = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "tensor rows must form a square matrix");
            t.m[i][..dim].copy_from_slice(row);
        }
        t
    }

    /// Converts from `f64` rows, e.g. for literals in tests and configs.
    pub fn from_f64_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut t = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "tensor rows must form a square matrix");
            for (j, &v) in row.iter().enumerate() {
                t.m[i][j] = T::lit(v);
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.m[i][i]).fold(T::zero(), |a, b| a + b)
    }

    pub fn scale(&self, s: T) -> Self {
        let mut t = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.m[i][j] *= s;
            }
        }
        t
    }

    /// `(M + Mᵀ)/2`
    pub fn symmetric_part(&self) -> Self {
        (*self + self.transpose()).scale(T::lit(0.5))
    }

    /// `(M − Mᵀ)/2`
    pub fn skew_part(&self) -> Self {
        (*self - self.transpose()).scale(T::lit(0.5))
    }

    /// `[M, N] = MN − NM`
    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    /// Frobenius inner product `M : N`.
    pub fn contract(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.m[i][j] * other.m[i][j];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> T {
        self.contract(self).sqrt()
    }

    /// Operator 2-norm (largest singular value).
    pub fn spectral_norm(&self) -> T {
        let gram = self.transpose() * *self;
        let (eig, _) = gram.symmetric_eigen();
        eig.as_slice()
            .iter()
            .fold(T::zero(), |a, &b| a.max(b))
            .max(T::zero())
            .sqrt()
    }

    pub fn max_abs_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self.m[i][j] - self.m[j][i]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.max_abs_asymmetry() <= tol
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| self.m[i][j].is_finite()))
    }

    pub fn apply(&self, v: &Vector<T>) -> Vector<T> {
        debug_assert_eq!(self.dim, v.dim());
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            let mut acc = T::zero();
            for j in 0..self.dim {
                acc += self.m[i][j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// `xᵀ M x`
    pub fn quadratic_form(&self, x: &Vector<T>) -> T {
        x.dot(&self.apply(x))
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        match self.dim {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
        }
    }

    /// General inverse by cofactors; `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let m = &self.m;
        let mut inv = Self::zeros(self.dim);
        match self.dim {
            1 => inv.m[0][0] = T::one() / det,
            2 => {
                inv.m[0][0] = m[1][1] / det;
                inv.m[0][1] = -m[0][1] / det;
                inv.m[1][0] = -m[1][0] / det;
                inv.m[1][1] = m[0][0] / det;
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (r0, r1) = minor_index(j);
                        let (c0, c1) = minor_index(i);
                        let cof = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
                        let sign = if (i + j) % 2 == 0 { T::one() } else { -T::one() };
                        inv.m[i][j] = sign * cof / det;
                    }
                }
            }
        }
        Some(inv)
    }

    /// Eigen-decomposition of the symmetric part by cyclic Jacobi rotations.
    /// Returns eigenvalues in ascending order and the matching eigenvectors
    /// as the columns of the returned tensor.
    pub fn symmetric_eigen(&self) -> (Vector<T>, Tensor<T>) {
        let n = self.dim;
        let mut a = self.symmetric_part();
        let mut v = Tensor::identity(n);
        let scale = a.frobenius_norm();
        if scale > T::zero() && n > 1 {
            let tol = T::epsilon() * scale * T::lit(1e-2);
            for _sweep in 0..64 {
                let mut off = T::zero();
                for p in 0..n {
                    for q in (p + 1)..n {
                        off += a.m[p][q] * a.m[p][q];
                    }
                }
                if off.sqrt() <= tol {
                    break;
                }
                for p in 0..n {
                    for q in (p + 1)..n {
                        let apq = a.m[p][q];
                        if apq == T::zero() {
                            continue;
                        }
                        let theta = (a.m[q][q] - a.m[p][p]) / (T::lit(2.0) * apq);
                        let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                        let c = T::one() / (t * t + T::one()).sqrt();
                        let s = t * c;
                        for k in 0..n {
                            let akp = a.m[k][p];
                            let akq = a.m[k][q];
                            a.m[k][p] = c * akp - s * akq;
                            a.m[k][q] = s * akp + c * akq;
                        }
                        for k in 0..n {
                            let apk = a.m[p][k];
                            let aqk = a.m[q][k];
                            a.m[p][k] = c * apk - s * aqk;
                            a.m[q][k] = s * apk + c * aqk;
                        }
                        for k in 0..n {
                            let vkp = v.m[k][p];
                            let vkq = v.m[k][q];
                            v.m[k][p] = c * vkp - s * vkq;
                            v.m[k][q] = s * vkp + c * vkq;
                        }
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a.m[i][i].partial_cmp(&a.m[j][j]).unwrap_or(std::cmp::Ordering::Equal));
        let mut values = Vector::zeros(n);
        let mut vectors = Tensor::zeros(n);
        for (col, &src) in order.iter().enumerate() {
            values[col] = a.m[src][src];
            for k in 0..n {
                vectors.m[k][col] = v.m[k][src];
            }
        }
        (values, vectors)
    }

    pub fn min_eigenvalue(&self) -> T {
        self.symmetric_eigen().0[0]
    }

    /// `V f(Λ) Vᵀ` for the symmetric part of `self`.
    pub fn symmetric_map(&self, f: impl Fn(T) -> T) -> Self {
        let (values, vectors) = self.symmetric_eigen();
        let n = self.dim;
        let mut out = Self::zeros(n);
        for k in 0..n {
            let fk = f(values[k]);
            for i in 0..n {
                for j in 0..n {
                    out.m[i][j] += vectors.m[i][k] * fk * vectors.m[j][k];
                }
            }
        }
        out
    }
}

fn minor_index(skip: usize) -> (usize, usize) {
    match skip {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

impl<T: Real> Index<(usize, usize)> for Tensor<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        assert!(i < self.dim && j < self.dim, "tensor index out of range");
        &self.m[i][j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for Tensor<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        assert!(i < self.dim && j < self.dim, "tensor index out of range");
        &mut self.m[i][j]
    }
}

impl<T: Real> Add for Tensor<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<T: Real> AddAssign for Tensor<T> {
    fn add_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] += rhs.m[i][j];
            }
        }
    }
}

impl<T: Real> Sub for Tensor<T> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<T: Real> SubAssign for Tensor<T> {
    fn sub_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] -= rhs.m[i][j];
            }
        }
    }
}

impl<T: Real> Neg for Tensor<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Real> Mul for Tensor<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc += self.m[i][k] * rhs.m[k][j];
                }
                out.m[i][j] = acc;
            }
        }
        out
    }
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[T]> = (0..self.dim).map(|i| &self.m[i][..self.dim]).collect();
        f.debug_list().entries(rows).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs_symmetric_matrix() {
        let a = Tensor::<f64>::from_f64_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, -0.2], &[0.5, -0.2, 2.0]]);
        let (vals, vecs) = a.symmetric_eigen();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let back = a.symmetric_map(|x| x);
        assert!((back - a).frobenius_norm() < 1e-13);
        let orth = vecs.transpose() * vecs;
        assert!((orth - Tensor::identity(3)).frobenius_norm() < 1e-13);
    }

    #[test]
    fn inverse_of_2x2_and_3x3() {
        let a = Tensor::<f64>::from_f64_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let prod = a * a.inverse().unwrap();
        assert!((prod - Tensor::identity(2)).frobenius_norm() < 1e-14);
        let b = Tensor::<f64>::from_f64_rows(&[&[2.0, 1.0, 0.0], &[0.5, 3.0, 1.0], &[0.0, 1.0, 4.0]]);
        let prod = b * b.inverse().unwrap();
        assert!((prod - Tensor::identity(3)).frobenius_norm() < 1e-14);
        assert!(Tensor::<f64>::zeros(2).inverse().is_none());
    }

    #[test]
    fn spectral_norm_of_shear() {
        // [[0, 1], [0, 0]] has singular values 1 and 0.
        let k = Tensor::<f64>::from_f64_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!((k.spectral_norm() - 1.0).abs() < 1e-14);
        let c = k.commutator(&k.transpose());
        assert_eq!(c, Tensor::diag(&[1.0, -1.0]));
    }

    #[test]
    fn works_in_single_precision() {
        let a = Tensor::<f32>::diag(&[2.0, 0.5]);
        let log = a.symmetric_map(f32::ln);
        assert!((log.trace() - (2.0f32.ln() + 0.5f32.ln())).abs() < 1e-6);
    }
}
