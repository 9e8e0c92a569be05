//! Direct solvers used across the crate: tridiagonal (Thomas), dense
//! Gaussian elimination and ridge-regularised normal equations.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tridiagonal matrix stored by diagonals. `lower[i]` couples row `i + 1`
/// to column `i`; `upper[i]` couples row `i` to column `i + 1`.
#[derive(Clone, Debug)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn new(lower: Vec<T>, diag: Vec<T>, upper: Vec<T>) -> Self {
        let n = diag.len();
        assert!(n >= 1, "empty tridiagonal system");
        assert_eq!(lower.len(), n - 1);
        assert_eq!(upper.len(), n - 1);
        Self { lower, diag, upper }
    }

    /// Symmetric tridiagonal matrix with constant diagonal and off-diagonal.
    pub fn constant(n: usize, diag: T, off: T) -> Self {
        Self::new(vec![off; n.saturating_sub(1)], vec![diag; n], vec![off; n.saturating_sub(1)])
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        assert_eq!(x.len(), n);
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }

    /// Thomas algorithm without pivoting; intended for diagonally dominant
    /// or symmetric positive-definite systems.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        let mut c_prime = vec![T::zero(); n];
        let mut x = vec![T::zero(); n];
        let mut denom = self.diag[0];
        if denom == T::zero() || !denom.is_finite() {
            return Err(Error::SingularSystem("zero pivot in tridiagonal solve".into()));
        }
        if n > 1 {
            c_prime[0] = self.upper[0] / denom;
        }
        x[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i - 1] * c_prime[i - 1];
            if denom == T::zero() || !denom.is_finite() {
                return Err(Error::SingularSystem(format!("zero pivot at row {i} in tridiagonal solve")));
            }
            if i + 1 < n {
                c_prime[i] = self.upper[i] / denom;
            }
            x[i] = (rhs[i] - self.lower[i - 1] * x[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= c_prime[i] * next;
        }
        Ok(x)
    }
}

/// Solves a dense `n × n` system (row-major) by Gaussian elimination with
/// partial pivoting.
pub fn solve_dense<T: Real>(n: usize, matrix: &[T], rhs: &[T]) -> Result<Vec<T>> {
    assert_eq!(matrix.len(), n * n);
    assert_eq!(rhs.len(), n);
    let mut a = matrix.to_vec();
    let mut b = rhs.to_vec();
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if a[pivot * n + col].abs() <= scale * T::epsilon() * T::from_usize_lossy(n) {
            return Err(Error::SingularSystem(format!("dense system singular at column {col}")));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let p = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / p;
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                let upper = a[col * n + k];
                a[row * n + k] -= factor * upper;
            }
            let bc = b[col];
            b[row] -= factor * bc;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// Cholesky solve of a symmetric positive-definite system (row-major).
/// Returns `None` if a non-positive pivot is met.
pub fn cholesky_solve<T: Real>(n: usize, matrix: &[T], rhs: &[T]) -> Option<Vec<T>> {
    assert_eq!(matrix.len(), n * n);
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= T::zero() || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut acc = rhs[i];
        for k in 0..i {
            acc -= l[i * n + k] * y[k];
        }
        y[i] = acc / l[i * n + i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut acc = y[i];
        for k in (i + 1)..n {
            acc -= l[k * n + i] * x[k];
        }
        x[i] = acc / l[i * n + i];
    }
    Some(x)
}

/// Outcome of a least-squares solve through the normal equations.
#[derive(Clone, Debug)]
pub struct LeastSquares<T> {
    pub coefficients: Vec<T>,
    /// Set when the Gram matrix was rank deficient and a ridge term was added.
    pub regularized: bool,
}

/// Solves `gram · α = rhs` where `gram` is a Gram matrix. Falls back to a
/// relative ridge of `ridge` times the mean diagonal when the plain
/// factorization fails or is badly conditioned.
pub fn normal_equations<T: Real>(n: usize, gram: &[T], rhs: &[T], ridge: T) -> LeastSquares<T> {
    if n == 0 {
        return LeastSquares {
            coefficients: Vec::new(),
            regularized: false,
        };
    }
    let diag_max = (0..n).fold(T::zero(), |m, i| m.max(gram[i * n + i]));
    let diag_min = (0..n).fold(T::infinity(), |m, i| m.min(gram[i * n + i]));
    let well_posed = diag_max > T::zero() && diag_min > diag_max * ridge;
    if well_posed {
        if let Some(x) = cholesky_solve(n, gram, rhs) {
            if x.iter().all(|v| v.is_finite()) {
                return LeastSquares {
                    coefficients: x,
                    regularized: false,
                };
            }
        }
    }
    let mean_diag = (0..n).fold(T::zero(), |s, i| s + gram[i * n + i]) / T::from_usize_lossy(n);
    let shift = if mean_diag > T::zero() { mean_diag * ridge } else { ridge };
    let mut reg = gram.to_vec();
    for i in 0..n {
        reg[i * n + i] += shift;
    }
    let coefficients = cholesky_solve(n, &reg, rhs).unwrap_or_else(|| vec![T::zero(); n]);
    LeastSquares {
        coefficients,
        regularized: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_solve() {
        let t = Tridiagonal::<f64>::new(vec![-1.0, -1.0, -1.0], vec![4.0, 4.0, 4.0, 4.0], vec![-1.0, -2.0, -1.0]);
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = t.solve(&rhs).unwrap();
        let back = t.mul_vec(&x);
        for (a, b) in back.iter().zip(rhs.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut dense = vec![0.0; 16];
        for i in 0..4 {
            dense[i * 4 + i] = t.diag[i];
            if i > 0 {
                dense[i * 4 + i - 1] = t.lower[i - 1];
            }
            if i < 3 {
                dense[i * 4 + i + 1] = t.upper[i];
            }
        }
        let y = solve_dense(4, &dense, &rhs).unwrap();
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_precision_tridiagonal() {
        let t = Tridiagonal::<f32>::constant(5, 2.0, -1.0);
        let x = t.solve(&[1.0; 5]).unwrap();
        // Discrete -u'' = 1 with h = 1: u_i = i(6 - i)/2.
        for (i, v) in x.iter().enumerate() {
            let k = (i + 1) as f32;
            assert!((v - k * (6.0 - k) / 2.0).abs() < 1e-4);
        }
    }

    #[test]
    fn singular_dense_system_is_reported() {
        let err = solve_dense(2, &[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::SingularSystem(_)));
    }

    #[test]
    fn ridge_kicks_in_for_rank_deficient_gram() {
        let gram = [1.0, 1.0, 1.0, 1.0];
        let sol = normal_equations::<f64>(2, &gram, &[2.0, 2.0], 1e-10);
        assert!(sol.regularized);
        assert!((sol.coefficients[0] + sol.coefficients[1] - 2.0).abs() < 1e-6);
    }
}
