//! Small dense linear algebra: Hermitian receive-covariance matrices of the
//! form `I + Σ p_k h_k h_kᴴ` and real symmetric systems for Newton steps.
//!
//! Sizes here are tiny (antenna count, user count), so everything is stored
//! row-major in a flat `Vec` and factorized directly.

use num_complex::Complex;

use crate::scalar::Scalar;

/// Dense Hermitian matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermitian<T> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> Hermitian<T> {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex::new(T::zero(), T::zero()); n * n];
        for i in 0..n {
            data[i * n + i] = Complex::new(T::one(), T::zero());
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.n + j]
    }

    /// `self += weight · h hᴴ`.
    pub fn add_outer(&mut self, weight: T, h: &[Complex<T>]) {
        debug_assert_eq!(h.len(), self.n);
        for i in 0..self.n {
            let hi = h[i] * weight;
            for j in 0..self.n {
                self.data[i * self.n + j] += hi * h[j].conj();
            }
        }
    }

    /// Lower Cholesky factor, or `None` if the matrix is not numerically
    /// positive definite.
    pub fn cholesky(&self) -> Option<CholeskyC<T>> {
        let n = self.n;
        let mut l = vec![Complex::new(T::zero(), T::zero()); n * n];
        for j in 0..n {
            let mut d = self.get(j, j).re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = Complex::new(djj, T::zero());
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(CholeskyC { n, l })
    }
}

/// Lower-triangular factor `L` with `A = L Lᴴ`.
#[derive(Debug, Clone)]
pub struct CholeskyC<T> {
    n: usize,
    l: Vec<Complex<T>>,
}

impl<T: Scalar> CholeskyC<T> {
    /// Factor of the identity.
    pub fn identity(n: usize) -> Self {
        let h = Hermitian::<T>::identity(n);
        h.cholesky().expect("identity is positive definite")
    }

    /// Natural log of `det(A)`.
    pub fn ln_det(&self) -> T {
        let mut acc = T::zero();
        for i in 0..self.n {
            acc += self.l[i * self.n + i].re.ln();
        }
        acc + acc
    }

    /// Solves `L y = b` by forward substitution.
    pub fn forward(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i].re;
        }
        y
    }

    /// `hᴴ A⁻¹ h = ‖L⁻¹ h‖²`.
    pub fn inv_quad(&self, h: &[Complex<T>]) -> T {
        self.forward(h).iter().map(|z| z.norm_sqr()).sum()
    }

    /// In-place rank-one update `A ← A + w · x xᴴ` (`w ≥ 0`), without
    /// refactorizing.
    pub fn rank_one_update(&mut self, w: T, x: &[Complex<T>]) {
        let n = self.n;
        let sw = w.sqrt();
        let mut v: Vec<Complex<T>> = x.iter().map(|z| *z * sw).collect();
        for k in 0..n {
            let lkk = self.l[k * n + k].re;
            let r = (lkk * lkk + v[k].norm_sqr()).sqrt();
            let vk = v[k];
            self.l[k * n + k] = Complex::new(r, T::zero());
            // Unitary 2×2 rotation of the column pair (L_{:,k}, v) that zeroes v_k.
            for i in (k + 1)..n {
                let lik = self.l[i * n + k];
                self.l[i * n + k] = (lik * lkk + v[i] * vk.conj()) / r;
                v[i] = (v[i] * lkk - lik * vk) / r;
            }
        }
    }
}

/// Dense real symmetric matrix helpers (row-major `n × n`).
pub mod real {
    use crate::scalar::Scalar;

    /// Cholesky of a symmetric positive definite matrix; returns the lower
    /// factor or `None`.
    pub fn cholesky<T: Scalar>(a: &[T], n: usize) -> Option<Vec<T>> {
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(l)
    }

    /// Solves `L Lᵀ x = b` given the lower factor.
    pub fn cholesky_solve<T: Scalar>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }

    pub fn mat_vec<T: Scalar>(a: &[T], n: usize, x: &[T]) -> Vec<T> {
        (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
            .collect()
    }

    pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
        a.iter().zip(b).map(|(x, y)| *x * *y).sum()
    }

    /// `ln det` of a symmetric positive definite matrix.
    pub fn ln_det<T: Scalar>(a: &[T], n: usize) -> Option<T> {
        let l = cholesky(a, n)?;
        let mut acc = T::zero();
        for i in 0..n {
            acc += l[i * n + i].ln();
        }
        Some(acc + acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn rank_one_update_matches_refactorization() {
        let h1 = [c(0.3, -1.2), c(2.0, 0.1), c(-0.4, 0.7)];
        let h2 = [c(1.1, 0.5), c(-0.2, -0.9), c(0.6, 0.0)];
        let mut a = Hermitian::<f64>::identity(3);
        a.add_outer(0.8, &h1);
        let mut chol = a.cholesky().unwrap();
        chol.rank_one_update(1.7, &h2);
        a.add_outer(1.7, &h2);
        let direct = a.cholesky().unwrap();
        for (x, y) in chol.l.iter().zip(&direct.l) {
            assert!((x - y).norm() < 1e-12, "{x} vs {y}");
        }
        assert!((chol.ln_det() - direct.ln_det()).abs() < 1e-12);
    }

    #[test]
    fn inv_quad_of_identity_is_norm() {
        let h = [c(1.0, 2.0), c(-3.0, 0.5)];
        let chol = CholeskyC::<f64>::identity(2);
        assert!((chol.inv_quad(&h) - (1.0 + 4.0 + 9.0 + 0.25)).abs() < 1e-14);
    }

    #[test]
    fn real_cholesky_solves() {
        let a = [4.0f64, 1.0, 1.0, 3.0];
        let l = real::cholesky(&a, 2).unwrap();
        let x = real::cholesky_solve(&l, 2, &[1.0, 2.0]);
        let back = real::mat_vec(&a, 2, &x);
        assert!((back[0] - 1.0).abs() < 1e-14 && (back[1] - 2.0).abs() < 1e-14);
        assert!(real::cholesky(&[1.0f64, 2.0, 2.0, 1.0], 2).is_none());
    }
}
