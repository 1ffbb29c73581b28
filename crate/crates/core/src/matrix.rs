//! Dense square matrices for Gram storage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Row-major dense `n × n` matrix. Gram matrices built by this crate are
/// symmetric; the type itself does not enforce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SquareMatrix<S: Real> {
    n: usize,
    data: Vec<S>,
}

impl<S: Real> SquareMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![S::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds from nested rows; every row must have length `rows.len()`.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("matrix rows must form a square".into()));
        }
        Ok(Self { n, data: rows.iter().flatten().copied().collect() })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diag(&self) -> impl Iterator<Item = S> + '_ {
        (0..self.n).map(move |i| self.get(i, i))
    }

    pub fn trace(&self) -> S {
        self.diag().sum()
    }

    /// Replaces the matrix by `(K + K') / 2`.
    pub fn symmetrize(&mut self) {
        let half = S::lit(0.5);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let v = (self.get(i, j) + self.get(j, i)) * half;
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }

    pub fn max_asymmetry(&self) -> S {
        let mut worst = S::zero();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn scaled(&self, factor: S) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&v| v * factor).collect() }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: S, other: &Self) {
        debug_assert_eq!(self.n, other.n);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + factor * b;
        }
    }

    /// Weighted sum `Σ_m w_m · mats[m]`. All matrices must share a dimension.
    pub fn weighted_sum(weights: &[S], mats: &[&Self]) -> Self {
        assert_eq!(weights.len(), mats.len());
        let n = mats.first().map_or(0, |m| m.n);
        let mut out = Self::zeros(n);
        for (&w, m) in weights.iter().zip(mats) {
            out.add_scaled(w, m);
        }
        out
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// `v' K v`.
    pub fn quad_form(&self, v: &[S]) -> S {
        (0..self.n).map(|i| v[i] * dot(self.row(i), v)).sum()
    }

    /// Quadratic form with a ±1 vector, avoiding multiplications.
    pub fn sign_quad_form(&self, sigma: &[i8]) -> S {
        let mut total = S::zero();
        for (i, &si) in sigma.iter().enumerate() {
            let row = self.row(i);
            let mut acc = S::zero();
            for (&k, &sj) in row.iter().zip(sigma) {
                if sj > 0 {
                    acc = acc + k;
                } else {
                    acc = acc - k;
                }
            }
            total = if si > 0 { total + acc } else { total - acc };
        }
        total
    }

    /// Attempts a Cholesky factorisation of `self + shift·I`; `true` when every
    /// pivot is strictly positive.
    pub fn cholesky_succeeds(&self, shift: S) -> bool {
        let n = self.n;
        let mut l = vec![S::zero(); n * n];
        for j in 0..n {
            let mut d = self.get(j, j) + shift;
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if !(d > S::zero()) {
                return false;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        true
    }

    /// PSD test used throughout: smallest eigenvalue must not fall below
    /// `-rel_tol · trace / n`.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        if self.n == 0 {
            return true;
        }
        let scale = (self.trace() / S::from_usize_lossy(self.n)).abs();
        let eps_floor = S::epsilon() * S::lit(100.0);
        let shift = (S::lit(rel_tol).max(eps_floor)) * scale.max(S::min_positive_value());
        self.cholesky_succeeds(shift)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_forms_agree() {
        let m = SquareMatrix::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let v = [1.0, -1.0];
        assert_eq!(m.quad_form(&v), 3.0);
        assert_eq!(m.sign_quad_form(&[1, -1]), 3.0);
    }

    #[test]
    fn cholesky_detects_indefinite() {
        let m = SquareMatrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(!m.is_psd(1e-8));
        assert!(SquareMatrix::<f64>::identity(3).is_psd(1e-8));
        // rank-deficient but PSD
        let ones = SquareMatrix::<f64>::from_fn(4, |_, _| 1.0);
        assert!(ones.is_psd(1e-8));
    }
}
