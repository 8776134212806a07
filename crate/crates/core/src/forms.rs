//! Exterior algebra of (k,k)-forms on ℂⁿ with constant coefficients.
//!
//! A real (1,1)-form `i Σ A_ab dz_a ∧ dz̄_b` is stored as its Hermitian matrix
//! `A`. Products of (1,1)-forms live in the even part of the exterior algebra,
//! which is commutative. We use the basis `e_IJ = (-1)^{k(k-1)/2} dz_I ∧ dz̄_J`
//! (times the appropriate power of `i`), for which the product rule carries
//! only the two shuffle signs:
//!
//! `e_{I₁J₁} ∧ e_{I₂J₂} = ε(I₁,I₂) ε(J₁,J₂) e_{I₁∪I₂, J₁∪J₂}`.
//!
//! In this basis `Π_{i∈K} (i dz_i ∧ dz̄_i)` is exactly `e_KK`, so diagonal
//! coefficients agree with the subset coefficients used by the cone module.

use crate::numeric::{binomial, cot, subsets};
use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq)]
pub struct BiForm {
    n: usize,
    k: usize,
    index: Vec<Vec<usize>>,
    coeffs: Vec<Complex64>,
}

impl BiForm {
    pub fn zero(n: usize, k: usize) -> Self {
        let index = subsets(n, k);
        let len = index.len();
        Self {
            n,
            k,
            index,
            coeffs: vec![Complex64::new(0.0, 0.0); len * len],
        }
    }

    /// The constant function 1, a (0,0)-form.
    pub fn one(n: usize) -> Self {
        let mut f = Self::zero(n, 0);
        f.coeffs[0] = Complex64::new(1.0, 0.0);
        f
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        let n = m.nrows();
        let mut f = Self::zero(n, 1);
        for a in 0..n {
            for b in 0..n {
                f.coeffs[a * n + b] = m[(a, b)];
            }
        }
        f
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    /// Subsets labelling rows and columns of the coefficient table.
    pub fn index(&self) -> &[Vec<usize>] {
        &self.index
    }

    /// Coefficients `c_IJ`, row-major over `index()`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize) -> Complex64 {
        self.coeffs[i * self.index.len() + j]
    }

    /// Real parts of the diagonal coefficients `c_KK`, in `index()` order.
    pub fn diagonal(&self) -> Vec<f64> {
        let len = self.index.len();
        (0..len).map(|i| self.coeffs[i * len + i].re).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.n, self.k), (other.n, other.k), "adding forms of different type");
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o;
        }
        out
    }

    pub fn wedge(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let k = self.k + other.k;
        let mut out = Self::zero(n, k);
        if k > n {
            return out;
        }
        let out_len = out.index.len();
        let position = |set: &[usize]| out.index.iter().position(|s| s == set).unwrap();
        let (l1, l2) = (self.index.len(), other.index.len());
        for (i1, s_i1) in self.index.iter().enumerate() {
            for (i2, s_i2) in other.index.iter().enumerate() {
                let Some((sign_i, union_i)) = shuffle(s_i1, s_i2) else { continue };
                let row = position(&union_i);
                for (j1, s_j1) in self.index.iter().enumerate() {
                    let a = self.coeffs[i1 * l1 + j1];
                    if a == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for (j2, s_j2) in other.index.iter().enumerate() {
                        let Some((sign_j, union_j)) = shuffle(s_j1, s_j2) else { continue };
                        let col = position(&union_j);
                        out.coeffs[row * out_len + col] +=
                            a * other.coeffs[i2 * l2 + j2] * (sign_i * sign_j);
                    }
                }
            }
        }
        out
    }

    pub fn power(&self, k: usize) -> Self {
        (0..k).fold(Self::one(self.n), |acc, _| acc.wedge(self))
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// The coefficient table as a square matrix over `index()`.
    pub fn matrix(&self) -> CMatrix {
        let len = self.index.len();
        CMatrix::from_row_slice(len, len, &self.coeffs)
    }

    /// Smallest eigenvalue of the (Hermitian part of the) coefficient table.
    /// Nonnegative exactly when the form is positive as a Hermitian form on Λᵏ.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.matrix();
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Merges two sorted index sets; returns the sign of the sorting permutation
/// or `None` when they overlap.
fn shuffle(a: &[usize], b: &[usize]) -> Option<(f64, Vec<usize>)> {
    let mut merged = Vec::with_capacity(a.len() + b.len());
    let mut inversions = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            merged.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            // b[j] jumps over the remaining elements of a
            inversions += a.len() - i;
            merged.push(b[j]);
            j += 1;
        } else {
            return None;
        }
    }
    let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
    Some((sign, merged))
}

/// Real and imaginary parts of `i^j`.
fn i_pow(j: usize) -> (f64, f64) {
    match j % 4 {
        0 => (1.0, 0.0),
        1 => (0.0, 1.0),
        2 => (-1.0, 0.0),
        _ => (0.0, -1.0),
    }
}

/// `Re(α + iβ)^k − cot θ · Im(α + iβ)^k`, expanded binomially.
pub fn g_polynomial(alpha: &CMatrix, beta: &CMatrix, theta: f64, k: usize) -> BiForm {
    let n = alpha.nrows();
    let a = BiForm::from_matrix(alpha);
    let b = BiForm::from_matrix(beta);
    let c = cot(theta);
    let mut out = BiForm::zero(n, k);
    for j in 0..=k {
        let (re, im) = i_pow(j);
        let weight = binomial(k, j) * (re - c * im);
        if weight == 0.0 {
            continue;
        }
        out = out.add(&a.power(k - j).wedge(&b.power(j)).scale(weight));
    }
    out
}

/// `G^k_θ(α + cot θ · β, β)`.
pub fn p_polynomial(alpha: &CMatrix, beta: &CMatrix, theta: f64, k: usize) -> BiForm {
    let shifted = alpha + beta * Complex64::new(cot(theta), 0.0);
    g_polynomial(&shifted, beta, theta, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            v.len(),
            v.iter().map(|&x| Complex64::new(x, 0.0)),
        ))
    }

    #[test]
    fn diagonal_power_is_factorial_times_product() {
        let a = BiForm::from_matrix(&diag(&[2.0, 3.0, 5.0]));
        let a2 = a.power(2);
        // subsets {0,1},{0,2},{1,2}
        assert_eq!(a2.diagonal(), vec![12.0, 20.0, 30.0]);
        let a3 = a.power(3);
        assert_eq!(a3.diagonal(), vec![6.0 * 30.0]);
    }

    #[test]
    fn top_power_is_factorial_times_determinant() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.5, 0.7),
                Complex64::new(0.5, -0.7),
                Complex64::new(1.5, 0.0),
            ],
        );
        let det = 2.0 * 1.5 - (0.25 + 0.49);
        let top = BiForm::from_matrix(&m).power(2);
        assert!((top.coeff(0, 0).re - 2.0 * det).abs() < 1e-14);
        assert!(top.coeff(0, 0).im.abs() < 1e-14);
    }

    #[test]
    fn shuffle_signs() {
        assert_eq!(shuffle(&[0], &[1]), Some((1.0, vec![0, 1])));
        assert_eq!(shuffle(&[1], &[0]), Some((-1.0, vec![0, 1])));
        assert_eq!(shuffle(&[0, 2], &[1]), Some((-1.0, vec![0, 1, 2])));
        assert_eq!(shuffle(&[1], &[1]), None);
    }

    #[test]
    fn wedge_is_commutative_for_even_forms() {
        let m1 = CMatrix::from_fn(3, 3, |i, j| Complex64::new((i + 2 * j) as f64 * 0.3, i as f64 - j as f64));
        let m1 = &m1 + m1.adjoint();
        let m2 = CMatrix::from_fn(3, 3, |i, j| Complex64::new(1.0 / (1 + i + j) as f64, 0.1 * (j as f64 - i as f64)));
        let (a, b) = (BiForm::from_matrix(&m1), BiForm::from_matrix(&m2));
        let ab = a.wedge(&b);
        let ba = b.wedge(&a);
        for (x, y) in ab.coeffs().iter().zip(ba.coeffs()) {
            assert!((x - y).norm() < 1e-13);
        }
    }
}
