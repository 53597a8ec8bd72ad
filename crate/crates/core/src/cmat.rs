//! Dense square complex matrices, row-major.
//!
//! Products go through `matrixmultiply::zgemm`; everything else is a plain
//! loop over the backing slice.

use std::ops::{Index, IndexMut};

use matrixmultiply::CGemmOption;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

/// Quantized vorticity: an element of su(N) (skew-Hermitian, traceless).
pub type VorticityMatrix = CMatrix;

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        CMatrix { n, data }
    }

    pub fn from_vec(n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: data.len() });
        }
        Ok(CMatrix { n, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.n });
        }
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(Complex64::new(0.0, 0.0));
    }

    pub fn copy_from(&mut self, other: &CMatrix) {
        debug_assert_eq!(self.n, other.n);
        self.data.copy_from_slice(&other.data);
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Frobenius inner product, conjugate-linear in `self`.
    pub fn inner(&self, other: &CMatrix) -> Complex64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> CMatrix {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: Complex64, x: &CMatrix) {
        debug_assert_eq!(self.n, x.n);
        for (a, b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        let mut m = self.clone();
        m.axpy(Complex64::new(-1.0, 0.0), other);
        m
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        let mut m = self.clone();
        m.axpy(Complex64::new(1.0, 0.0), other);
        m
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Largest entry of `|A + A†|`, zero for skew-Hermitian matrices.
    pub fn skew_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] + self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Projects onto su(N): `A <- (A - A†)/2 - tr(A) I / N`.
    pub fn project_su(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.data[i * n + j];
                let b = self.data[j * n + i];
                let v = (a - b.conj()) * 0.5;
                self.data[i * n + j] = v;
                self.data[j * n + i] = -v.conj();
            }
            let d = &mut self.data[i * n + i];
            *d = Complex64::new(0.0, d.im);
        }
        let mean = self.trace() / n as f64;
        for i in 0..n {
            self.data[i * n + i] -= mean;
        }
    }

    /// `out = self * rhs`
    pub fn mul_into(&self, rhs: &CMatrix, out: &mut CMatrix) {
        gemm(self, rhs, out, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    }

    pub fn mul(&self, rhs: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.n);
        self.mul_into(rhs, &mut out);
        out
    }

    pub fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<Complex64>) -> CMatrix {
        let n = m.nrows();
        CMatrix::from_fn(n, |i, j| m[(i, j)])
    }

    /// Sorted eigenvalues of the Hermitian matrix `-i A` (the imaginary parts
    /// of the spectrum of a skew-Hermitian `A`).
    pub fn skew_spectrum(&self) -> Vec<f64> {
        let herm = CMatrix::from_fn(self.n, |i, j| {
            let a = -I * self[(i, j)];
            let b = (-I * self[(j, i)]).conj();
            (a + b) * 0.5
        });
        let eig = nalgebra::SymmetricEigen::new(herm.to_nalgebra());
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }
}

/// `c = alpha * a * b + beta * c`
pub fn gemm(a: &CMatrix, b: &CMatrix, c: &mut CMatrix, alpha: Complex64, beta: Complex64) {
    let n = a.n;
    assert!(b.n == n && c.n == n, "gemm dimension mismatch");
    let rs = n as isize;
    // SAFETY: Complex64 is repr(C) {re, im}, layout-identical to [f64; 2];
    // all three buffers hold n*n elements with row stride n and column stride 1,
    // and `c` does not alias `a` or `b` (it is borrowed mutably).
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            n,
            n,
            n,
            [alpha.re, alpha.im],
            a.data.as_ptr() as *const [f64; 2],
            rs,
            1,
            b.data.as_ptr() as *const [f64; 2],
            rs,
            1,
            [beta.re, beta.im],
            c.data.as_mut_ptr() as *mut [f64; 2],
            rs,
            1,
        );
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}
