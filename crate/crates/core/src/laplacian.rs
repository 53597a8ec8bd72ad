//! Quantized Laplacian on N×N matrices.
//!
//! With `J` the spin-s representation, the positive operator
//! `A(X) = sum_a [J_a, [J_a, X]]` acts on entry `(i, j)` as
//!
//! ```text
//! 2 (s(s+1) - M_i M_j) X_ij - c(i-1, j-1) X_{i-1,j-1} - c(i, j) X_{i+1,j+1}
//! c(i, j) = a(M_i) a(M_j),   a(M) = sqrt(s(s+1) - M(M+1))
//! ```
//!
//! so it never mixes matrix diagonals. The Laplacian is `-A` on traceless
//! matrices and the identity on multiples of `I`. Every diagonal is a
//! symmetric tridiagonal chain, factored once as `L D L^T`.

use num_complex::Complex64;

use crate::cmat::CMatrix;
use crate::error::{Error, Result};

const PIVOT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    n: usize,
    /// `2 (s(s+1) - M_i M_j)` at `(i, j)`.
    diag: Vec<f64>,
    /// Coupling `c(i, j)` between `(i, j)` and `(i+1, j+1)`; zero on the boundary.
    coup: Vec<f64>,
    /// Ladder factors; `coup(i, j) = raise[i] raise[j]` off the boundary.
    raise: Vec<f64>,
    /// Multiplier applied to the forward-sweep value at `(i-1, j-1)`.
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl LaplacianOperator {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("Laplacian needs N >= 2, got {n}")));
        }
        let s = (n as f64 - 1.0) / 2.0;
        let cas = s * (s + 1.0);
        let weight = |i: usize| i as f64 - s;
        let raise: Vec<f64> = (0..n)
            .map(|i| {
                let m = weight(i);
                (cas - m * (m + 1.0)).max(0.0).sqrt()
            })
            .collect();

        let mut diag = vec![0.0; n * n];
        let mut coup = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                diag[i * n + j] = 2.0 * (cas - weight(i) * weight(j));
                if i + 1 < n && j + 1 < n {
                    coup[i * n + j] = raise[i] * raise[j];
                }
            }
        }

        // The d = 0 chain has the identity in its kernel. Adding alpha to the
        // last entry makes it positive definite; for right-hand sides with zero
        // sum the solution is the kernel-free one shifted to vanish there.
        let alpha = 2.0 * n as f64;
        let mut lower = vec![0.0; n * n];
        let mut inv_pivot = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let mut a = diag[idx];
                if i == n - 1 && j == n - 1 {
                    a += alpha;
                }
                let mut p = a;
                if i > 0 && j > 0 {
                    let prev = idx - n - 1;
                    let e = -coup[prev];
                    lower[idx] = e * inv_pivot[prev];
                    p -= e * lower[idx];
                }
                if p.abs() < PIVOT_FLOOR * a.abs().max(1.0) {
                    return Err(Error::SmallPivot { n, diagonal: j as isize - i as isize, value: p });
                }
                inv_pivot[idx] = 1.0 / p;
            }
        }
        Ok(LaplacianOperator { n, diag, coup, raise, lower, inv_pivot })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `out = Δ x`.
    pub fn apply_into(&self, x: &CMatrix, out: &mut CMatrix) -> Result<()> {
        x.check_dim(self.n)?;
        out.check_dim(self.n)?;
        let n = self.n;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let mut v = xs[idx] * self.diag[idx];
                if i > 0 && j > 0 {
                    v -= xs[idx - n - 1] * self.coup[idx - n - 1];
                }
                if i + 1 < n && j + 1 < n {
                    v -= xs[idx + n + 1] * self.coup[idx];
                }
                os[idx] = -v;
            }
        }
        let mean = x.trace() / n as f64;
        for i in 0..n {
            os[i * n + i] += mean;
        }
        Ok(())
    }

    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        let mut out = CMatrix::zeros(self.n);
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    /// `out = Δ⁻¹ b`.
    pub fn solve_into(&self, b: &CMatrix, out: &mut CMatrix) -> Result<()> {
        b.check_dim(self.n)?;
        out.check_dim(self.n)?;
        let n = self.n;
        let tau = b.trace() / n as f64;
        let bs = b.as_slice();
        let zs = out.as_mut_slice();
        // The chains solve A z = b - tau I and the Laplacian is -A there, so
        // both sweeps carry -z. Two contiguous passes keep the cost per entry
        // flat as N grows past the cache.
        for j in 0..n {
            zs[j] = -bs[j];
        }
        zs[0] += tau;
        for i in 1..n {
            let (head, tail) = zs.split_at_mut(i * n);
            let prev = &head[(i - 1) * n..];
            let cur = &mut tail[..n];
            let rhs = &bs[i * n..(i + 1) * n];
            let low = &self.lower[i * n..(i + 1) * n];
            cur[0] = -rhs[0];
            for j in 1..n {
                cur[j] = -rhs[j] - prev[j - 1] * low[j];
            }
            cur[i] += tau;
        }
        for j in 0..n {
            let idx = (n - 1) * n + j;
            zs[idx] *= self.inv_pivot[idx];
        }
        for i in (0..n - 1).rev() {
            let (head, tail) = zs.split_at_mut((i + 1) * n);
            let cur = &mut head[i * n..];
            let next = &tail[..n];
            let ip = &self.inv_pivot[i * n..(i + 1) * n];
            let ri = self.raise[i];
            for j in 0..n - 1 {
                cur[j] = (cur[j] + next[j + 1] * (ri * self.raise[j])) * ip[j];
            }
            cur[n - 1] *= ip[n - 1];
        }
        let shift = tau - out.trace() / n as f64;
        let zs = out.as_mut_slice();
        for i in 0..n {
            zs[i * n + i] += shift;
        }
        Ok(())
    }

    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let mut out = CMatrix::zeros(self.n);
        self.solve_into(b, &mut out)?;
        Ok(out)
    }

    /// Dense `N² × N²` matrix of the operator, column `k` being `Δ e_k`.
    /// Test oracle only.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.n;
        let nn = n * n;
        let mut out = vec![0.0; nn * nn];
        let mut e = CMatrix::zeros(n);
        let mut img = CMatrix::zeros(n);
        for k in 0..nn {
            e.fill_zero();
            e.as_mut_slice()[k] = Complex64::new(1.0, 0.0);
            self.apply_into(&e, &mut img).expect("dimensions agree");
            for (r, v) in img.as_slice().iter().enumerate() {
                out[r * nn + k] = v.re;
            }
        }
        out
    }
}
