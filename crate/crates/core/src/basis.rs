//! Quantized spherical harmonics `T^N_lm` and the coefficient <-> su(N) maps.
//!
//! Matrix index `i` in `0..N` carries the weight `M = i - s`, `s = (N-1)/2`.
//! The entry `(T_lm)_{M1 M2}` is nonzero only for `M2 = M1 - m`, so each
//! basis element is a single diagonal: `col - row = -m`. Only that diagonal
//! is stored, ordered by increasing row.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cmat::{CMatrix, VorticityMatrix, I};
use crate::error::{Error, Result};
use crate::wigner::{wigner3j_family, HalfInt};

/// Flat index of `(l, m)` for `l >= 1`, `|m| <= l`, with `l` ascending and
/// then `m` ascending.
#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    debug_assert!(l >= 1 && m.unsigned_abs() as usize <= l);
    l * l - 1 + (m + l as i64) as usize
}

/// Number of `(l, m)` pairs with `1 <= l <= l_max`.
#[inline]
pub fn lm_count(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1) - 1
}

/// `(row, col)` of the `k`-th stored entry of an order-`m` element.
#[inline]
pub fn diag_position(m: i64, k: usize) -> (usize, usize) {
    if m >= 0 {
        (k + m as usize, k)
    } else {
        (k, k + m.unsigned_abs() as usize)
    }
}

#[derive(Debug, Clone)]
pub struct QuantBasis {
    n: usize,
    l_max: usize,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl QuantBasis {
    /// Full basis, `1 <= l <= N-1`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("basis needs N >= 2, got {n}")));
        }
        Self::with_l_max(n, n - 1)
    }

    /// Truncated basis holding only `l <= l_max`.
    pub fn with_l_max(n: usize, l_max: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("basis needs N >= 2, got {n}")));
        }
        if l_max == 0 || l_max > n - 1 {
            return Err(Error::InvalidArgument(format!("l_max must lie in 1..={} for N = {n}, got {l_max}", n - 1)));
        }
        let mut offsets = Vec::with_capacity(lm_count(l_max) + 1);
        let mut total = 0;
        for l in 1..=l_max {
            for m in -(l as i64)..=(l as i64) {
                offsets.push(total);
                total += n - m.unsigned_abs() as usize;
            }
        }
        offsets.push(total);

        let per_l: Vec<Vec<f64>> = (1..=l_max)
            .into_par_iter()
            .map(|l| {
                let mut out = Vec::new();
                for m in -(l as i64)..=(l as i64) {
                    out.extend(basis_diagonal(n, l, m));
                }
                out
            })
            .collect();
        let data: Vec<f64> = per_l.into_iter().flatten().collect();
        debug_assert_eq!(data.len(), total);
        Ok(QuantBasis { n, l_max, offsets, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Stored diagonal of `T_lm`.
    pub fn diagonal(&self, l: usize, m: i64) -> &[f64] {
        let idx = lm_index(l, m);
        &self.data[self.offsets[idx]..self.offsets[idx + 1]]
    }

    /// Dense copy of `T_lm`. Tests and small-N tooling only.
    pub fn dense(&self, l: usize, m: i64) -> CMatrix {
        let mut t = CMatrix::zeros(self.n);
        for (k, &v) in self.diagonal(l, m).iter().enumerate() {
            t[diag_position(m, k)] = Complex64::new(v, 0.0);
        }
        t
    }

    /// Frobenius inner product `<T_lm, T_l'm'>` from the stored diagonals.
    pub fn gram(&self, l: usize, m: i64, lp: usize, mp: i64) -> f64 {
        if m != mp {
            return 0.0;
        }
        self.diagonal(l, m).iter().zip(self.diagonal(lp, mp)).map(|(a, b)| a * b).sum()
    }

    /// Writes the little-endian basis cache: magic `ZSB1`, `u32 N`, then every
    /// stored diagonal as (re, im) float64 pairs in (l, m) ascending order.
    pub fn save(&self, path: &Path) -> Result<()> {
        if self.l_max != self.n - 1 {
            return Err(Error::InvalidArgument("only a full basis can be cached".into()));
        }
        let mut buf = Vec::with_capacity(8 + 16 * self.data.len());
        buf.extend_from_slice(b"ZSB1");
        buf.extend_from_slice(&(self.n as u32).to_le_bytes());
        for &v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
            buf.extend_from_slice(&0f64.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 8 || &bytes[..4] != b"ZSB1" {
            return Err(Error::format(path, "missing ZSB1 magic"));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if n < 2 {
            return Err(Error::format(path, format!("invalid N = {n}")));
        }
        let l_max = n - 1;
        let mut offsets = Vec::with_capacity(lm_count(l_max) + 1);
        let mut total = 0;
        for l in 1..=l_max {
            for m in -(l as i64)..=(l as i64) {
                offsets.push(total);
                total += n - m.unsigned_abs() as usize;
            }
        }
        offsets.push(total);
        let body = &bytes[8..];
        if body.len() != 16 * total {
            return Err(Error::format(
                path,
                format!("expected {} payload bytes for N = {n}, found {}", 16 * total, body.len()),
            ));
        }
        let data = body.chunks_exact(16).map(|c| f64::from_le_bytes(c[..8].try_into().unwrap())).collect();
        Ok(QuantBasis { n, l_max, offsets, data })
    }
}

/// Entries of `T^N_lm` along its diagonal:
/// `(T_lm)_{M1 M2} = (-1)^{s - M1} sqrt(2l+1) (s l s; -M1 m M2)`.
///
/// The 3j symbol is evaluated as the cyclic permutation `(s s l; M2 -M1 m)`,
/// a family in `M2` at fixed `m`.
fn basis_diagonal(n: usize, l: usize, m: i64) -> Vec<f64> {
    let ts = n as i64 - 1; // 2s
    let s = HalfInt::from_doubled(ts);
    let fam = wigner3j_family(s, s, HalfInt::int(l as i64), HalfInt::int(m)).expect("T_lm exists for 1 <= l <= N-1");
    let len = n - m.unsigned_abs() as usize;
    debug_assert_eq!(fam.values.len(), len);
    let norm = ((2 * l + 1) as f64).sqrt();
    (0..len)
        .map(|k| {
            let (row, col) = diag_position(m, k);
            // doubled weights
            let tm1 = 2 * row as i64 - ts;
            let tm2 = 2 * col as i64 - ts;
            let exponent = (ts - tm1) / 2; // s - M1, always an integer
            let sign = if exponent % 2 == 0 { 1.0 } else { -1.0 };
            sign * norm * fam.get(HalfInt::from_doubled(tm2))
        })
        .collect()
}

/// Complex spherical-harmonic amplitudes `w^{lm}`, `1 <= l <= l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    l_max: usize,
    data: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn zeros(l_max: usize) -> Self {
        SpectralCoeffs { l_max, data: vec![Complex64::new(0.0, 0.0); lm_count(l_max)] }
    }

    pub fn from_vec(l_max: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != lm_count(l_max) {
            return Err(Error::DimensionMismatch { expected: lm_count(l_max), got: data.len() });
        }
        Ok(SpectralCoeffs { l_max, data })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, l: usize, m: i64) -> Complex64 {
        if l == 0 || l > self.l_max || m.unsigned_abs() as usize > l {
            return Complex64::new(0.0, 0.0);
        }
        self.data[lm_index(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i64, v: Complex64) {
        self.data[lm_index(l, m)] = v;
    }

    /// Sets `w^{lm} = v` and the partner `w^{l,-m} = (-1)^m conj(v)`. For
    /// `m = 0` only the real part is kept.
    pub fn set_real_pair(&mut self, l: usize, m: i64, v: Complex64) {
        if m == 0 {
            self.set(l, 0, Complex64::new(v.re, 0.0));
            return;
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        self.set(l, m, v);
        self.set(l, -m, v.conj() * sign);
    }

    /// Largest violation of `conj(w^{lm}) = (-1)^m w^{l,-m}`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for l in 1..=self.l_max {
            for m in 0..=(l as i64) {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                worst = worst.max((self.get(l, m).conj() - self.get(l, -m) * sign).norm());
            }
        }
        worst
    }

    /// `sum |w^{lm}|^2`, equal to the L2 norm squared of the field.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    /// Copy with a different truncation; extra modes are zero.
    pub fn truncated(&self, l_max: usize) -> SpectralCoeffs {
        let mut out = SpectralCoeffs::zeros(l_max);
        for l in 1..=l_max.min(self.l_max) {
            for m in -(l as i64)..=(l as i64) {
                out.set(l, m, self.get(l, m));
            }
        }
        out
    }
}

/// `W = sum w^{lm} i T_lm`.
pub fn coeffs_to_matrix(c: &SpectralCoeffs, basis: &QuantBasis) -> Result<VorticityMatrix> {
    if c.l_max() > basis.l_max() {
        return Err(Error::InvalidArgument(format!(
            "coefficients reach l = {} but the basis stops at l = {} (N = {})",
            c.l_max(),
            basis.l_max(),
            basis.n()
        )));
    }
    let mut w = CMatrix::zeros(basis.n());
    for l in 1..=c.l_max() {
        for m in -(l as i64)..=(l as i64) {
            let a = c.get(l, m) * I;
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (k, &t) in basis.diagonal(l, m).iter().enumerate() {
                w[diag_position(m, k)] += a * t;
            }
        }
    }
    Ok(w)
}

/// `w^{lm} = <i T_lm, W>_F` for `l <= l_max`.
pub fn matrix_to_coeffs(w: &VorticityMatrix, basis: &QuantBasis, l_max: usize) -> Result<SpectralCoeffs> {
    w.check_dim(basis.n())?;
    if l_max > basis.l_max() {
        return Err(Error::InvalidArgument(format!("l_max = {l_max} exceeds the basis truncation {}", basis.l_max())));
    }
    let mut c = SpectralCoeffs::zeros(l_max);
    for l in 1..=l_max {
        for m in -(l as i64)..=(l as i64) {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &t) in basis.diagonal(l, m).iter().enumerate() {
                acc += w[diag_position(m, k)] * t;
            }
            c.set(l, m, -I * acc);
        }
    }
    Ok(c)
}
