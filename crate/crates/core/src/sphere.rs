//! Spherical harmonics on lat-lon grids.
//!
//! `Y_lm(θ, φ) = P_lm(cos θ) e^{imφ}` with `P_lm` fully normalized (unit L2 norm
//! over the sphere) and carrying the Condon–Shortley phase, so that
//! `Y_{l,-m} = (-1)^m conj(Y_lm)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::basis::{lm_count, SpectralCoeffs};

/// Fully normalized associated Legendre values `P_lm(cos θ)` for
/// `0 <= m <= l <= l_max`, stored at `l(l+1)/2 + m`.
///
/// Sectoral values are built in log space so that `sin^m θ` does not
/// underflow near the poles for large `m`.
pub fn legendre_table(l_max: usize, cos_t: f64, sin_t: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize((l_max + 1) * (l_max + 2) / 2, 0.0);
    let at = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let ln_sin = sin_t.abs().ln();
    let mut ln_sector = -(4.0 * PI).sqrt().ln();
    for m in 0..=l_max {
        if m > 0 {
            ln_sector += 0.5 * ((2 * m + 1) as f64 / (2 * m) as f64).ln() + ln_sin;
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        // value = v * exp(scale) until the product is safely representable
        let mut scale = ln_sector;
        let mut prev = 0.0;
        let mut v = sign;
        let emit = |v: f64, scale: f64| -> f64 {
            if scale == 0.0 || v == 0.0 {
                v
            } else {
                (scale + v.abs().ln()).exp().copysign(v)
            }
        };
        if scale > -600.0 {
            v *= scale.exp();
            scale = 0.0;
        }
        out[at(m, m)] = emit(v, scale);
        for l in (m + 1)..=l_max {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = if l == m + 1 {
                0.0
            } else {
                let l1 = lf - 1.0;
                ((l1 * l1 - mf * mf) / (4.0 * l1 * l1 - 1.0)).sqrt()
            };
            let next = a * (cos_t * v - b * prev);
            prev = v;
            v = next;
            if scale != 0.0 {
                if v.abs() > 1e200 {
                    v *= 1e-200;
                    prev *= 1e-200;
                    scale += 200.0 * std::f64::consts::LN_10;
                }
                if v != 0.0 && scale + v.abs().ln() > -600.0 {
                    let f = scale.exp();
                    v *= f;
                    prev *= f;
                    scale = 0.0;
                }
            }
            out[at(l, m)] = emit(v, scale);
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes descending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = (p1, p0);
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Evaluates `sum w^{lm} Y_lm` on one latitude for all `φ` in `phis`.
/// `plm` must hold the table for this latitude.
fn synthesize_ring(c: &SpectralCoeffs, plm: &[f64], cos_mphi: &[Vec<f64>], sin_mphi: &[Vec<f64>], out: &mut [f64]) {
    let l_max = c.l_max();
    let at = |l: usize, m: usize| l * (l + 1) / 2 + m;
    out.fill(0.0);
    for m in 0..=l_max {
        let mut g = Complex64::new(0.0, 0.0);
        for l in m.max(1)..=l_max {
            g += c.get(l, m as i64) * plm[at(l, m)];
        }
        if m == 0 {
            for v in out.iter_mut() {
                *v += g.re;
            }
        } else {
            let (cm, sm) = (&cos_mphi[m], &sin_mphi[m]);
            for (j, v) in out.iter_mut().enumerate() {
                *v += 2.0 * (g.re * cm[j] - g.im * sm[j]);
            }
        }
    }
}

fn trig_tables(l_max: usize, phis: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let cos = (0..=l_max).map(|m| phis.iter().map(|p| (m as f64 * p).cos()).collect()).collect();
    let sin = (0..=l_max).map(|m| phis.iter().map(|p| (m as f64 * p).sin()).collect()).collect();
    (cos, sin)
}

/// Field values at every `(θ_k, φ_j)`, θ-major.
pub fn synthesize(c: &SpectralCoeffs, thetas: &[f64], phis: &[f64]) -> Vec<f64> {
    let (cm, sm) = trig_tables(c.l_max(), phis);
    let mut out = vec![0.0; thetas.len() * phis.len()];
    let mut plm = Vec::new();
    for (k, &t) in thetas.iter().enumerate() {
        legendre_table(c.l_max(), t.cos(), t.sin(), &mut plm);
        synthesize_ring(c, &plm, &cm, &sm, &mut out[k * phis.len()..(k + 1) * phis.len()]);
    }
    out
}

/// Gauss–Legendre × uniform grid for projecting sampled fields.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub cos_theta: Vec<f64>,
    pub weights: Vec<f64>,
    pub phis: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let (cos_theta, weights) = gauss_legendre(n_theta);
        let phis = (0..n_phi).map(|j| 2.0 * PI * j as f64 / n_phi as f64).collect();
        QuadratureGrid { cos_theta, weights, phis }
    }

    /// Grid exact for products of band-limited fields of degree `l_max`.
    pub fn for_degree(l_max: usize) -> Self {
        Self::new(2 * (l_max + 2), 4 * (l_max + 2))
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.cos_theta.iter().map(|x| x.acos()).collect()
    }

    /// Unit vector of grid node `(k, j)`.
    pub fn point(&self, k: usize, j: usize) -> [f64; 3] {
        let z = self.cos_theta[k];
        let r = (1.0 - z * z).max(0.0).sqrt();
        [r * self.phis[j].cos(), r * self.phis[j].sin(), z]
    }

    /// Quadrature weight of node `(k, ·)`, including the `φ` spacing.
    pub fn area(&self, k: usize) -> f64 {
        self.weights[k] * 2.0 * PI / self.phis.len() as f64
    }

    /// `w^{lm} = ∫ f conj(Y_lm)` for real samples `f`, θ-major.
    pub fn analyze(&self, samples: &[f64], l_max: usize) -> SpectralCoeffs {
        let n_phi = self.phis.len();
        assert_eq!(samples.len(), self.cos_theta.len() * n_phi);
        let (cm, sm) = trig_tables(l_max, &self.phis);
        let at = |l: usize, m: usize| l * (l + 1) / 2 + m;
        let mut c = SpectralCoeffs::zeros(l_max);
        let mut plm = Vec::new();
        for (k, &x) in self.cos_theta.iter().enumerate() {
            let row = &samples[k * n_phi..(k + 1) * n_phi];
            legendre_table(l_max, x, (1.0 - x * x).max(0.0).sqrt(), &mut plm);
            let dw = self.area(k);
            for m in 0..=l_max {
                let mut f = Complex64::new(0.0, 0.0);
                for j in 0..n_phi {
                    f += Complex64::new(row[j] * cm[m][j], -row[j] * sm[m][j]);
                }
                f *= dw;
                for l in m.max(1)..=l_max {
                    let idx = crate::basis::lm_index(l, m as i64);
                    c.as_mut_slice()[idx] += f * plm[at(l, m)];
                }
            }
        }
        for l in 1..=l_max {
            for m in 1..=(l as i64) {
                let v = c.get(l, m);
                c.set_real_pair(l, m, v);
            }
            let v = c.get(l, 0);
            c.set(l, 0, Complex64::new(v.re, 0.0));
        }
        debug_assert_eq!(c.as_slice().len(), lm_count(l_max));
        c
    }

    /// `∫ f` for samples on this grid.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        let n_phi = self.phis.len();
        (0..self.cos_theta.len()).map(|k| self.area(k) * samples[k * n_phi..(k + 1) * n_phi].iter().sum::<f64>()).sum()
    }

    /// `∫ f x dA`.
    pub fn first_moment(&self, samples: &[f64]) -> [f64; 3] {
        let n_phi = self.phis.len();
        let mut acc = [0.0; 3];
        for k in 0..self.cos_theta.len() {
            for j in 0..n_phi {
                let p = self.point(k, j);
                let f = samples[k * n_phi + j] * self.area(k);
                for d in 0..3 {
                    acc[d] += f * p[d];
                }
            }
        }
        acc
    }
}

pub fn unit_vector(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// `(θ, φ)` of a nonzero vector, `φ ∈ [0, 2π)`.
pub fn angles(x: [f64; 3]) -> (f64, f64) {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let theta = (x[2] / r).clamp(-1.0, 1.0).acos();
    let mut phi = x[1].atan2(x[0]);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    (theta, phi)
}
