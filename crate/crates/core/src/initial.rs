//! Initial vorticity: random L² fields, Gaussian blobs, and quantized
//! Rossby–Haurwitz waves.

use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::{coeffs_to_matrix, QuantBasis, SpectralCoeffs};
use crate::cmat::{VorticityMatrix, I};
use crate::error::{Error, Result};
use crate::sphere::{unit_vector, QuadratureGrid};

pub const DEFAULT_EPS: f64 = 0.01;
pub const DEFAULT_BLOB_WIDTH: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomFieldParams {
    pub seed: u64,
    pub eps: f64,
    pub l_max: usize,
}

/// Isotropic Gaussian field with `|w^{lm}| l^{1+eps}` of unit variance.
///
/// For `m > 0` the real and imaginary parts are independent `N(0, 1/2)`;
/// `m = 0` is a real `N(0, 1)`. The result is not normalized.
pub fn sample_l2_random(p: &RandomFieldParams) -> Result<SpectralCoeffs> {
    if p.l_max == 0 {
        return Err(Error::InvalidArgument("random field needs l_max >= 1".into()));
    }
    if !(p.eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {}", p.eps)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut c = SpectralCoeffs::zeros(p.l_max);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for l in 1..=p.l_max {
        let decay = (l as f64).powf(1.0 + p.eps);
        let g: f64 = StandardNormal.sample(&mut rng);
        c.set(l, 0, Complex64::new(g / decay, 0.0));
        for m in 1..=(l as i64) {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            c.set_real_pair(l, m, Complex64::new(a, b) * (half / decay));
        }
    }
    Ok(c)
}

/// Removes the `l = 1` content, which carries the angular momentum.
pub fn zero_momentum_projection(c: &SpectralCoeffs) -> SpectralCoeffs {
    let mut out = c.clone();
    for m in -1..=1 {
        out.set(1, m, Complex64::new(0.0, 0.0));
    }
    out
}

/// Scales coefficients so the resulting matrix has unit Frobenius norm.
/// Orthonormality of the basis makes this the coefficient 2-norm.
pub fn normalize(c: &mut SpectralCoeffs) -> Result<()> {
    let norm = c.norm_sqr().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("cannot normalize a zero field".into()));
    }
    c.scale(1.0 / norm);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub centers: Vec<[f64; 3]>,
    pub strengths: Vec<f64>,
    pub width: f64,
}

impl BlobSpec {
    /// Blobs from inclination `theta` and azimuth `phi` angles.
    pub fn from_angles(phi: &[f64], theta: &[f64], strengths: &[f64], width: f64) -> Result<Self> {
        if phi.len() != theta.len() || phi.len() != strengths.len() {
            return Err(Error::InvalidArgument("blob angle and strength lists differ in length".into()));
        }
        let centers = phi.iter().zip(theta).map(|(&p, &t)| unit_vector(t, p)).collect();
        Ok(BlobSpec { centers, strengths: strengths.to_vec(), width })
    }

    /// The four-blob configuration used for the zero-momentum demonstration.
    pub fn four_blob_reference() -> Self {
        Self::from_angles(
            &[2.3218, -0.9638, -2.5283, 0.8511],
            &[1.3017, 1.8837, 1.577, 1.5896],
            &[1.0, 0.9002, -0.5436, -0.4178],
            DEFAULT_BLOB_WIDTH,
        )
        .expect("lengths match")
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        self.centers
            .iter()
            .zip(&self.strengths)
            .map(|(c, g)| {
                let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2);
                g * (-self.width * d2).exp()
            })
            .sum()
    }
}

/// Projects the blob sum onto degrees `1..=l_max`. Leaving out `l = 0` and
/// zeroing `l = 1` is the same as adding the correction `c0 + sum c_m Y_1m`
/// that removes the mean and the angular momentum.
pub fn gaussian_blobs(spec: &BlobSpec, n: usize) -> Result<SpectralCoeffs> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("N must be at least 2, got {n}")));
    }
    for (i, a) in spec.centers.iter().enumerate() {
        let r = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        if (r - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("blob center {i} is not a unit vector")));
        }
        for b in &spec.centers[..i] {
            if (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs() < 1e-12 {
                return Err(Error::InvalidArgument("blob centers must be distinct".into()));
            }
        }
    }
    let l_max = n - 1;
    let grid = QuadratureGrid::for_degree(l_max);
    let n_phi = grid.phis.len();
    let mut samples = vec![0.0; grid.cos_theta.len() * n_phi];
    for k in 0..grid.cos_theta.len() {
        for j in 0..n_phi {
            samples[k * n_phi + j] = spec.eval(grid.point(k, j));
        }
    }
    Ok(zero_momentum_projection(&grid.analyze(&samples, l_max)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhWaveSpec {
    pub c: f64,
    pub l: usize,
    /// `(m, w^{lm})` pairs; partners for the reality condition are implied.
    pub amplitudes: Vec<(i64, Complex64)>,
    pub omega: f64,
}

impl RhWaveSpec {
    /// The non-stationary, non-zonal wave used to illustrate break-up.
    pub fn unstable_reference() -> Self {
        RhWaveSpec { c: 1.0, l: 5, amplitudes: vec![(4, Complex64::new(7.73, 0.0))], omega: 12.9487 / 2.0 }
    }

    pub fn alpha(&self) -> f64 {
        let ll = (self.l * (self.l + 1)) as f64;
        0.5 * (2.0 * self.c / ll - self.c + 1.0)
    }

    /// The `C` making the wave stationary, defined for `l >= 2`.
    pub fn stationary_c(l: usize) -> f64 {
        let ll = (l * (l + 1)) as f64;
        ll / (ll - 2.0)
    }

    /// Wave part without the `C F` background.
    pub fn wave_coeffs(&self, l_max: usize) -> Result<SpectralCoeffs> {
        if self.l == 0 || self.l > l_max {
            return Err(Error::InvalidArgument(format!("RH degree l = {} outside 1..={l_max}", self.l)));
        }
        let mut c = SpectralCoeffs::zeros(l_max);
        for &(m, v) in &self.amplitudes {
            if m.unsigned_abs() as usize > self.l {
                return Err(Error::InvalidArgument(format!("|m| = {} exceeds l = {}", m.abs(), self.l)));
            }
            if m >= 0 {
                c.set_real_pair(self.l, m, v);
            } else {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                c.set_real_pair(self.l, -m, v.conj() * sign);
            }
        }
        Ok(c)
    }

    /// Full initial coefficients `C f + wave`.
    pub fn coeffs(&self, l_max: usize) -> Result<SpectralCoeffs> {
        let mut c = self.wave_coeffs(l_max)?;
        let bg = c.get(1, 0) + 2.0 * self.omega * self.c;
        c.set(1, 0, bg);
        Ok(c)
    }
}

/// Coriolis matrix `2Ω i T_10`, the quantization of `2Ω cos θ` scaled to the
/// `Y_10` mode.
pub fn coriolis_matrix(basis: &QuantBasis, omega: f64) -> VorticityMatrix {
    let mut f = VorticityMatrix::zeros(basis.n());
    for (k, &t) in basis.diagonal(1, 0).iter().enumerate() {
        f[(k, k)] = I * (2.0 * omega * t);
    }
    f
}

/// Rate converting the unit matrix bracket to physical time,
/// `N^{3/2} / sqrt(16π)`.
pub fn bracket_rate(n: usize) -> f64 {
    (n as f64).powf(1.5) / (16.0 * std::f64::consts::PI).sqrt()
}

/// Exact quantized RH solution at physical time `t`:
/// `W(t) = C F + exp(k a F t) U exp(-k a F t)` with `k` the bracket rate and
/// `a` the wave's alpha. `F` is diagonal, so conjugation is an entrywise phase.
pub fn rh_wave(spec: &RhWaveSpec, basis: &QuantBasis, t: f64) -> Result<VorticityMatrix> {
    let n = basis.n();
    let u = coeffs_to_matrix(&spec.wave_coeffs(n - 1)?, basis)?;
    let tau = basis.diagonal(1, 0);
    let rate = bracket_rate(n) * spec.alpha() * 2.0 * spec.omega * t;
    let mut w = VorticityMatrix::from_fn(n, |i, j| {
        let ph = rate * (tau[i] - tau[j]);
        u[(i, j)] * Complex64::new(ph.cos(), ph.sin())
    });
    w.axpy(Complex64::new(spec.c, 0.0), &coriolis_matrix(basis, spec.omega));
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::matrix_to_coeffs;
    use crate::laplacian::LaplacianOperator;

    #[test]
    fn sampler_is_deterministic_and_real() {
        let p = RandomFieldParams { seed: 7, eps: 0.01, l_max: 12 };
        let a = sample_l2_random(&p).unwrap();
        assert_eq!(a, sample_l2_random(&p).unwrap());
        assert!(a.reality_defect() < 1e-15);
        let b = sample_l2_random(&RandomFieldParams { seed: 8, ..p }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn sampler_rejects_bad_params() {
        assert!(sample_l2_random(&RandomFieldParams { seed: 0, eps: 0.0, l_max: 3 }).is_err());
        assert!(sample_l2_random(&RandomFieldParams { seed: 0, eps: 0.1, l_max: 0 }).is_err());
    }

    #[test]
    fn projection_is_idempotent() {
        let c = sample_l2_random(&RandomFieldParams { seed: 1, eps: 0.01, l_max: 6 }).unwrap();
        let p = zero_momentum_projection(&c);
        assert_eq!(p, zero_momentum_projection(&p));
        for m in -1..=1 {
            assert_eq!(p.get(1, m), Complex64::new(0.0, 0.0));
        }
        assert_eq!(p.get(4, 2), c.get(4, 2));
    }

    #[test]
    fn single_blob_has_no_mean_or_momentum() {
        let spec = BlobSpec::from_angles(&[0.4], &[1.1], &[1.0], 20.0).unwrap();
        let c = gaussian_blobs(&spec, 21).unwrap();
        let g = QuadratureGrid::for_degree(40);
        let samples = crate::sphere::synthesize(&c, &g.thetas(), &g.phis);
        assert!(g.integrate(&samples).abs() < 1e-12);
        let l = g.first_moment(&samples);
        assert!(l.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn coincident_blobs_rejected() {
        let spec = BlobSpec::from_angles(&[0.4, 0.4], &[1.1, 1.1], &[1.0, -1.0], 20.0).unwrap();
        assert!(gaussian_blobs(&spec, 9).is_err());
    }

    #[test]
    fn stationary_choice_has_zero_alpha() {
        for l in 2..8 {
            let spec = RhWaveSpec { c: RhWaveSpec::stationary_c(l), l, amplitudes: vec![], omega: 1.0 };
            assert!(spec.alpha().abs() < 1e-15);
        }
        assert!((RhWaveSpec::unstable_reference().alpha() - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn rh_wave_at_zero_matches_coefficients() {
        let n = 9;
        let b = QuantBasis::new(n).unwrap();
        let spec = RhWaveSpec::unstable_reference();
        let w = rh_wave(&spec, &b, 0.0).unwrap();
        let c = matrix_to_coeffs(&w, &b, n - 1).unwrap();
        assert!((c.get(1, 0).re - 12.9487).abs() < 1e-12);
        assert!((c.get(5, 4).re - 7.73).abs() < 1e-12);
        assert!((c.get(5, -4).re - 7.73).abs() < 1e-12);
        assert!(w.skew_defect() < 1e-12);
    }

    #[test]
    fn rh_wave_solves_the_flow() {
        // central difference of the closed form against k [Δ⁻¹(W - F), W]
        let n = 11;
        let b = QuantBasis::new(n).unwrap();
        let lap = LaplacianOperator::new(n).unwrap();
        let spec = RhWaveSpec {
            c: 0.3,
            l: 4,
            amplitudes: vec![(3, Complex64::new(0.5, -0.2)), (0, Complex64::new(0.7, 0.0))],
            omega: 1.3,
        };
        let f = coriolis_matrix(&b, spec.omega);
        let t = 0.37;
        let dt = 1e-5;
        let w = rh_wave(&spec, &b, t).unwrap();
        let mut dw = rh_wave(&spec, &b, t + dt).unwrap().sub(&rh_wave(&spec, &b, t - dt).unwrap());
        dw.scale(0.5 / dt);
        let p = lap.solve(&w.sub(&f)).unwrap();
        let mut rhs = p.mul(&w).sub(&w.mul(&p));
        rhs.scale(bracket_rate(n));
        assert!(dw.max_abs_diff(&rhs) < 1e-7 * rhs.norm().max(1.0), "{}", dw.max_abs_diff(&rhs));
    }
}
