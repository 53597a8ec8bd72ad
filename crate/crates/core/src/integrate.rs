//! Time stepping for `dW/dτ = [Δ⁻¹(W - F), W]` and conserved-quantity
//! diagnostics.
//!
//! The steppers work in the dimensionless time of the unit matrix bracket.
//! Runs normalize the initial matrix to unit Frobenius norm, which fixes the
//! conversion to physical time (see [`time_scale`]).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::{lm_index, QuantBasis, SpectralCoeffs};
use crate::cmat::{gemm, CMatrix, I};
use crate::error::{Error, Result};
use crate::laplacian::LaplacianOperator;

pub const DEFAULT_TOL: f64 = 1e-13;
pub const DEFAULT_MAX_ITERS: usize = 50;
const ANDERSON_DEPTH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    IsoMp,
    Heun,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "isomp" => Ok(Scheme::IsoMp),
            "heun" => Ok(Scheme::Heun),
            other => Err(Error::Config(format!("unknown integrator '{other}' (expected isomp or heun)"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::IsoMp => "isomp",
            Scheme::Heun => "heun",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperOptions {
    pub scheme: Scheme,
    pub h: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl StepperOptions {
    pub fn new(scheme: Scheme, h: f64) -> Self {
        StepperOptions { scheme, h, tol: DEFAULT_TOL, max_iters: DEFAULT_MAX_ITERS }
    }
}

/// Physical seconds per step: `h sqrt(16π) / (N^{3/2} ‖W0‖)`.
pub fn time_scale(n: usize, h: f64, norm_w0: f64) -> Result<f64> {
    if !(norm_w0 > 0.0) || !norm_w0.is_finite() {
        return Err(Error::InvalidArgument(format!("initial norm must be positive, got {norm_w0}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    Ok(h * (16.0 * std::f64::consts::PI).sqrt() / ((n as f64).powf(1.5) * norm_w0))
}

/// Steps a matrix in place, reusing its scratch matrices between steps.
#[derive(Debug, Clone)]
pub struct Stepper {
    lap: Arc<LaplacianOperator>,
    forcing: CMatrix,
    opts: StepperOptions,
    p: CMatrix,
    prod: CMatrix,
    cube: CMatrix,
    tilde: CMatrix,
    next: CMatrix,
    scratch: CMatrix,
    last_iters: usize,
}

impl Stepper {
    /// `forcing` is the Coriolis matrix in the same units as the stepped state.
    pub fn new(lap: Arc<LaplacianOperator>, forcing: CMatrix, opts: StepperOptions) -> Result<Self> {
        let n = lap.n();
        forcing.check_dim(n)?;
        if !(opts.h.is_finite()) || opts.h == 0.0 {
            return Err(Error::InvalidArgument(format!("step size must be finite and nonzero, got {}", opts.h)));
        }
        if !(opts.tol > 0.0) || opts.max_iters == 0 {
            return Err(Error::InvalidArgument("tolerance and iteration cap must be positive".into()));
        }
        let z = CMatrix::zeros(n);
        Ok(Stepper {
            lap,
            forcing,
            opts,
            p: z.clone(),
            prod: z.clone(),
            cube: z.clone(),
            tilde: z.clone(),
            next: z.clone(),
            scratch: z,
            last_iters: 0,
        })
    }

    pub fn options(&self) -> &StepperOptions {
        &self.opts
    }

    pub fn set_step_size(&mut self, h: f64) {
        self.opts.h = h;
    }

    /// Inner iterations used by the last implicit step.
    pub fn last_iterations(&self) -> usize {
        self.last_iters
    }

    pub fn step(&mut self, w: &mut CMatrix) -> Result<()> {
        match self.opts.scheme {
            Scheme::IsoMp => self.isomp_step(w),
            Scheme::Heun => self.heun_step(w),
        }
    }

    /// `P = Δ⁻¹(x - F)`.
    fn stream(&mut self, x: &CMatrix) {
        self.scratch.copy_from(x);
        self.scratch.axpy(Complex64::new(-1.0, 0.0), &self.forcing);
        self.lap.solve_into(&self.scratch, &mut self.p).expect("dimensions checked at construction");
    }

    /// One application of the midpoint map
    /// `x -> w + (h/2)[P, x] + (h²/4) P x P`, written to `self.next`.
    /// Leaves `P` and `P x P` for `x` in `self.p` and `self.cube`.
    fn midpoint_map(&mut self, w: &CMatrix, x: &CMatrix) {
        let a = 0.5 * self.opts.h;
        self.stream(x);
        self.p.mul_into(x, &mut self.prod);
        gemm(&self.prod, &self.p, &mut self.cube, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let n = w.n();
        let (pw, cube) = (self.prod.as_slice(), self.cube.as_slice());
        let ws = w.as_slice();
        let out = self.next.as_mut_slice();
        // x P = (P x)† because both are skew-Hermitian
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let comm = pw[idx] - pw[j * n + i].conj();
                out[idx] = ws[idx] + comm * a + cube[idx] * (a * a);
            }
        }
    }

    /// Isospectral midpoint step. Solves
    /// `W_n = (I - (h/2)P) W̃ (I + (h/2)P)`, `P = Δ⁻¹(W̃ - F)`, by fixed-point
    /// iteration from `W̃ = W_n`, then sets
    /// `W_{n+1} = (I + (h/2)P) W̃ (I - (h/2)P)`.
    pub fn isomp_step(&mut self, w: &mut CMatrix) -> Result<()> {
        w.check_dim(self.lap.n())?;
        let w0 = w.clone();
        self.tilde.copy_from(&w0);
        let mut converged = false;
        let mut residual = f64::INFINITY;
        let mut prev_residual = f64::INFINITY;
        let mut stalls = 0;
        let mut iters = 0;
        while iters < self.opts.max_iters {
            iters += 1;
            let x = self.tilde.clone();
            self.midpoint_map(&w0, &x);
            residual =
                self.next.as_slice().iter().zip(x.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            if residual <= self.opts.tol {
                self.cayley_finish(&w0, w);
                converged = true;
                break;
            }
            if residual > 0.9 * prev_residual {
                stalls += 1;
                if stalls >= 3 {
                    break;
                }
            }
            prev_residual = residual;
            std::mem::swap(&mut self.tilde, &mut self.next);
        }
        if !converged {
            let (ok, extra, res) = self.anderson_solve(&w0, w)?;
            iters += extra;
            residual = res;
            converged = ok;
        }
        self.last_iters = iters;
        if !converged {
            *w = w0;
            return Err(Error::NonConvergence { iterations: iters, residual });
        }
        w.project_su();
        Ok(())
    }

    /// Writes `W_{n+1} = Q W_n Q†` with `Q = (I - aP)⁻¹(I + aP)`, `a = h/2`,
    /// using the `P` of the converged stage. At the exact stage this equals
    /// `(I + aP) W̃ (I - aP)`; as a unitary conjugation it keeps the spectrum
    /// of `W_n` to rounding error whatever the inner tolerance.
    fn cayley_finish(&mut self, w0: &CMatrix, out: &mut CMatrix) {
        let n = w0.n();
        let a = Complex64::new(0.5 * self.opts.h, 0.0);
        let p = self.p.to_nalgebra();
        let id = DMatrix::<Complex64>::identity(n, n);
        let minus = &id - &p * a;
        let plus = &id + &p * a;
        // I - aP has eigenvalues 1 - i a λ with λ real, never zero
        let q = minus.lu().solve(&plus).expect("Cayley factor is invertible");
        let q = CMatrix::from_nalgebra(&q);
        q.mul_into(w0, &mut self.prod);
        let qh = q.adjoint();
        self.prod.mul_into(&qh, out);
    }

    /// Anderson-accelerated solve of the midpoint fixed point, started from
    /// `W_n` again. Used when plain iteration stalls.
    fn anderson_solve(&mut self, w0: &CMatrix, out: &mut CMatrix) -> Result<(bool, usize, f64)> {
        let len = w0.as_slice().len();
        let flat = |m: &CMatrix| -> DVector<f64> {
            DVector::from_iterator(2 * len, m.as_slice().iter().flat_map(|z| [z.re, z.im]))
        };
        let unflat = |v: &DVector<f64>, m: &mut CMatrix| {
            for (k, z) in m.as_mut_slice().iter_mut().enumerate() {
                *z = Complex64::new(v[2 * k], v[2 * k + 1]);
            }
        };
        let mut x = w0.clone();
        let mut hist_f: Vec<DVector<f64>> = Vec::new();
        let mut hist_g: Vec<DVector<f64>> = Vec::new();
        let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
        let mut residual = f64::INFINITY;
        for it in 1..=self.opts.max_iters {
            self.midpoint_map(w0, &x);
            let xv = flat(&x);
            let gv = flat(&self.next);
            let fv = &gv - &xv;
            residual = fv.norm();
            if residual <= self.opts.tol {
                self.cayley_finish(w0, out);
                return Ok((true, it, residual));
            }
            if let Some((pf, pg)) = prev.take() {
                hist_f.push(&fv - pf);
                hist_g.push(&gv - pg);
                if hist_f.len() > ANDERSON_DEPTH {
                    hist_f.remove(0);
                    hist_g.remove(0);
                }
            }
            prev = Some((fv.clone(), gv.clone()));
            let mut xn = gv.clone();
            let m = hist_f.len();
            if m > 0 {
                let df = DMatrix::from_columns(&hist_f);
                let mut gram = df.transpose() * &df;
                let reg = 1e-14 * gram.trace().max(1e-300);
                for k in 0..m {
                    gram[(k, k)] += reg;
                }
                let rhs = df.transpose() * &fv;
                if let Some(gamma) = gram.lu().solve(&rhs) {
                    let dg = DMatrix::from_columns(&hist_g);
                    xn -= dg * gamma;
                }
            }
            unflat(&xn, &mut x);
        }
        Ok((false, self.opts.max_iters, residual))
    }

    /// Heun step with the trace-corrected commutator updates:
    /// `K1 = P(W_n) W_n`, `W̃ = W_n + h(K1 - K1†)`, `K2 = K1 + P(W̃) W̃`,
    /// `W_{n+1} = W_n + (h/2)(K2 - K2†)`, each skew part made traceless.
    pub fn heun_step(&mut self, w: &mut CMatrix) -> Result<()> {
        w.check_dim(self.lap.n())?;
        let n = w.n();
        let h = self.opts.h;
        let w0 = w.clone();
        self.stream(&w0);
        self.p.mul_into(&w0, &mut self.prod); // K1
        skew_traceless(&self.prod, &mut self.scratch);
        self.tilde.copy_from(&w0);
        self.tilde.axpy(Complex64::new(h, 0.0), &self.scratch);
        let tilde = self.tilde.clone();
        self.stream(&tilde);
        // K2 = K1 + P(W̃) W̃
        gemm(&self.p, &tilde, &mut self.prod, Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
        skew_traceless(&self.prod, &mut self.scratch);
        w.axpy(Complex64::new(0.5 * h, 0.0), &self.scratch);
        debug_assert_eq!(w.n(), n);
        w.project_su();
        Ok(())
    }
}

/// `out = K - K† - tr(K - K†) I / N`.
fn skew_traceless(k: &CMatrix, out: &mut CMatrix) {
    let n = k.n();
    let ks = k.as_slice();
    let os = out.as_mut_slice();
    for i in 0..n {
        for j in 0..n {
            os[i * n + j] = ks[i * n + j] - ks[j * n + i].conj();
        }
    }
    let tr: Complex64 = (0..n).map(|i| os[i * n + i]).sum::<Complex64>() / n as f64;
    for i in 0..n {
        os[i * n + i] -= tr;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub energy: f64,
    /// `C_k = Tr((-iW)^k)` for `k = 2..=K`.
    pub casimirs: Vec<f64>,
    pub momentum: [f64; 3],
    pub gamma: f64,
}

/// Angular momentum `∫ ω x dA` from the degree-one content of `W`.
pub fn momentum(w: &CMatrix, basis: &QuantBasis) -> [f64; 3] {
    let coef = |m: i64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &t) in basis.diagonal(1, m).iter().enumerate() {
            acc += w[crate::basis::diag_position(m, k)] * t;
        }
        -I * acc
    };
    debug_assert_eq!(lm_index(1, 0), 1);
    momentum_of(coef(0), coef(1))
}

/// Angular momentum of a coefficient set; zero exactly when the `l = 1`
/// coefficients are.
pub fn momentum_from_coeffs(c: &SpectralCoeffs) -> [f64; 3] {
    momentum_of(c.get(1, 0), c.get(1, 1))
}

fn momentum_of(w10: Complex64, w11: Complex64) -> [f64; 3] {
    let pi = std::f64::consts::PI;
    let side = 2.0 * (2.0 * pi / 3.0).sqrt();
    [-side * w11.re, side * w11.im, (4.0 * pi / 3.0).sqrt() * w10.re]
}

/// `H = ½ Re Tr(Δ⁻¹(W - F) (W - F)†)`.
pub fn energy(w: &CMatrix, lap: &LaplacianOperator, forcing: &CMatrix) -> Result<f64> {
    let x = w.sub(forcing);
    let p = lap.solve(&x)?;
    Ok(0.5 * x.inner(&p).re)
}

/// `Tr((-iW)^k)` for `k = 2..=max_power`.
pub fn casimirs(w: &CMatrix, max_power: usize) -> Vec<f64> {
    let n = w.n();
    let z = CMatrix::from_fn(n, |i, j| -I * w[(i, j)]);
    let half = max_power.div_ceil(2).max(1);
    let mut powers = vec![z.clone()];
    for _ in 1..half {
        let next = powers.last().unwrap().mul(&z);
        powers.push(next);
    }
    (2..=max_power)
        .map(|k| {
            let a = k / 2;
            let b = k - a;
            let (pa, pb) = (&powers[a - 1], &powers[b - 1]);
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += (pa[(i, j)] * pb[(j, i)]).re;
                }
            }
            acc
        })
        .collect()
}

pub fn gamma(momentum: [f64; 3], enstrophy: f64) -> f64 {
    if enstrophy <= 0.0 {
        return 0.0;
    }
    let l = (momentum[0].powi(2) + momentum[1].powi(2) + momentum[2].powi(2)).sqrt();
    l / enstrophy.sqrt()
}

/// All diagnostics for physical `W` and forcing `F` at time `t`.
pub fn diagnostics(
    w: &CMatrix,
    lap: &LaplacianOperator,
    basis: &QuantBasis,
    forcing: &CMatrix,
    max_power: usize,
    t: f64,
) -> Result<Diagnostics> {
    w.check_dim(basis.n())?;
    let energy = energy(w, lap, forcing)?;
    let casimirs = casimirs(w, max_power.max(2));
    let momentum = momentum(w, basis);
    let gamma = gamma(momentum, casimirs[0]);
    Ok(Diagnostics { t, energy, casimirs, momentum, gamma })
}
