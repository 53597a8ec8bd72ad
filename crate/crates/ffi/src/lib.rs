//! C ABI over the simulator.
//!
//! Every function returns a [`ZsStatus`]; on failure the message is kept per
//! thread and can be read with [`zs_last_error`]. Handles are opaque and must
//! be released with their matching `*_free`. Matrices cross the boundary as
//! `2 N²` doubles, row-major interleaved `(re, im)`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use num_complex::Complex64;
use zeitlin::initial::{coriolis_matrix, normalize, sample_l2_random, zero_momentum_projection, RandomFieldParams};
use zeitlin::integrate::{diagnostics, time_scale, Scheme, Stepper, StepperOptions};
use zeitlin::point_vortex::strengths_from_positions;
use zeitlin::sphere::unit_vector;
use zeitlin::wigner::{wigner3j, HalfInt};
use zeitlin::{coeffs_to_matrix, CMatrix, Error, LaplacianOperator, QuantBasis};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonConvergence = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ZsDiagnostics {
    pub t: f64,
    pub energy: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    pub gamma: f64,
}

pub const ZS_SCHEME_ISOMP: i32 = 0;
pub const ZS_SCHEME_HEUN: i32 = 1;

pub struct ZsBasis(QuantBasis);

pub struct ZsLaplacian(LaplacianOperator);

pub struct ZsSimulation {
    basis: QuantBasis,
    lap: Arc<LaplacianOperator>,
    forcing: CMatrix,
    stepper: Stepper,
    w: CMatrix,
    step: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ZsStatus {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) | Error::DegenerateConfiguration(_) | Error::DegenerateAxis => {
            ZsStatus::InvalidArgument
        }
        Error::DimensionMismatch { .. } => ZsStatus::DimensionMismatch,
        Error::NonConvergence { .. } => ZsStatus::NonConvergence,
        Error::SmallPivot { .. } | Error::Collision { .. } => ZsStatus::Numerical,
        Error::Io { .. } | Error::Format { .. } => ZsStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (ZsStatus, String)>) -> ZsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ZsStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            ZsStatus::Panic
        }
    }
}

fn lift<T>(r: zeitlin::Result<T>) -> Result<T, (ZsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (ZsStatus, String) {
    (ZsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (ZsStatus, String) {
    (ZsStatus::InvalidArgument, msg.into())
}

unsafe fn matrix_from(data: *const f64, len: usize, n: usize) -> Result<CMatrix, (ZsStatus, String)> {
    if data.is_null() {
        return Err(null("matrix data"));
    }
    if len != 2 * n * n {
        return Err((ZsStatus::DimensionMismatch, format!("expected {} doubles, got {len}", 2 * n * n)));
    }
    let s = std::slice::from_raw_parts(data, len);
    let v = s.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    lift(CMatrix::from_vec(n, v))
}

unsafe fn matrix_into(m: &CMatrix, out: *mut f64, len: usize) -> Result<(), (ZsStatus, String)> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    let n = m.n();
    if len != 2 * n * n {
        return Err((ZsStatus::DimensionMismatch, format!("expected {} doubles, got {len}", 2 * n * n)));
    }
    let s = std::slice::from_raw_parts_mut(out, len);
    for (c, z) in s.chunks_exact_mut(2).zip(m.as_slice()) {
        c[0] = z.re;
        c[1] = z.im;
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn zs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn zs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Wigner 3j symbol with every argument given as twice its value.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn zs_wigner3j(
    two_j1: i64,
    two_j2: i64,
    two_j3: i64,
    two_m1: i64,
    two_m2: i64,
    two_m3: i64,
    out: *mut f64,
) -> ZsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if two_j1 < 0 || two_j2 < 0 || two_j3 < 0 {
            return Err(invalid("angular momenta must be non-negative"));
        }
        let j = [two_j1, two_j2, two_j3].map(HalfInt::from_doubled);
        let m = [two_m1, two_m2, two_m3].map(HalfInt::from_doubled);
        *out = wigner3j(j, m);
        Ok(())
    })
}

/// Physical seconds per step for matrix size `n`, step `h` and initial
/// Frobenius norm `norm`.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn zs_time_scale(n: usize, h: f64, norm: f64, out: *mut f64) -> ZsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lift(time_scale(n, h, norm))?;
        Ok(())
    })
}

/// Strengths making the point vortices at inclinations `theta` and azimuths
/// `phi` a zero-momentum configuration, scaled so the first is one.
///
/// # Safety
/// `phi`, `theta` and `gamma_out` must each point to `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn zs_pv_strengths(
    phi: *const f64,
    theta: *const f64,
    count: usize,
    gamma_out: *mut f64,
) -> ZsStatus {
    guard(|| {
        if phi.is_null() || theta.is_null() || gamma_out.is_null() {
            return Err(null("argument"));
        }
        let (p, t) = (std::slice::from_raw_parts(phi, count), std::slice::from_raw_parts(theta, count));
        let x: Vec<[f64; 3]> = p.iter().zip(t).map(|(&p, &t)| unit_vector(t, p)).collect();
        let g = lift(strengths_from_positions(&x))?;
        std::slice::from_raw_parts_mut(gamma_out, count).copy_from_slice(&g);
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zs_basis_new(n: usize, out: *mut *mut ZsBasis) -> ZsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(ZsBasis(lift(QuantBasis::new(n))?)));
        Ok(())
    })
}

/// # Safety
/// `b` must come from [`zs_basis_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zs_basis_free(b: *mut ZsBasis) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Dense basis element `T_lm` written to `out` (`2 N²` doubles).
///
/// # Safety
/// `b` must be a live basis handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn zs_basis_element(b: *const ZsBasis, l: usize, m: i64, out: *mut f64, len: usize) -> ZsStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("basis"))?;
        if l == 0 || l > b.0.l_max() || m.unsigned_abs() as usize > l {
            return Err(invalid(format!("(l, m) = ({l}, {m}) outside the basis")));
        }
        matrix_into(&b.0.dense(l, m), out, len)
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zs_laplacian_new(n: usize, out: *mut *mut ZsLaplacian) -> ZsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(ZsLaplacian(lift(LaplacianOperator::new(n))?)));
        Ok(())
    })
}

/// # Safety
/// `l` must come from [`zs_laplacian_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zs_laplacian_free(l: *mut ZsLaplacian) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Applies the discrete Laplacian (`inverse = 0`) or its inverse.
///
/// # Safety
/// `input` and `output` must each hold `len = 2 N²` doubles.
#[no_mangle]
pub unsafe extern "C" fn zs_laplacian_apply(
    l: *const ZsLaplacian,
    inverse: i32,
    input: *const f64,
    output: *mut f64,
    len: usize,
) -> ZsStatus {
    guard(|| {
        let l = l.as_ref().ok_or_else(|| null("laplacian"))?;
        let x = matrix_from(input, len, l.0.n())?;
        let y = lift(if inverse != 0 { l.0.solve(&x) } else { l.0.apply(&x) })?;
        matrix_into(&y, output, len)
    })
}

/// New simulation of size `n` with scheme [`ZS_SCHEME_ISOMP`] or
/// [`ZS_SCHEME_HEUN`], step `h` in bracket time and rotation rate `omega`.
/// The state starts at zero.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zs_sim_new(
    n: usize,
    scheme: i32,
    h: f64,
    omega: f64,
    out: *mut *mut ZsSimulation,
) -> ZsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scheme = match scheme {
            ZS_SCHEME_ISOMP => Scheme::IsoMp,
            ZS_SCHEME_HEUN => Scheme::Heun,
            s => return Err(invalid(format!("unknown scheme {s}"))),
        };
        let basis = lift(QuantBasis::new(n))?;
        let lap = Arc::new(lift(LaplacianOperator::new(n))?);
        let forcing = coriolis_matrix(&basis, omega);
        let stepper = lift(Stepper::new(lap.clone(), forcing.clone(), StepperOptions::new(scheme, h)))?;
        let sim = ZsSimulation { basis, lap, forcing, stepper, w: CMatrix::zeros(n), step: 0 };
        *out = Box::into_raw(Box::new(sim));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`zs_sim_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zs_sim_free(s: *mut ZsSimulation) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Replaces the state with a seeded random field of unit norm.
///
/// # Safety
/// `s` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn zs_sim_init_random(s: *mut ZsSimulation, seed: u64, eps: f64, zero_momentum: i32) -> ZsStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| null("simulation"))?;
        let n = s.basis.n();
        let mut c = lift(sample_l2_random(&RandomFieldParams { seed, eps, l_max: n - 1 }))?;
        if zero_momentum != 0 {
            c = zero_momentum_projection(&c);
        }
        lift(normalize(&mut c))?;
        s.w = lift(coeffs_to_matrix(&c, &s.basis))?;
        s.step = 0;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live simulation handle and `data` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn zs_sim_set_matrix(s: *mut ZsSimulation, data: *const f64, len: usize) -> ZsStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| null("simulation"))?;
        s.w = matrix_from(data, len, s.basis.n())?;
        s.step = 0;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live simulation handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn zs_sim_get_matrix(s: *const ZsSimulation, out: *mut f64, len: usize) -> ZsStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("simulation"))?;
        matrix_into(&s.w, out, len)
    })
}

/// Advances `count` steps. On failure the state is left at the last
/// completed step.
///
/// # Safety
/// `s` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn zs_sim_step(s: *mut ZsSimulation, count: u64) -> ZsStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| null("simulation"))?;
        for _ in 0..count {
            let mut next = s.w.clone();
            lift(s.stepper.step(&mut next))?;
            s.w = next;
            s.step += 1;
        }
        Ok(())
    })
}

/// Steps taken since the state was last set.
///
/// # Safety
/// `s` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn zs_sim_step_count(s: *const ZsSimulation) -> u64 {
    s.as_ref().map_or(0, |s| s.step)
}

/// Conserved quantities of the current state; `t` is in bracket time.
///
/// # Safety
/// `s` must be a live simulation handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zs_sim_diagnostics(s: *const ZsSimulation, out: *mut ZsDiagnostics) -> ZsStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("simulation"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let t = s.step as f64 * s.stepper.options().h;
        let d = lift(diagnostics(&s.w, &s.lap, &s.basis, &s.forcing, 4, t))?;
        *out = ZsDiagnostics {
            t,
            energy: d.energy,
            c2: d.casimirs[0],
            c3: d.casimirs[1],
            c4: d.casimirs[2],
            lx: d.momentum[0],
            ly: d.momentum[1],
            lz: d.momentum[2],
            gamma: d.gamma,
        };
        Ok(())
    })
}
