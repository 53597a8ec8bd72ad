//! Point vortices on the unit sphere.
//!
//! `dx_i/dt = (1/4π) sum_{j≠i} Γ_j (x_j × x_i) / (1 - x_i·x_j)`, stepped with
//! the implicit midpoint rule on the embedding coordinates. The midpoint
//! increment is orthogonal to the midpoint itself, so `|x_i|` is kept exactly,
//! and the pairwise antisymmetry of the field keeps `sum Γ_i x_i` exactly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sphere::unit_vector;

pub const COLLISION_GAP: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-13;
const MAX_ITERS: usize = 100;

pub type Vec3 = [f64; 3];

#[inline]
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointVortexState {
    pub x: Vec<Vec3>,
    pub gamma: Vec<f64>,
}

impl PointVortexState {
    pub fn new(x: Vec<Vec3>, gamma: Vec<f64>) -> Result<Self> {
        if x.len() != gamma.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: gamma.len() });
        }
        for (i, p) in x.iter().enumerate() {
            if (dot(*p, *p).sqrt() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("vortex {i} is not on the unit sphere")));
            }
        }
        Ok(PointVortexState { x, gamma })
    }

    /// Positions from azimuth `phi` and inclination `theta`.
    pub fn from_angles(phi: &[f64], theta: &[f64], gamma: &[f64]) -> Result<Self> {
        if phi.len() != theta.len() {
            return Err(Error::DimensionMismatch { expected: phi.len(), got: theta.len() });
        }
        let x = phi.iter().zip(theta).map(|(&p, &t)| unit_vector(t, p)).collect();
        Self::new(x, gamma.to_vec())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Velocities at arbitrary (not necessarily unit) positions.
fn field(x: &[Vec3], gamma: &[f64], out: &mut [Vec3]) -> Result<()> {
    let k = 1.0 / (4.0 * PI);
    out.fill([0.0; 3]);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let gap = 1.0 - dot(x[i], x[j]);
            if gap <= COLLISION_GAP {
                return Err(Error::Collision { i, j, gap });
            }
            let c = cross(x[j], x[i]);
            for d in 0..3 {
                out[i][d] += k * gamma[j] * c[d] / gap;
                out[j][d] -= k * gamma[i] * c[d] / gap;
            }
        }
    }
    Ok(())
}

pub fn pv_rhs(s: &PointVortexState) -> Result<Vec<Vec3>> {
    let mut v = vec![[0.0; 3]; s.len()];
    field(&s.x, &s.gamma, &mut v)?;
    Ok(v)
}

/// One implicit midpoint step, `x' = x + h f((x + x')/2)`, solved by
/// fixed-point iteration on the midpoint.
pub fn pv_step(s: &PointVortexState, h: f64) -> Result<PointVortexState> {
    pv_step_tol(s, h, DEFAULT_TOL)
}

pub fn pv_step_tol(s: &PointVortexState, h: f64, tol: f64) -> Result<PointVortexState> {
    let n = s.len();
    let mut mid = s.x.clone();
    let mut v = vec![[0.0; 3]; n];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iters = 0;
    while iters < MAX_ITERS {
        iters += 1;
        field(&mid, &s.gamma, &mut v)?;
        residual = 0.0;
        for i in 0..n {
            for d in 0..3 {
                let next = s.x[i][d] + 0.5 * h * v[i][d];
                residual = f64::max(residual, (next - mid[i][d]).abs());
                mid[i][d] = next;
            }
        }
        if residual <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations: iters, residual });
    }
    // x' = 2 mid - x = x + h f(mid); evaluate with the converged midpoint
    field(&mid, &s.gamma, &mut v)?;
    let x = (0..n)
        .map(|i| {
            let p = [s.x[i][0] + h * v[i][0], s.x[i][1] + h * v[i][1], s.x[i][2] + h * v[i][2]];
            let r = dot(p, p).sqrt();
            [p[0] / r, p[1] / r, p[2] / r]
        })
        .collect();
    Ok(PointVortexState { x, gamma: s.gamma.clone() })
}

/// `H = -(1/4π) sum_{i<j} Γ_i Γ_j ln(1 - x_i·x_j)` and `L = sum Γ_i x_i`.
pub fn pv_invariants(s: &PointVortexState) -> Result<(f64, Vec3)> {
    let mut h = 0.0;
    for i in 0..s.len() {
        for j in (i + 1)..s.len() {
            let gap = 1.0 - dot(s.x[i], s.x[j]);
            if gap <= COLLISION_GAP {
                return Err(Error::Collision { i, j, gap });
            }
            h -= s.gamma[i] * s.gamma[j] * gap.ln();
        }
    }
    h /= 4.0 * PI;
    let mut l = [0.0; 3];
    for (x, g) in s.x.iter().zip(&s.gamma) {
        for d in 0..3 {
            l[d] += g * x[d];
        }
    }
    Ok((h, l))
}

/// Relative strengths with `Γ_1 = 1` making `sum Γ_i x_i = 0`. More than
/// four vortices give the minimum-norm solution.
pub fn strengths_from_positions(x: &[Vec3]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateConfiguration("need at least two positions".into()));
    }
    let a = DMatrix::from_fn(3, n - 1, |r, c| x[c + 1][r]);
    let b = DVector::from_iterator(3, x[0].iter().map(|v| -v));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count();
    if rank < (n - 1).min(3) {
        return Err(Error::DegenerateConfiguration(format!("positions span rank {rank}, need {}", (n - 1).min(3))));
    }
    let sol = svd.solve(&b, 1e-10 * smax).map_err(|e| Error::DegenerateConfiguration(e.to_string()))?;
    let resid = (&a * &sol - &b).norm();
    if resid > 1e-9 {
        return Err(Error::DegenerateConfiguration(format!("no zero-momentum strengths exist (residual {resid:.3e})")));
    }
    let mut g = vec![1.0];
    g.extend(sol.iter());
    Ok(g)
}

/// The four-vortex zero-momentum configuration extracted from tracked blobs.
pub fn four_vortex_reference() -> PointVortexState {
    PointVortexState::from_angles(
        &[2.3218, -0.9638, -2.5283, 0.8511],
        &[1.3017, 1.8837, 1.577, 1.5896],
        &[1.0, 0.9002, -0.5436, -0.4178],
    )
    .expect("reference data is valid")
}
