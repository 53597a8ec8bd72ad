//! Physical-space observables: rasters, vortex-blob detection and tracking,
//! rotation-axis fits, final-state classification, and ω–ψ scatter data.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{matrix_to_coeffs, QuantBasis, SpectralCoeffs};
use crate::cmat::CMatrix;
use crate::error::{Error, Result};
use crate::laplacian::LaplacianOperator;
use crate::sim::{fmt_f64, list_frames, MatrixFrame, RunManifest, SimConfig, MANIFEST_FILE};
use crate::sphere::synthesize;

pub const DEFAULT_THRESHOLD: f64 = 0.3;
pub const DEFAULT_LINK_RADIUS: f64 = 0.5;
pub const DEFAULT_STRENGTH_FLOOR: f64 = 0.1;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.1;
pub const MIN_WINDOW: usize = 10;
pub const MAX_SCATTER_POINTS: usize = 100_000;

type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalized(a: Vec3) -> Vec3 {
    let r = dot(a, a).sqrt();
    [a[0] / r, a[1] / r, a[2] / r]
}

fn geodesic(a: Vec3, b: Vec3) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}

/// Values on cell centers `θ_k = (k + ½)π / n_θ`, `φ_j = 2πj / n_φ`,
/// stored θ-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRaster {
    pub n_phi: usize,
    pub n_theta: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

impl FieldRaster {
    pub fn theta(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * std::f64::consts::PI / self.n_theta as f64
    }

    pub fn phi(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * j as f64 / self.n_phi as f64
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.n_theta).map(|k| self.theta(k)).collect()
    }

    pub fn phis(&self) -> Vec<f64> {
        (0..self.n_phi).map(|j| self.phi(j)).collect()
    }

    /// Spherical area of a cell in row `k`.
    pub fn cell_area(&self, k: usize) -> f64 {
        let dt = std::f64::consts::PI / self.n_theta as f64;
        let t = self.theta(k);
        2.0 * std::f64::consts::PI / self.n_phi as f64 * ((t - 0.5 * dt).cos() - (t + 0.5 * dt).cos())
    }

    pub fn point(&self, k: usize, j: usize) -> Vec3 {
        crate::sphere::unit_vector(self.theta(k), self.phi(j))
    }

    pub fn at(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.n_phi + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `ZSR1`, `u32 n_phi`, `u32 n_theta`, `f64 t`, then the values, all
    /// little-endian.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(20 + 8 * self.values.len());
        buf.extend_from_slice(b"ZSR1");
        buf.extend_from_slice(&(self.n_phi as u32).to_le_bytes());
        buf.extend_from_slice(&(self.n_theta as u32).to_le_bytes());
        buf.extend_from_slice(&self.t.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let b = fs::read(path).map_err(|e| Error::io(path, e))?;
        if b.len() < 20 || &b[..4] != b"ZSR1" {
            return Err(Error::format(path, "missing ZSR1 header"));
        }
        let n_phi = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
        let n_theta = u32::from_le_bytes(b[8..12].try_into().unwrap()) as usize;
        let t = f64::from_le_bytes(b[12..20].try_into().unwrap());
        if b.len() != 20 + 8 * n_phi * n_theta {
            return Err(Error::format(path, "raster size does not match its header"));
        }
        let values = b[20..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(FieldRaster { n_phi, n_theta, t, values })
    }

    /// Binary grayscale PGM, zero mapped to mid-gray.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let scale = self.max_abs();
        let mut buf = format!("P5\n{} {}\n255\n", self.n_phi, self.n_theta).into_bytes();
        for v in &self.values {
            let g = if scale > 0.0 { 127.5 * (1.0 + v / scale) } else { 127.5 };
            buf.push(g.round().clamp(0.0, 255.0) as u8);
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

pub fn synthesize_raster(c: &SpectralCoeffs, n_phi: usize, n_theta: usize) -> Result<FieldRaster> {
    if n_phi < 4 || n_theta < 4 {
        return Err(Error::InvalidArgument(format!("raster needs at least 4x4 cells, got {n_phi}x{n_theta}")));
    }
    let mut r = FieldRaster { n_phi, n_theta, t: 0.0, values: Vec::new() };
    r.values = synthesize(c, &r.thetas(), &r.phis());
    Ok(r)
}

/// Coefficients of `ψ = Δ⁻¹(W - F)`.
pub fn stream_function(
    w: &CMatrix,
    lap: &LaplacianOperator,
    forcing: &CMatrix,
    basis: &QuantBasis,
) -> Result<SpectralCoeffs> {
    let p = lap.solve(&w.sub(forcing))?;
    matrix_to_coeffs(&p, basis, basis.l_max())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub centroid: Vec3,
    pub sign: i8,
    /// Signed `∫ ω` over the component.
    pub strength: f64,
    pub area: f64,
    pub cells: usize,
}

/// Same-sign connected components of `|ω| >= threshold_frac * max|ω|`.
///
/// Cells touch their eight neighbours, with `φ` periodic; the first and last
/// rows also touch the cell opposite them across the pole.
pub fn detect_blobs(r: &FieldRaster, threshold_frac: f64) -> Result<Vec<Blob>> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must lie in (0, 1), got {threshold_frac}")));
    }
    let max = r.max_abs();
    if max == 0.0 {
        return Ok(Vec::new());
    }
    let cut = threshold_frac * max;
    let (np, nt) = (r.n_phi, r.n_theta);
    let sign_of = |v: f64| -> i8 {
        if v >= cut {
            1
        } else if v <= -cut {
            -1
        } else {
            0
        }
    };
    let mut label = vec![usize::MAX; np * nt];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..np * nt {
        let s = sign_of(r.values[start]);
        if s == 0 || label[start] != usize::MAX {
            continue;
        }
        let id = blobs.len();
        label[start] = id;
        stack.push(start);
        let mut acc = [0.0; 3];
        let (mut strength, mut area, mut cells) = (0.0, 0.0, 0);
        while let Some(idx) = stack.pop() {
            let (k, j) = (idx / np, idx % np);
            let v = r.values[idx];
            let a = r.cell_area(k);
            let p = r.point(k, j);
            for d in 0..3 {
                acc[d] += v.abs() * a * p[d];
            }
            strength += v * a;
            area += a;
            cells += 1;
            let mut visit = |kk: usize, jj: usize| {
                let n = kk * np + jj;
                if label[n] == usize::MAX && sign_of(r.values[n]) == s {
                    label[n] = id;
                    stack.push(n);
                }
            };
            for dk in -1i64..=1 {
                let kk = k as i64 + dk;
                if kk < 0 || kk >= nt as i64 {
                    continue;
                }
                for dj in -1i64..=1 {
                    if dk == 0 && dj == 0 {
                        continue;
                    }
                    let jj = (j as i64 + dj).rem_euclid(np as i64) as usize;
                    visit(kk as usize, jj);
                }
            }
            if k == 0 || k == nt - 1 {
                visit(k, (j + np / 2) % np);
            }
        }
        blobs.push(Blob { centroid: normalized(acc), sign: s, strength, area, cells });
    }
    Ok(blobs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobTrack {
    pub id: usize,
    pub sign: i8,
    pub frames: Vec<usize>,
    pub times: Vec<f64>,
    pub centroids: Vec<Vec3>,
    pub strengths: Vec<f64>,
    pub areas: Vec<f64>,
}

impl BlobTrack {
    pub fn first_frame(&self) -> usize {
        self.frames[0]
    }

    pub fn last_frame(&self) -> usize {
        *self.frames.last().unwrap()
    }

    fn push(&mut self, frame: usize, t: f64, b: &Blob) {
        self.frames.push(frame);
        self.times.push(t);
        self.centroids.push(b.centroid);
        self.strengths.push(b.strength);
        self.areas.push(b.area);
    }
}

/// Greedy nearest-centroid linking of per-frame blob lists `(t, blobs)`.
/// A track may be continued across at most `max_gap` frames, with the link
/// radius growing in proportion to the gap.
pub fn link_tracks(frames: &[(f64, Vec<Blob>)], radius: f64, max_gap: usize) -> Vec<BlobTrack> {
    let mut tracks: Vec<BlobTrack> = Vec::new();
    for (f, (t, blobs)) in frames.iter().enumerate() {
        let mut pairs = Vec::new();
        for (ti, tr) in tracks.iter().enumerate() {
            let gap = f - tr.last_frame();
            if gap == 0 || gap > max_gap {
                continue;
            }
            for (bi, b) in blobs.iter().enumerate() {
                if b.sign != tr.sign {
                    continue;
                }
                let d = geodesic(*tr.centroids.last().unwrap(), b.centroid);
                if d < radius * gap as f64 {
                    pairs.push((d, ti, bi));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut used_t = vec![false; tracks.len()];
        let mut used_b = vec![false; blobs.len()];
        for (_, ti, bi) in pairs {
            if used_t[ti] || used_b[bi] {
                continue;
            }
            used_t[ti] = true;
            used_b[bi] = true;
            tracks[ti].push(f, *t, &blobs[bi]);
        }
        for (bi, b) in blobs.iter().enumerate() {
            if !used_b[bi] {
                let mut tr = BlobTrack {
                    id: tracks.len(),
                    sign: b.sign,
                    frames: Vec::new(),
                    times: Vec::new(),
                    centroids: Vec::new(),
                    strengths: Vec::new(),
                    areas: Vec::new(),
                };
                tr.push(f, *t, b);
                tracks.push(tr);
            }
        }
    }
    tracks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisFit {
    pub axis: Vec3,
    /// RMS deviation of each point's polar angle from its track's mean, rad.
    pub residual: f64,
}

fn angle_residuals(axis: Vec3, tracks: &[Vec<Vec3>], out: &mut Vec<f64>) {
    out.clear();
    for tr in tracks {
        let start = out.len();
        for p in tr {
            out.push(geodesic(*p, axis));
        }
        let mean = out[start..].iter().sum::<f64>() / tr.len() as f64;
        for v in &mut out[start..] {
            *v -= mean;
        }
    }
}

/// Axis minimizing the spread of per-track polar angles. Point sets are the
/// track centroids; tracks with a single point carry no information.
pub fn fit_rotation_axis(tracks: &[Vec<Vec3>]) -> Result<AxisFit> {
    let tracks: Vec<Vec<Vec3>> = tracks.iter().filter(|t| t.len() >= 2).cloned().collect();
    if tracks.is_empty() {
        return Err(Error::DegenerateAxis);
    }
    // Initial guess: each track sweeps a circle in a plane normal to the axis,
    // so the axis is the direction of least per-track scatter.
    let mut scatter = Matrix3::<f64>::zeros();
    for tr in &tracks {
        let mut mean = Vector3::zeros();
        for p in tr {
            mean += Vector3::from(*p);
        }
        mean /= tr.len() as f64;
        for p in tr {
            let d = Vector3::from(*p) - mean;
            scatter += d * d.transpose();
        }
    }
    if scatter.trace() < 1e-24 {
        return Err(Error::DegenerateAxis);
    }
    let eig = SymmetricEigen::new(scatter);
    let imin = eig.eigenvalues.imin();
    let mut axis: Vec3 = eig.eigenvectors.column(imin).into_owned().into();

    // Gauss-Newton refinement in the tangent plane of the current axis.
    let mut r = Vec::new();
    let mut rp = Vec::new();
    let cost = |a: Vec3, buf: &mut Vec<f64>| {
        angle_residuals(a, &tracks, buf);
        buf.iter().map(|v| v * v).sum::<f64>()
    };
    let mut current = cost(axis, &mut r);
    for _ in 0..100 {
        let (u, v) = tangent_basis(axis);
        let step = 1e-7;
        let mut jac = [Vec::new(), Vec::new()];
        for (c, dir) in [u, v].iter().enumerate() {
            let moved = normalized([axis[0] + step * dir[0], axis[1] + step * dir[1], axis[2] + step * dir[2]]);
            angle_residuals(moved, &tracks, &mut rp);
            jac[c] = rp.iter().zip(&r).map(|(a, b)| (a - b) / step).collect();
        }
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..r.len() {
            a11 += jac[0][i] * jac[0][i];
            a12 += jac[0][i] * jac[1][i];
            a22 += jac[1][i] * jac[1][i];
            g1 += jac[0][i] * r[i];
            g2 += jac[1][i] * r[i];
        }
        let mut lambda = 1e-12 * (a11 + a22).max(1e-300);
        let mut improved = false;
        for _ in 0..30 {
            let det = (a11 + lambda) * (a22 + lambda) - a12 * a12;
            if det.abs() < 1e-300 {
                break;
            }
            let du = -((a22 + lambda) * g1 - a12 * g2) / det;
            let dv = -(-a12 * g1 + (a11 + lambda) * g2) / det;
            let cand = normalized([
                axis[0] + du * u[0] + dv * v[0],
                axis[1] + du * u[1] + dv * v[1],
                axis[2] + du * u[2] + dv * v[2],
            ]);
            let c = cost(cand, &mut rp);
            if c < current {
                let gain = current - c;
                axis = cand;
                current = c;
                improved = gain > 1e-15 * current.max(1e-300);
                break;
            }
            lambda = lambda.max(1e-12) * 10.0;
        }
        cost(axis, &mut r);
        if !improved {
            break;
        }
    }

    // Orient by the mean sense of rotation.
    let mut spin = [0.0; 3];
    for tr in &tracks {
        for w in tr.windows(2) {
            let c = [
                w[0][1] * w[1][2] - w[0][2] * w[1][1],
                w[0][2] * w[1][0] - w[0][0] * w[1][2],
                w[0][0] * w[1][1] - w[0][1] * w[1][0],
            ];
            for d in 0..3 {
                spin[d] += c[d];
            }
        }
    }
    if dot(spin, axis) < 0.0 {
        axis = [-axis[0], -axis[1], -axis[2]];
    }
    let count = r.len() as f64;
    Ok(AxisFit { axis, residual: (current / count).sqrt() })
}

fn tangent_basis(a: Vec3) -> (Vec3, Vec3) {
    let helper = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = normalized([
        helper[0] - dot(helper, a) * a[0],
        helper[1] - dot(helper, a) * a[1],
        helper[2] - dot(helper, a) * a[2],
    ]);
    let v = [a[1] * u[2] - a[2] * u[1], a[2] * u[0] - a[0] * u[2], a[0] * u[1] - a[1] * u[0]];
    (u, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlobClass {
    Two,
    Three,
    Four,
    Other(usize),
}

impl BlobClass {
    pub fn from_count(n: usize) -> Self {
        match n {
            2 => BlobClass::Two,
            3 => BlobClass::Three,
            4 => BlobClass::Four,
            k => BlobClass::Other(k),
        }
    }

    pub fn count(&self) -> usize {
        match self {
            BlobClass::Two => 2,
            BlobClass::Three => 3,
            BlobClass::Four => 4,
            BlobClass::Other(k) => *k,
        }
    }

    pub fn label(&self) -> String {
        match self {
            BlobClass::Other(k) => format!("other({k})"),
            c => c.count().to_string(),
        }
    }
}

/// Regime predicted from the momentum ratio.
pub fn predicted_class(gamma: f64) -> BlobClass {
    if gamma < 0.15 {
        BlobClass::Four
    } else if gamma < 0.4 {
        BlobClass::Three
    } else {
        BlobClass::Two
    }
}

/// Tracks present in every frame of `window` (inclusive frame indices)
/// whose mean |strength| there is at least `floor` times the largest.
pub fn persistent_tracks(tracks: &[BlobTrack], window: (usize, usize), floor: f64) -> Vec<&BlobTrack> {
    let (a, b) = window;
    let span = b - a + 1;
    let mut candidates: Vec<(&BlobTrack, f64)> = tracks
        .iter()
        .filter_map(|t| {
            let idx: Vec<usize> = (0..t.frames.len()).filter(|&i| t.frames[i] >= a && t.frames[i] <= b).collect();
            if idx.len() != span {
                return None;
            }
            let s = idx.iter().map(|&i| t.strengths[i].abs()).sum::<f64>() / span as f64;
            Some((t, s))
        })
        .collect();
    let top = candidates.iter().map(|c| c.1).fold(0.0, f64::max);
    candidates.retain(|c| c.1 >= floor * top);
    candidates.into_iter().map(|c| c.0).collect()
}

pub fn classify_final_state(tracks: &[BlobTrack], window: (usize, usize), floor: f64) -> BlobClass {
    BlobClass::from_count(persistent_tracks(tracks, window, floor).len())
}

/// `(ψ, ω)` pairs on the raster, subsampled by a fixed stride to at most
/// `max_points`.
pub fn scatter_pairs(omega: &FieldRaster, psi: &FieldRaster, max_points: usize) -> Vec<(f64, f64)> {
    let total = omega.values.len();
    let stride = total.div_ceil(max_points.max(1)).max(1);
    (0..total).step_by(stride).map(|i| (psi.values[i], omega.values[i])).collect()
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub threshold: f64,
    pub link_radius: f64,
    pub max_gap: usize,
    pub strength_floor: f64,
    pub window_fraction: f64,
    /// Frames before this physical time are ignored for tracking statistics.
    pub t_start: f64,
    pub write_rasters: bool,
    pub write_pgm: bool,
    pub raster_size: Option<(usize, usize)>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            threshold: DEFAULT_THRESHOLD,
            link_radius: DEFAULT_LINK_RADIUS,
            max_gap: 2,
            strength_floor: DEFAULT_STRENGTH_FLOOR,
            window_fraction: DEFAULT_WINDOW_FRACTION,
            t_start: 0.0,
            write_rasters: true,
            write_pgm: true,
            raster_size: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub frames: usize,
    pub tracks: usize,
    pub window: (usize, usize),
    pub persistent: usize,
    pub class: String,
    pub axis: Option<AxisFit>,
    pub gamma: Option<f64>,
    pub predicted_class: Option<String>,
}

/// Frames → rasters → blobs → tracks → axis and class for one run directory.
pub fn analyze_run(run_dir: &Path, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    let manifest = RunManifest::read(&run_dir.join(MANIFEST_FILE))?;
    let cfg = SimConfig::from_pairs(&manifest.config)?;
    let (np, nt) = opts.raster_size.unwrap_or_else(|| cfg.raster_size());
    let frames = list_frames(run_dir)?;
    if frames.is_empty() {
        return Err(Error::format(run_dir, "run has no frames"));
    }
    let basis = QuantBasis::new(cfg.n)?;
    let lap = LaplacianOperator::new(cfg.n)?;
    let forcing = crate::initial::coriolis_matrix(&basis, cfg.omega_rotation);
    let raster_dir = run_dir.join("rasters");
    if opts.write_rasters || opts.write_pgm {
        fs::create_dir_all(&raster_dir).map_err(|e| Error::io(&raster_dir, e))?;
    }

    let processed: Vec<(f64, FieldRaster, Vec<Blob>)> = frames
        .par_iter()
        .map(|path| {
            let f = MatrixFrame::read(path)?;
            f.w.check_dim(cfg.n)?;
            let c = matrix_to_coeffs(&f.w, &basis, cfg.n - 1)?;
            let mut r = synthesize_raster(&c, np, nt)?;
            r.t = f.step as f64 * manifest.seconds_per_step;
            let stem = format!("frame_{:010}", f.step);
            if opts.write_rasters {
                r.write(&raster_dir.join(format!("{stem}.zsr")))?;
            }
            if opts.write_pgm {
                r.write_pgm(&raster_dir.join(format!("{stem}.pgm")))?;
            }
            let blobs = detect_blobs(&r, opts.threshold)?;
            Ok((r.t, r, blobs))
        })
        .collect::<Result<_>>()?;
    let last_omega = processed.last().map(|p| p.1.clone());
    let per_frame: Vec<(f64, Vec<Blob>)> =
        processed.into_iter().filter(|p| p.0 >= opts.t_start).map(|(t, _, b)| (t, b)).collect();

    let tracks = link_tracks(&per_frame, opts.link_radius, opts.max_gap);
    write_tracks_csv(&run_dir.join("tracks.csv"), &tracks)?;

    let report_window = |len: usize| -> (usize, usize) {
        if len == 0 {
            return (0, 0);
        }
        let w = ((len as f64 * opts.window_fraction).ceil() as usize).max(MIN_WINDOW).min(len);
        (len - w, len - 1)
    };
    let window = report_window(per_frame.len());
    let persistent =
        if per_frame.is_empty() { Vec::new() } else { persistent_tracks(&tracks, window, opts.strength_floor) };
    let class = BlobClass::from_count(persistent.len());
    let axis_input: Vec<Vec<Vec3>> = persistent
        .iter()
        .map(|t| t.frames.iter().zip(&t.centroids).filter(|(f, _)| **f >= window.0).map(|(_, c)| *c).collect())
        .collect();
    let axis = fit_rotation_axis(&axis_input).ok();

    if let Some(omega) = last_omega {
        let w = MatrixFrame::read(frames.last().unwrap())?.w;
        let psi_c = stream_function(&w, &lap, &forcing, &basis)?;
        let mut psi = synthesize_raster(&psi_c, omega.n_phi, omega.n_theta)?;
        psi.t = omega.t;
        let pairs = scatter_pairs(&omega, &psi, MAX_SCATTER_POINTS);
        let mut s = String::from("psi,omega\n");
        for (p, o) in pairs {
            let _ = writeln!(s, "{},{}", fmt_f64(p), fmt_f64(o));
        }
        let p = run_dir.join("scatter.csv");
        fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
    }

    let gamma = crate::sim::read_diagnostics(&run_dir.join(crate::sim::DIAGNOSTICS_FILE)).ok().and_then(|(h, rows)| {
        let col = h.iter().position(|c| c == "gamma")?;
        rows.first().map(|r| r[col])
    });
    let report = AnalysisReport {
        frames: frames.len(),
        tracks: tracks.len(),
        window,
        persistent: persistent.len(),
        class: class.label(),
        axis,
        gamma,
        predicted_class: gamma.map(|g| predicted_class(g).label()),
    };
    let p = run_dir.join("analysis.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    Ok(report)
}

pub fn write_tracks_csv(path: &Path, tracks: &[BlobTrack]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::from("track_id,frame,t,x,y,z,sign,strength\n");
    for tr in tracks {
        for i in 0..tr.frames.len() {
            let c = tr.centroids[i];
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                tr.id,
                tr.frames[i],
                fmt_f64(tr.times[i]),
                fmt_f64(c[0]),
                fmt_f64(c[1]),
                fmt_f64(c[2]),
                tr.sign,
                fmt_f64(tr.strengths[i])
            );
        }
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Run directories below `dir` (those holding a manifest), sorted.
pub fn find_runs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(MANIFEST_FILE).exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).exists())
        .collect();
    out.sort();
    Ok(out)
}
