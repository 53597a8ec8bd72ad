//! Simulation runs: configuration, the precompute / step / output loop, and
//! on-disk artifacts (diagnostics CSV, matrix frames, checkpoints, manifest).
//!
//! States are stepped in physical units. With `c = ‖W0‖` the unit-norm
//! dimensionless step `h` becomes `h / c` and the inner tolerance `tol * c`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{coeffs_to_matrix, QuantBasis, SpectralCoeffs};
use crate::cmat::{CMatrix, VorticityMatrix};
use crate::error::{Error, Result};
use crate::initial::{
    coriolis_matrix, gaussian_blobs, normalize, sample_l2_random, zero_momentum_projection, BlobSpec,
    RandomFieldParams, RhWaveSpec, DEFAULT_BLOB_WIDTH, DEFAULT_EPS,
};
use crate::integrate::{diagnostics, time_scale, Diagnostics, Scheme, Stepper, StepperOptions};
use crate::laplacian::LaplacianOperator;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const EIGENVALUES_FILE: &str = "eigenvalues.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_DIR: &str = "frames";
pub const CHECKPOINTS_DIR: &str = "checkpoints";

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    RandomL2 {
        eps: f64,
    },
    RandomL2ZeroMomentum {
        eps: f64,
    },
    /// `None` selects the built-in four-blob configuration.
    GaussBlobs {
        file: Option<PathBuf>,
    },
    RhWave {
        c: f64,
        l: usize,
        amplitudes: Vec<(i64, Complex64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub h: f64,
    pub steps: u64,
    /// When set, overrides `steps` with the count reaching this physical time.
    pub t_end: Option<f64>,
    pub integrator: Scheme,
    pub tol: f64,
    pub max_iters: usize,
    pub omega_rotation: f64,
    pub ic: InitialCondition,
    pub seed: u64,
    pub d_every: u64,
    pub f_every: u64,
    pub c_every: u64,
    pub eig_every: u64,
    pub casimir_max: usize,
    pub out_dir: PathBuf,
    pub grid_phi: usize,
    pub grid_theta: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 33,
            h: 0.1,
            steps: 100,
            t_end: None,
            integrator: Scheme::IsoMp,
            tol: crate::integrate::DEFAULT_TOL,
            max_iters: crate::integrate::DEFAULT_MAX_ITERS,
            omega_rotation: 0.0,
            ic: InitialCondition::RandomL2ZeroMomentum { eps: DEFAULT_EPS },
            seed: 0,
            d_every: 1,
            f_every: 100,
            c_every: 1000,
            eig_every: 1000,
            casimir_max: 4,
            out_dir: PathBuf::from("run"),
            grid_phi: 0,
            grid_theta: 0,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1)))?;
        out.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
}

/// `m:re[:im]` entries separated by `;` or whitespace.
fn parse_amplitudes(v: &str) -> Result<Vec<(i64, Complex64)>> {
    let mut out = Vec::new();
    for item in v.split(|c: char| c == ';' || c.is_whitespace()).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(Error::Config(format!("rh_amplitudes entry '{item}' must be m:re or m:re:im")));
        }
        let m = parse_num::<i64>("rh_amplitudes", parts[0])?;
        let re = parse_num::<f64>("rh_amplitudes", parts[1])?;
        let im = if parts.len() == 3 { parse_num::<f64>("rh_amplitudes", parts[2])? } else { 0.0 };
        out.push((m, Complex64::new(re, im)));
    }
    Ok(out)
}

impl SimConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_pairs(&parse_key_values(&text)?)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = SimConfig::default();
        let mut ic_name = String::from("random_l2_zero_momentum");
        let mut eps = DEFAULT_EPS;
        let mut blob_file = None;
        let mut rh_c: Option<String> = None;
        let mut rh_l = 0usize;
        let mut rh_amp = Vec::new();
        for (k, v) in pairs {
            match k.as_str() {
                "n" => cfg.n = parse_num(k, v)?,
                "h" => cfg.h = parse_num(k, v)?,
                "steps" => cfg.steps = parse_num(k, v)?,
                "t_end" => cfg.t_end = Some(parse_num(k, v)?),
                "integrator" => cfg.integrator = v.parse()?,
                "tol" => cfg.tol = parse_num(k, v)?,
                "max_iters" => cfg.max_iters = parse_num(k, v)?,
                "omega_rotation" | "omega" => cfg.omega_rotation = parse_num(k, v)?,
                "ic" => ic_name = v.to_ascii_lowercase(),
                "eps" => eps = parse_num(k, v)?,
                "blob_file" => blob_file = Some(PathBuf::from(v)),
                "rh_c" => rh_c = Some(v.clone()),
                "rh_l" => rh_l = parse_num(k, v)?,
                "rh_amplitudes" => rh_amp = parse_amplitudes(v)?,
                "seed" => cfg.seed = parse_num(k, v)?,
                "d_every" => cfg.d_every = parse_num(k, v)?,
                "f_every" => cfg.f_every = parse_num(k, v)?,
                "c_every" => cfg.c_every = parse_num(k, v)?,
                "eig_every" => cfg.eig_every = parse_num(k, v)?,
                "casimir_max" => cfg.casimir_max = parse_num(k, v)?,
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                "grid_phi" => cfg.grid_phi = parse_num(k, v)?,
                "grid_theta" => cfg.grid_theta = parse_num(k, v)?,
                other => return Err(Error::Config(format!("unknown config key '{other}'"))),
            }
        }
        cfg.ic = match ic_name.as_str() {
            "random_l2" => InitialCondition::RandomL2 { eps },
            "random_l2_zero_momentum" => InitialCondition::RandomL2ZeroMomentum { eps },
            "gauss_blobs" => InitialCondition::GaussBlobs { file: blob_file },
            "rh_wave" => {
                let c = match rh_c.as_deref() {
                    None => return Err(Error::Config("rh_wave needs rh_c".into())),
                    Some("stationary") => {
                        if rh_l < 2 {
                            return Err(Error::Config("stationary rh_c needs rh_l >= 2".into()));
                        }
                        RhWaveSpec::stationary_c(rh_l)
                    }
                    Some(s) => parse_num("rh_c", s)?,
                };
                InitialCondition::RhWave { c, l: rh_l, amplitudes: rh_amp }
            }
            other => return Err(Error::Config(format!("unknown ic '{other}'"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::Config(format!("h must be positive, got {}", self.h)));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::Config("tol and max_iters must be positive".into()));
        }
        if self.casimir_max < 2 {
            return Err(Error::Config("casimir_max must be at least 2".into()));
        }
        if let Some(t) = self.t_end {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("t_end must be non-negative, got {t}")));
            }
        }
        match &self.ic {
            InitialCondition::RandomL2 { eps } | InitialCondition::RandomL2ZeroMomentum { eps } if !(*eps > 0.0) => {
                Err(Error::Config(format!("eps must be positive, got {eps}")))
            }
            InitialCondition::RhWave { l, .. } if *l == 0 || *l >= self.n => {
                Err(Error::Config(format!("rh_l must lie in 1..={}", self.n - 1)))
            }
            _ => Ok(()),
        }
    }

    /// Raster size used by the analysis stage; resolves zero to defaults.
    pub fn raster_size(&self) -> (usize, usize) {
        let nt = if self.grid_theta == 0 { (2 * self.n).max(64) } else { self.grid_theta };
        let np = if self.grid_phi == 0 { 2 * nt } else { self.grid_phi };
        (np, nt)
    }

    /// Canonical `key = value` snapshot, sufficient to rebuild the config.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("n", self.n.to_string());
        put("h", fmt_f64(self.h));
        put("steps", self.steps.to_string());
        if let Some(t) = self.t_end {
            put("t_end", fmt_f64(t));
        }
        put("integrator", self.integrator.to_string());
        put("tol", fmt_f64(self.tol));
        put("max_iters", self.max_iters.to_string());
        put("omega_rotation", fmt_f64(self.omega_rotation));
        put("seed", self.seed.to_string());
        put("d_every", self.d_every.to_string());
        put("f_every", self.f_every.to_string());
        put("c_every", self.c_every.to_string());
        put("eig_every", self.eig_every.to_string());
        put("casimir_max", self.casimir_max.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("grid_phi", self.grid_phi.to_string());
        put("grid_theta", self.grid_theta.to_string());
        match &self.ic {
            InitialCondition::RandomL2 { eps } => {
                put("ic", "random_l2".into());
                put("eps", fmt_f64(*eps));
            }
            InitialCondition::RandomL2ZeroMomentum { eps } => {
                put("ic", "random_l2_zero_momentum".into());
                put("eps", fmt_f64(*eps));
            }
            InitialCondition::GaussBlobs { file } => {
                put("ic", "gauss_blobs".into());
                if let Some(f) = file {
                    put("blob_file", f.display().to_string());
                }
            }
            InitialCondition::RhWave { c, l, amplitudes } => {
                put("ic", "rh_wave".into());
                put("rh_c", fmt_f64(*c));
                put("rh_l", l.to_string());
                let amps: Vec<String> =
                    amplitudes.iter().map(|(m, v)| format!("{m}:{}:{}", fmt_f64(v.re), fmt_f64(v.im))).collect();
                put("rh_amplitudes", amps.join(";"));
            }
        }
        m
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Round-trip exact decimal.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads a blob file: optional `width = a` line, optional `phi,theta,gamma`
/// header, then one `phi,theta,gamma` row per blob.
pub fn read_blob_file(path: &Path) -> Result<BlobSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut width = DEFAULT_BLOB_WIDTH;
    let (mut phi, mut theta, mut gamma) = (Vec::new(), Vec::new(), Vec::new());
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("width") {
            let v = lower.trim_start_matches("width").trim_start_matches([' ', '=', ',', ':']).trim();
            width = v.parse().map_err(|_| Error::format(path, format!("bad width line '{line}'")))?;
            continue;
        }
        if lower.starts_with("phi") {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, format!("bad blob row '{line}'")))?;
        if vals.len() != 3 {
            return Err(Error::format(path, format!("blob row needs phi,theta,gamma: '{line}'")));
        }
        phi.push(vals[0]);
        theta.push(vals[1]);
        gamma.push(vals[2]);
    }
    if phi.is_empty() {
        return Err(Error::format(path, "no blobs listed"));
    }
    BlobSpec::from_angles(&phi, &theta, &gamma, width)
}

/// Initial coefficients for a config. Random fields come out with unit norm.
pub fn initial_coeffs(cfg: &SimConfig) -> Result<SpectralCoeffs> {
    let l_max = cfg.n - 1;
    match &cfg.ic {
        InitialCondition::RandomL2 { eps } => {
            let mut c = sample_l2_random(&RandomFieldParams { seed: cfg.seed, eps: *eps, l_max })?;
            normalize(&mut c)?;
            Ok(c)
        }
        InitialCondition::RandomL2ZeroMomentum { eps } => {
            let c = sample_l2_random(&RandomFieldParams { seed: cfg.seed, eps: *eps, l_max })?;
            let mut c = zero_momentum_projection(&c);
            normalize(&mut c)?;
            Ok(c)
        }
        InitialCondition::GaussBlobs { file } => {
            let spec = match file {
                Some(p) => read_blob_file(p)?,
                None => BlobSpec::four_blob_reference(),
            };
            gaussian_blobs(&spec, cfg.n)
        }
        InitialCondition::RhWave { c, l, amplitudes } => {
            RhWaveSpec { c: *c, l: *l, amplitudes: amplitudes.clone(), omega: cfg.omega_rotation }.coeffs(l_max)
        }
    }
}

/// A matrix on disk: `ZSW1`, `u32 N`, `u64 step`, `f64 h`, then `N²`
/// row-major `(re, im)` float64 pairs, all little-endian.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFrame {
    pub step: u64,
    pub h: f64,
    pub w: CMatrix,
}

impl MatrixFrame {
    pub fn write(&self, path: &Path) -> Result<()> {
        let n = self.w.n();
        let mut buf = Vec::with_capacity(24 + 16 * n * n);
        buf.extend_from_slice(b"ZSW1");
        buf.extend_from_slice(&(n as u32).to_le_bytes());
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&self.h.to_le_bytes());
        for z in self.w.as_slice() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        write_atomic(path, &buf)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 24 || &bytes[..4] != b"ZSW1" {
            return Err(Error::format(path, "missing ZSW1 header"));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let step = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let h = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        if bytes.len() != 24 + 16 * n * n {
            return Err(Error::format(path, format!("size does not match N = {n}")));
        }
        let data = bytes[24..]
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Ok(MatrixFrame { step, h, w: CMatrix::from_vec(n, data)? })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn frame_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(FRAMES_DIR).join(format!("frame_{step:010}.zsw"))
}

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(CHECKPOINTS_DIR).join(format!("checkpoint_{step:010}.zsw"))
}

/// Frame files of a run directory, ordered by step.
pub fn list_frames(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = out_dir.join(FRAMES_DIR);
    let mut v: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "zsw"))
        .collect();
    v.sort();
    Ok(v)
}

pub fn diagnostics_header(casimir_max: usize) -> String {
    let mut s = String::from("step,t,H");
    for k in 2..=casimir_max {
        let _ = write!(s, ",C{k}");
    }
    s.push_str(",Lx,Ly,Lz,gamma");
    s
}

pub fn diagnostics_row(step: u64, d: &Diagnostics) -> String {
    let mut s = format!("{step},{},{}", fmt_f64(d.t), fmt_f64(d.energy));
    for c in &d.casimirs {
        let _ = write!(s, ",{}", fmt_f64(*c));
    }
    for l in d.momentum {
        let _ = write!(s, ",{}", fmt_f64(l));
    }
    let _ = write!(s, ",{}", fmt_f64(d.gamma));
    s
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
    pub seconds_per_step: f64,
    pub initial_norm: f64,
    pub steps_completed: u64,
    pub status: String,
    pub files: Vec<FileRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Checks every recorded checksum against the files on disk.
    pub fn verify(&self, out_dir: &Path) -> Result<()> {
        for f in &self.files {
            let p = out_dir.join(&f.path);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(Error::format(&p, "checksum mismatch"));
            }
        }
        Ok(())
    }
}

fn collect_files(out_dir: &Path) -> Result<Vec<FileRecord>> {
    let mut stack = vec![out_dir.to_path_buf()];
    let mut files = Vec::new();
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let p = entry.map_err(|e| Error::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
                let rel = p.strip_prefix(out_dir).unwrap_or(&p).to_string_lossy().replace('\\', "/");
                files.push(FileRecord { path: rel, bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
            }
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(files)
}

/// Precomputed operators for one matrix size.
#[derive(Debug, Clone)]
pub struct Operators {
    pub basis: Arc<QuantBasis>,
    pub lap: Arc<LaplacianOperator>,
}

impl Operators {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Operators { basis: Arc::new(QuantBasis::new(n)?), lap: Arc::new(LaplacianOperator::new(n)?) })
    }
}

/// Fully set-up run before any stepping.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ops: Operators,
    pub w0: VorticityMatrix,
    pub forcing: VorticityMatrix,
    pub norm: f64,
    pub seconds_per_step: f64,
    pub steps: u64,
}

pub fn prepare(cfg: &SimConfig, ops: Option<Operators>) -> Result<Prepared> {
    cfg.validate()?;
    let ops = match ops {
        Some(o) if o.basis.n() == cfg.n => o,
        _ => Operators::new(cfg.n)?,
    };
    let coeffs = initial_coeffs(cfg)?;
    let w0 = coeffs_to_matrix(&coeffs, &ops.basis)?;
    let norm = w0.norm();
    let seconds_per_step = time_scale(cfg.n, cfg.h, norm)?;
    let forcing = coriolis_matrix(&ops.basis, cfg.omega_rotation);
    let steps = match cfg.t_end {
        Some(t) => (t / seconds_per_step).ceil() as u64,
        None => cfg.steps,
    };
    Ok(Prepared { ops, w0, forcing, norm, seconds_per_step, steps })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub steps: u64,
    pub seconds_per_step: f64,
    pub initial: Diagnostics,
    pub last: Diagnostics,
    pub max_gamma_deviation: f64,
}

/// Runs a simulation to completion, writing all artifacts to `cfg.out_dir`.
/// With `resume`, continues from that checkpoint; rows after the checkpoint
/// step are discarded from the existing diagnostics first.
pub fn run(cfg: &SimConfig, resume: Option<&Path>, ops: Option<Operators>) -> Result<RunSummary> {
    let prep = prepare(cfg, ops)?;
    let out = cfg.out_dir.clone();
    for d in [out.clone(), out.join(FRAMES_DIR), out.join(CHECKPOINTS_DIR)] {
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let n = cfg.n;
    let Prepared { ops, w0, forcing, norm, seconds_per_step, steps } = prep;
    let mut opts = StepperOptions::new(cfg.integrator, cfg.h / norm);
    opts.tol = cfg.tol * norm;
    opts.max_iters = cfg.max_iters;
    let mut stepper = Stepper::new(ops.lap.clone(), forcing.clone(), opts)?;

    let diag_at = |w: &CMatrix, step: u64| {
        diagnostics(w, &ops.lap, &ops.basis, &forcing, cfg.casimir_max, step as f64 * seconds_per_step)
    };
    let initial = diag_at(&w0, 0)?;

    let diag_path = out.join(DIAGNOSTICS_FILE);
    let eig_path = out.join(EIGENVALUES_FILE);
    let (mut w, start) = match resume {
        Some(p) => {
            let f = MatrixFrame::read(p)?;
            f.w.check_dim(n)?;
            if f.h.to_bits() != cfg.h.to_bits() {
                return Err(Error::Config(format!("checkpoint h = {} differs from config h = {}", f.h, cfg.h)));
            }
            truncate_rows(&diag_path, f.step)?;
            truncate_rows(&eig_path, f.step)?;
            (f.w, f.step)
        }
        None => (w0.clone(), 0),
    };
    let mut diag_file = open_append(&diag_path, resume.is_none(), &diagnostics_header(cfg.casimir_max))?;
    let eig_header = {
        let mut s = String::from("step,t");
        for i in 0..n {
            let _ = write!(s, ",lambda{i}");
        }
        s
    };
    let mut eig_file =
        if cfg.eig_every > 0 { Some(open_append(&eig_path, resume.is_none(), &eig_header)?) } else { None };

    let emit_eig = |f: &mut fs::File, w: &CMatrix, step: u64| -> Result<()> {
        let mut s = format!("{step},{}", fmt_f64(step as f64 * seconds_per_step));
        for l in w.skew_spectrum() {
            let _ = write!(s, ",{}", fmt_f64(l));
        }
        writeln!(f, "{s}").map_err(|e| Error::io(&eig_path, e))
    };

    let mut last = diag_at(&w, start)?;
    let mut max_dev = (last.gamma - initial.gamma).abs();
    if resume.is_none() {
        writeln!(diag_file, "{}", diagnostics_row(0, &initial)).map_err(|e| Error::io(&diag_path, e))?;
        if let Some(f) = eig_file.as_mut() {
            emit_eig(f, &w, 0)?;
        }
        MatrixFrame { step: 0, h: cfg.h, w: w.clone() }.write(&frame_path(&out, 0))?;
    }

    let mut status = String::from("ok");
    let mut result = Ok(());
    let mut step = start;
    while step < steps {
        if let Err(e) = stepper.step(&mut w) {
            status = format!("failed at step {}: {e}", step + 1);
            MatrixFrame { step, h: cfg.h, w: w.clone() }.write(&checkpoint_path(&out, step))?;
            result = Err(e);
            break;
        }
        step += 1;
        let is_last = step == steps;
        if (cfg.d_every > 0 && step % cfg.d_every == 0) || is_last {
            last = diag_at(&w, step)?;
            max_dev = max_dev.max((last.gamma - initial.gamma).abs());
            writeln!(diag_file, "{}", diagnostics_row(step, &last)).map_err(|e| Error::io(&diag_path, e))?;
        }
        if let Some(f) = eig_file.as_mut() {
            if step % cfg.eig_every == 0 || is_last {
                emit_eig(f, &w, step)?;
            }
        }
        if (cfg.f_every > 0 && step % cfg.f_every == 0) || is_last {
            MatrixFrame { step, h: cfg.h, w: w.clone() }.write(&frame_path(&out, step))?;
        }
        if (cfg.c_every > 0 && step % cfg.c_every == 0) || is_last {
            MatrixFrame { step, h: cfg.h, w: w.clone() }.write(&checkpoint_path(&out, step))?;
        }
    }
    diag_file.flush().map_err(|e| Error::io(&diag_path, e))?;
    drop(diag_file);
    drop(eig_file);

    let manifest = RunManifest {
        config: cfg.to_pairs(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seconds_per_step,
        initial_norm: norm,
        steps_completed: step,
        status,
        files: collect_files(&out)?,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&out.join(MANIFEST_FILE), json.as_bytes())?;
    result?;
    Ok(RunSummary { out_dir: out, steps: step, seconds_per_step, initial, last, max_gamma_deviation: max_dev })
}

fn open_append(path: &Path, fresh: bool, header: &str) -> Result<fs::File> {
    if fresh || !path.exists() {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{header}").map_err(|e| Error::io(path, e))?;
        Ok(f)
    } else {
        fs::OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))
    }
}

/// Drops data rows whose leading step exceeds `step`.
fn truncate_rows(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let keep = i == 0 || line.split(',').next().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s <= step);
        if keep {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    write_atomic(path, kept.as_bytes())
}

/// Reads the numeric columns of a diagnostics CSV.
pub fn read_diagnostics(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> =
        lines.next().ok_or_else(|| Error::format(path, "empty file"))?.split(',').map(String::from).collect();
    let mut rows = Vec::new();
    for line in lines {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, format!("bad row '{line}'")))?;
        rows.push(row);
    }
    Ok((header, rows))
}
