//! Command-line front end. `run` returns the process exit code.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{analyze_run, find_runs, predicted_class, AnalysisReport, AnalyzeOptions};
use crate::basis::QuantBasis;
use crate::error::{Error, Result};
use crate::point_vortex::{
    four_vortex_reference, pv_invariants, pv_step, strengths_from_positions, PointVortexState, Vec3,
};
use crate::sim::{fmt_f64, run as run_simulation, Operators, SimConfig};
use crate::sphere::unit_vector;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "zeitlin", version, about = "Quantized Euler flow on the sphere")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Concurrent runs for sweeps and frames for analysis.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Random seed; for sweeps, the first of consecutive seeds
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Checkpoint file to continue from.
    #[arg(long, global = true)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation.
    Simulate,
    /// Run seeded simulations and tabulate γ against the final blob count.
    Sweep {
        #[arg(long, default_value_t = 16)]
        count: usize,
    },
    /// Integrate point vortices.
    Pv {
        /// CSV with `phi,theta` and optionally `gamma` columns.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Step size
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        #[arg(long, default_value_t = 10_000)]
        steps: u64,
        /// Output cadence in steps.
        #[arg(long, default_value_t = 10)]
        every: u64,
    },
    /// Rasters, tracks, axis fit and classification for run directories.
    Analyze {
        dir: PathBuf,
        /// Classification table only; no raster files.
        #[arg(long)]
        classify: bool,
        #[arg(long, default_value_t = crate::analysis::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = crate::analysis::DEFAULT_LINK_RADIUS)]
        link_radius: f64,
        /// Ignore frames before this physical time when tracking.
        #[arg(long, default_value_t = 0.0)]
        t_start: f64,
    },
    /// Precompute and store the basis for one N.
    BasisCache {
        /// Matrix size
        #[arg(long)]
        n: usize,
    },
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(g: &GlobalArgs) -> Result<SimConfig> {
    let mut cfg = match &g.config {
        Some(p) => SimConfig::from_file(p)?,
        None => SimConfig::default(),
    };
    if let Some(d) = &g.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

pub fn execute(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(g)?;
            let s = run_simulation(&cfg, g.resume.as_deref(), None)?;
            println!(
                "{} steps, {:.6e} s/step, H {} -> {}, gamma {} (max deviation {:.3e})",
                s.steps,
                s.seconds_per_step,
                fmt_f64(s.initial.energy),
                fmt_f64(s.last.energy),
                fmt_f64(s.initial.gamma),
                s.max_gamma_deviation
            );
            Ok(())
        }
        Command::Sweep { count } => {
            let cfg = load_config(g)?;
            let table = sweep(&cfg, *count, g.jobs)?;
            print!("{table}");
            Ok(())
        }
        Command::Pv { data, h, steps, every } => {
            let out = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("pv"));
            let state = match data {
                Some(p) => read_pv_data(p)?,
                None => four_vortex_reference(),
            };
            let (h0, hn) = pv_simulate(state, *h, *steps, *every, &out)?;
            println!("H drift {:.3e}, |L| drift {:.3e}", (hn.0 - h0.0).abs(), norm3(sub3(hn.1, h0.1)));
            Ok(())
        }
        Command::Analyze { dir, classify, threshold, link_radius, t_start } => {
            if !dir.exists() {
                return Err(Error::io(dir, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
            let runs = find_runs(dir)?;
            if runs.is_empty() {
                return Err(Error::Config(format!("{} holds no runs", dir.display())));
            }
            let opts = AnalyzeOptions {
                threshold: *threshold,
                link_radius: *link_radius,
                t_start: *t_start,
                write_rasters: !classify,
                write_pgm: !classify,
                ..AnalyzeOptions::default()
            };
            let reports =
                pool(g.jobs)?.install(|| runs.iter().map(|r| analyze_run(r, &opts)).collect::<Result<Vec<_>>>())?;
            if *classify {
                let table = regime_table(&runs, &reports);
                let p = dir.join("regimes.csv");
                fs::write(&p, &table).map_err(|e| Error::io(&p, e))?;
                print!("{table}");
            } else {
                for (r, rep) in runs.iter().zip(&reports) {
                    println!("{}: {}", r.display(), serde_json::to_string(rep).expect("report serializes"));
                }
            }
            Ok(())
        }
        Command::BasisCache { n } => {
            let out = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let basis = QuantBasis::new(*n)?;
            let p = out.join(format!("basis_n{n}.zsb"));
            basis.save(&p)?;
            println!("{}", p.display());
            Ok(())
        }
    }
}

fn regime_table(runs: &[PathBuf], reports: &[AnalysisReport]) -> String {
    let mut s = String::from("run,gamma,predicted,class\n");
    for (r, rep) in runs.iter().zip(reports) {
        let name = r.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let g = rep.gamma.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(s, "{name},{g},{},{}", rep.predicted_class.clone().unwrap_or_default(), rep.class);
    }
    s
}

/// Runs `count` simulations with seeds `cfg.seed + i`, each in its own
/// subdirectory of `cfg.out_dir`, and writes `sweep.csv` there. Failed runs
/// are recorded in the table rather than aborting the sweep.
pub fn sweep(cfg: &SimConfig, count: usize, jobs: Option<usize>) -> Result<String> {
    if count == 0 {
        return Err(Error::InvalidArgument("sweep count must be at least 1".into()));
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let ops = Operators::new(cfg.n)?;
    let opts = AnalyzeOptions { write_rasters: false, write_pgm: false, ..AnalyzeOptions::default() };
    let rows: Vec<String> = pool(jobs)?.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|i| {
                let mut c = cfg.clone();
                c.seed = cfg.seed + i;
                c.out_dir = cfg.out_dir.join(format!("seed_{:06}", c.seed));
                let ops = ops.clone();
                match run_simulation(&c, None, Some(ops)) {
                    Ok(s) => {
                        let (class, status) = match analyze_run(&c.out_dir, &opts) {
                            Ok(r) => (r.class, "ok".to_string()),
                            Err(e) => (String::new(), format!("analysis failed: {e}")),
                        };
                        format!(
                            "{},{},{},{},{},{}",
                            c.seed,
                            fmt_f64(s.initial.gamma),
                            fmt_f64(s.max_gamma_deviation),
                            predicted_class(s.initial.gamma).label(),
                            class,
                            status.replace(',', ";")
                        )
                    }
                    Err(e) => format!("{},,,,,failed: {}", c.seed, e.to_string().replace(',', ";")),
                }
            })
            .collect()
    });
    let mut table = String::from("seed,gamma,gamma_drift,predicted,class,status\n");
    for r in rows {
        table.push_str(&r);
        table.push('\n');
    }
    let p = cfg.out_dir.join("sweep.csv");
    fs::write(&p, &table).map_err(|e| Error::io(&p, e))?;
    Ok(table)
}

/// Reads `phi,theta[,gamma]` rows. Without a gamma column the strengths are
/// those making the configuration a relative equilibrium, scaled so the first
/// is one.
pub fn read_pv_data(path: &Path) -> Result<PointVortexState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))?
        .split(',')
        .map(|s| s.trim().to_ascii_lowercase())
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (ip, it) = match (col("phi"), col("theta")) {
        (Some(p), Some(t)) => (p, t),
        _ => return Err(Error::format(path, "header needs phi and theta columns")),
    };
    let ig = col("gamma");
    let (mut x, mut gamma) = (Vec::new(), Vec::new());
    for line in lines {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("bad number in '{line}': {e}")))?;
        if v.len() != header.len() {
            return Err(Error::format(path, format!("row '{line}' has {} fields", v.len())));
        }
        x.push(unit_vector(v[it], v[ip]));
        if let Some(i) = ig {
            gamma.push(v[i]);
        }
    }
    if ig.is_none() {
        gamma = strengths_from_positions(&x)?;
    }
    PointVortexState::new(x, gamma)
}

fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Integrates and writes `trajectory.csv` (t,vortex,x,y,z) and
/// `invariants.csv` (t,H,Lx,Ly,Lz) every `every` steps. Returns the initial
/// and final invariants.
pub fn pv_simulate(
    mut s: PointVortexState,
    h: f64,
    steps: u64,
    every: u64,
    out: &Path,
) -> Result<((f64, Vec3), (f64, Vec3))> {
    if !(h > 0.0) || every == 0 {
        return Err(Error::InvalidArgument("pv needs h > 0 and every >= 1".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut traj = String::from("t,vortex,x,y,z\n");
    let mut inv = String::from("t,H,Lx,Ly,Lz\n");
    let emit = |s: &PointVortexState, t: f64, traj: &mut String, inv: &mut String| -> Result<(f64, Vec3)> {
        for (i, p) in s.x.iter().enumerate() {
            let _ = writeln!(traj, "{},{i},{},{},{}", fmt_f64(t), fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]));
        }
        let (hh, l) = pv_invariants(s)?;
        let _ = writeln!(inv, "{},{},{},{},{}", fmt_f64(t), fmt_f64(hh), fmt_f64(l[0]), fmt_f64(l[1]), fmt_f64(l[2]));
        Ok((hh, l))
    };
    let first = emit(&s, 0.0, &mut traj, &mut inv)?;
    let mut last = first;
    for k in 1..=steps {
        s = pv_step(&s, h)?;
        if k % every == 0 || k == steps {
            last = emit(&s, k as f64 * h, &mut traj, &mut inv)?;
        }
    }
    let mut g = String::from("vortex,gamma\n");
    for (i, v) in s.gamma.iter().enumerate() {
        let _ = writeln!(g, "{i},{}", fmt_f64(*v));
    }
    for (name, body) in [("trajectory.csv", traj), ("invariants.csv", inv), ("strengths.csv", g)] {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok((first, last))
}
