use std::fs;
use std::path::Path;
use std::process::Command;

use zeitlin::analysis::FieldRaster;
use zeitlin::cli::{run, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};
use zeitlin::sim::{list_frames, MatrixFrame, RunManifest, MANIFEST_FILE};
use zeitlin::QuantBasis;

fn zeitlin(args: &[&str]) -> i32 {
    let mut v = vec!["zeitlin"];
    v.extend_from_slice(args);
    run(v)
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn minimal_heun_run_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 15\nsteps = 100\nintegrator = heun\nf_every = 50\n");
    let out = dir.path().join("out");
    assert_eq!(zeitlin(&["simulate", "--config", &cfg, "--out-dir", &s(&out)]), EXIT_OK);
    let text = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,t,H,C2,C3,C4,Lx,Ly,Lz,gamma");
    assert_eq!(lines.count(), 101);
    let m = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    m.verify(&out).unwrap();
    assert_eq!(m.steps_completed, 100);
    assert_eq!(list_frames(&out).unwrap().len(), 3);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let body = "n = 12\nintegrator = heun\nseed = 4\nc_every = 20\nf_every = 0\n";
    let full = dir.path().join("full");
    let cfg = write_config(dir.path(), &format!("{body}steps = 60\n"));
    assert_eq!(zeitlin(&["simulate", "--config", &cfg, "--out-dir", &s(&full)]), EXIT_OK);

    let split = dir.path().join("split");
    let cfg = write_config(dir.path(), &format!("{body}steps = 40\n"));
    assert_eq!(zeitlin(&["simulate", "--config", &cfg, "--out-dir", &s(&split)]), EXIT_OK);
    let cfg = write_config(dir.path(), &format!("{body}steps = 60\n"));
    let ck = split.join("checkpoints").join("checkpoint_0000000020.zsw");
    assert_eq!(zeitlin(&["simulate", "--config", &cfg, "--out-dir", &s(&split), "--resume", &s(&ck)]), EXIT_OK);

    assert_eq!(fs::read(full.join("diagnostics.csv")).unwrap(), fs::read(split.join("diagnostics.csv")).unwrap());
    let last = |d: &Path| MatrixFrame::read(&d.join("checkpoints").join("checkpoint_0000000060.zsw")).unwrap();
    assert_eq!(last(&full), last(&split));
}

#[test]
fn stationary_wave_run_keeps_its_frame() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n = 17\nsteps = 50\nintegrator = heun\nic = rh_wave\nrh_c = stationary\nrh_l = 5\n\
         rh_amplitudes = 4:7.73\nomega_rotation = 6.47435\nf_every = 50\n",
    );
    let out = dir.path().join("rh");
    assert_eq!(zeitlin(&["simulate", "--config", &cfg, "--out-dir", &s(&out)]), EXIT_OK);
    let frames = list_frames(&out).unwrap();
    let (a, b) = (MatrixFrame::read(&frames[0]).unwrap(), MatrixFrame::read(frames.last().unwrap()).unwrap());
    assert_eq!(b.step, 50);
    assert!(a.w.sub(&b.w).norm() <= 1e-8);
}

#[test]
fn failed_solve_exits_numerical_and_keeps_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 9\nsteps = 5\nintegrator = isomp\nmax_iters = 1\ntol = 1e-16\n");
    let out = dir.path().join("bad");
    assert_eq!(zeitlin(&["simulate", "--config", &cfg, "--out-dir", &s(&out)]), EXIT_NUMERICAL);
    assert!(out.join("checkpoints").join("checkpoint_0000000000.zsw").exists());
    let m = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    assert!(m.status.starts_with("failed"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(zeitlin(&["simulate", "--config", &s(&dir.path().join("missing.cfg"))]), EXIT_USAGE);
    let cfg = write_config(dir.path(), "n = 9\nwibble = 3\n");
    assert_eq!(zeitlin(&["simulate", "--config", &cfg]), EXIT_USAGE);
    assert_eq!(zeitlin(&["analyze", &s(&dir.path().join("nothing"))]), EXIT_USAGE);
    assert_eq!(zeitlin(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(zeitlin(&["pv", "--data", &s(&dir.path().join("none.csv"))]), EXIT_USAGE);
}

#[test]
fn analyze_zero_step_run_gives_initial_raster_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 9\nsteps = 0\nic = gauss_blobs\ngrid_theta = 24\n");
    let out = dir.path().join("zero");
    assert_eq!(zeitlin(&["simulate", "--config", &cfg, "--out-dir", &s(&out)]), EXIT_OK);
    assert_eq!(zeitlin(&["analyze", &s(&out)]), EXIT_OK);
    let rasters: Vec<_> = fs::read_dir(out.join("rasters")).unwrap().map(|e| e.unwrap().path()).collect();
    let zsr: Vec<_> = rasters.iter().filter(|p| p.extension().unwrap() == "zsr").collect();
    assert_eq!(zsr.len(), 1);
    let r = FieldRaster::read(zsr[0]).unwrap();
    assert_eq!((r.n_phi, r.n_theta, r.t), (48, 24, 0.0));
    assert!(out.join("tracks.csv").exists() && out.join("scatter.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(report["frames"], 1);
}

#[test]
fn sweep_then_classify_gives_regime_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 9\nsteps = 20\nf_every = 5\nic = random_l2\ngrid_theta = 16\n");
    let out = dir.path().join("sweep");
    assert_eq!(
        zeitlin(&["sweep", "--count", "3", "--jobs", "2", "--seed", "10", "--config", &cfg, "--out-dir", &s(&out)]),
        EXIT_OK
    );
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let seeds: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(seeds, ["10", "11", "12"]);
    assert_eq!(zeitlin(&["analyze", "--classify", &s(&out)]), EXIT_OK);
    let regimes = fs::read_to_string(out.join("regimes.csv")).unwrap();
    assert_eq!(regimes.lines().next().unwrap(), "run,gamma,predicted,class");
    assert_eq!(regimes.lines().count(), 4);
    assert!(!out.join("seed_000010").join("rasters").join("frame_0000000000.zsr").exists());
}

#[test]
fn sweep_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 9\nsteps = 30\nintegrator = heun\nic = random_l2\n");
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        assert_eq!(zeitlin(&["sweep", "--count", "2", "--config", &cfg, "--out-dir", &s(&out)]), EXIT_OK);
    }
    for seed in ["seed_000000", "seed_000001"] {
        let read = |n: &str| fs::read(dir.path().join(n).join(seed).join("diagnostics.csv")).unwrap();
        assert_eq!(read("a"), read("b"));
    }
}

#[test]
fn pv_recovers_strengths_when_column_missing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pv.csv");
    fs::write(&data, "phi,theta\n2.3218,1.3017\n-0.9638,1.8837\n-2.5283,1.577\n0.8511,1.5896\n").unwrap();
    let out = dir.path().join("pv");
    let code =
        zeitlin(&["pv", "--data", &s(&data), "--h", "0.05", "--steps", "400", "--every", "100", "--out-dir", &s(&out)]);
    assert_eq!(code, EXIT_OK);
    let g: Vec<f64> = fs::read_to_string(out.join("strengths.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    for (a, b) in g.iter().zip([1.0, 0.9002, -0.5436, -0.4178]) {
        assert!((a - b).abs() < 1e-3);
    }
    let inv = fs::read_to_string(out.join("invariants.csv")).unwrap();
    assert_eq!(inv.lines().next().unwrap(), "t,H,Lx,Ly,Lz");
    assert_eq!(inv.lines().count(), 6);
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 5 * 4);
}

#[test]
fn basis_cache_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(zeitlin(&["basis-cache", "--n", "7", "--out-dir", &s(dir.path())]), EXIT_OK);
    let loaded = QuantBasis::load(&dir.path().join("basis_n7.zsb")).unwrap();
    let fresh = QuantBasis::new(7).unwrap();
    assert_eq!(loaded.dense(4, -3), fresh.dense(4, -3));
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_zeitlin");
    let ok = Command::new(exe).arg("--help").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("simulate"));
    let bad = Command::new(exe).args(["simulate", "--config", "/nonexistent/cfg"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
