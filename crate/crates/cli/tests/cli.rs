//! End-to-end runs of the `modebank` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modebank::eskf::update;
use modebank::models::{MotionModel, VaryingGaitParams};
use modebank::pipeline::{initial_belief, InitialUncertainty};
use modebank::strapdown::NoiseConfig;
use modebank_cli::io;
use tempfile::TempDir;

fn modebank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modebank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = modebank(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    modebank(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["simulate", "--out-dir", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.to_path_buf()
}

#[test]
fn simulate_is_deterministic_with_seed_zero_by_default() {
    let tmp = TempDir::new().unwrap();
    let a = simulate(&tmp.path().join("a"), &["--profile", "walk", "--duration", "8", "--seed", "0"]);
    let b = simulate(&tmp.path().join("b"), &["--profile", "walk", "--duration", "8"]);
    let c = simulate(&tmp.path().join("c"), &["--profile", "walk", "--duration", "8", "--seed", "7"]);
    for file in ["imu.csv", "truth.csv"] {
        let bytes = |d: &Path| std::fs::read(d.join(file)).unwrap();
        assert_eq!(bytes(&a), bytes(&b), "{file}");
    }
    assert_ne!(std::fs::read(a.join("imu.csv")).unwrap(), std::fs::read(c.join("imu.csv")).unwrap());
    let imu = io::read_imu(&a.join("imu.csv")).unwrap();
    assert_eq!(imu.len(), 800);
    assert_eq!(io::read_truth(&a.join("truth.csv")).unwrap().len(), 800);
}

#[test]
fn walk_run_truth_has_no_stance_while_running() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(tmp.path(), &["--profile", "walk-run", "--duration", "91", "--segment", "30"]);
    let truth = io::read_truth(&dir.join("truth.csv")).unwrap();
    let lead_in = modebank::sim::LEAD_IN;
    // per-phase rounding to whole samples shifts segment ends slightly
    let margin = 0.5;
    let in_segment =
        |t: f64, k: usize| t >= lead_in + 30.0 * k as f64 + margin && t < lead_in + 30.0 * (k + 1) as f64 - margin;
    let modes = |k: usize| -> Vec<usize> {
        let mut m: Vec<usize> = truth.iter().filter(|r| in_segment(r.t, k)).map(|r| r.mode.get()).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    assert!(modes(0).contains(&3), "walking has stances: {:?}", modes(0));
    assert!(!modes(1).contains(&3), "running has no stance: {:?}", modes(1));
    assert!(modes(1).contains(&1));
    assert!(modes(2).contains(&3));
}

#[test]
fn stationary_run_stays_in_place() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(tmp.path(), &["--profile", "stationary", "--duration", "60", "--seed", "7"]);
    let traj = dir.join("trajectory.csv");
    let stdout = ok(&["run", "--imu", s(&dir.join("imu.csv")), "--out", s(&traj)]);
    assert!(stdout.contains("6000 samples"), "{stdout}");
    let rows = io::read_trajectory(&traj).unwrap();
    assert_eq!(rows.len(), 6000);
    assert_eq!(rows[0].mode_posterior.len(), 3);
    let last = rows.last().unwrap();
    assert!(last.position.norm() < 0.1, "final position {}", last.position);
    let header = std::fs::read_to_string(&traj).unwrap();
    assert!(header.starts_with("t,rx,ry,rz,vx,vy,vz,yaw,pitch,roll,map_mode,p1,p2,p3,loglik_increment\n"));
}

#[test]
fn single_leaf_bank_is_a_greedy_filter() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(tmp.path(), &["--profile", "walk", "--duration", "10", "--seed", "2"]);
    let imu = dir.join("imu.csv");
    for leaves in ["1", "9"] {
        let out = dir.join(format!("leaves{leaves}.csv"));
        ok(&["run", "--imu", s(&imu), "--max-leaves", leaves, "--out", s(&out)]);
    }
    let single = io::read_trajectory(&dir.join("leaves1.csv")).unwrap();
    let full = io::read_trajectory(&dir.join("leaves9.csv")).unwrap();
    assert_eq!(single.len(), full.len());

    // one hypothesis, extended each sample by its most likely successor
    let samples = io::read_imu(&imu).unwrap();
    let model = MotionModel::varying_gait(&VaryingGaitParams::default()).unwrap();
    let noise = NoiseConfig::default();
    let g = noise.gravity();
    let mut belief = initial_belief(&samples, 100, &InitialUncertainty::default(), false).unwrap();
    let mut mode = model.modes().last().unwrap();
    let mut last_t = None;
    for (k, u) in samples.iter().enumerate() {
        let cfg = noise.with_dt(noise.step_dt(last_t, u.t).unwrap());
        last_t = Some(u.t);
        let predicted = model.predict(&belief, mode, u, &cfg).unwrap();
        let candidates: Vec<_> = if k == 0 {
            vec![(mode, 0.0)]
        } else {
            model.transition().successors(mode).map(|(m, p)| (m, p.ln())).collect()
        };
        let mut best = None;
        for (m, lp) in candidates {
            let (b, ll) = update(&predicted, &model.constraint(m, &predicted.mean, u, &g)).unwrap();
            if best.as_ref().map_or(true, |(_, _, score)| lp + ll > *score) {
                best = Some((m, b, lp + ll));
            }
        }
        let (m, b, _) = best.unwrap();
        mode = m;
        belief = b;
        let row = &single[k];
        assert_eq!(row.map_mode, mode, "sample {k}");
        assert!((row.position - belief.mean.position).amax() <= 1e-12, "sample {k}");
        assert!((row.velocity - belief.mean.velocity).amax() <= 1e-12, "sample {k}");
    }
}

#[test]
fn same_height_model_locks_height_on_flat_ground_only() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(tmp.path(), &["--profile", "stairs", "--duration", "60", "--seed", "4"]);
    let traj = dir.join("bank.csv");
    ok(&["run", "--imu", s(&dir.join("imu.csv")), "--model", "same-height", "--out", s(&traj)]);
    let rows = io::read_trajectory(&traj).unwrap();
    let truth = io::read_truth(&dir.join("truth.csv")).unwrap();

    // Stances are runs of truth modes 2 or 3; flat ones start in mode 3,
    // stair landings in mode 2 (a new height). Mode 2 is always followed by
    // mode 3, so what separates the two is whether the bank ever prefers
    // mode 2 near the landing.
    let (mut flat, mut flat_locked, mut stair, mut stair_locked) = (0, 0, 0, 0);
    let mut k = 0;
    while k < truth.len() {
        if truth[k].mode.get() == 1 {
            k += 1;
            continue;
        }
        let start = k;
        while k < truth.len() && truth[k].mode.get() != 1 {
            k += 1;
        }
        if start == 0 {
            continue;
        }
        let window = &rows[start.saturating_sub(2)..k];
        let new_height = window.iter().any(|r| r.map_mode.get() == 2);
        let locked = !new_height && window.iter().any(|r| r.map_mode.get() == 3);
        if truth[start].mode.get() == 3 {
            flat += 1;
            flat_locked += usize::from(locked);
        } else {
            stair += 1;
            stair_locked += usize::from(locked);
        }
    }
    assert!(flat > 10 && stair > 10, "{flat} flat and {stair} stair stances");
    assert!(flat_locked * 10 >= flat * 9, "{flat_locked} of {flat} flat stances locked");
    assert_eq!(stair_locked, 0, "stair stances locked to the old height");
}

#[test]
fn learn_writes_the_report_and_flags_non_convergence() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(tmp.path(), &["--profile", "walk", "--duration", "15", "--seed", "3"]);
    let imu = dir.join("imu.csv");
    let init = dir.join("init.toml");
    std::fs::write(&init, "pi = [[0.5, 0.3333333333333333, 0.0], [0.5, 0.3333333333333334, 0.5], [0.0, 0.3333333333333333, 0.5]]\n")
        .unwrap();

    let report_path = dir.join("short.toml");
    let args = ["learn", "--imu", s(&imu), "--init", s(&init), "--max-iter", "1", "--out", s(&report_path)];
    assert_eq!(code(&args), 5);
    let text = std::fs::read_to_string(&report_path).unwrap();
    for key in ["pi", "loglik_trace", "iterations", "converged", "occupancy"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{key} ="))), "missing {key}:\n{text}");
    }
    let short = io::read_report(&report_path).unwrap();
    assert!(!short.converged);
    assert_eq!(short.iterations, 1);

    let report_path = dir.join("report.toml");
    let out = modebank(&["learn", "--imu", s(&imu), "--init", s(&init), "--out", s(&report_path)]);
    let report = io::read_report(&report_path).unwrap();
    assert_eq!(out.status.code(), Some(if report.converged { 0 } else { 5 }));
    assert!(report.loglik_trace.windows(2).all(|w| w[1] >= w[0]), "{:?}", report.loglik_trace);
    assert!(report.loglik_trace.last() >= short.loglik_trace.last());
    for (row, mask) in report.pi.iter().zip([[true, true, false], [true, true, true], [false, true, true]]) {
        for (v, free) in row.iter().zip(mask) {
            assert_eq!(*v == 0.0, !free, "{:?}", report.pi);
        }
    }
    for j in 0..3 {
        let col: f64 = report.pi.iter().map(|r| r[j]).sum();
        assert!((col - 1.0).abs() < 1e-9);
    }

    std::fs::write(&init, "pi = [[0.5, 0.3, 0.2], [0.5, 0.4, 0.3], [0.0, 0.3, 0.5]]\n").unwrap();
    assert_eq!(code(&["learn", "--imu", s(&imu), "--init", s(&init), "--out", s(&report_path)]), 2);
}

#[test]
fn compare_reduces_height_error_on_stairs() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(tmp.path(), &["--profile", "stairs", "--duration", "120", "--seed", "1"]);
    let (imu, truth) = (dir.join("imu.csv"), dir.join("truth.csv"));
    let run = |out: &str| {
        let out = dir.join(out);
        let args =
            ["compare", "--imu", s(&imu), "--truth", s(&truth), "--gamma", "3e4", "--model", "same-height", "--out-dir", s(&out)];
        ok(&args);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let text = std::fs::read_to_string(a.join("metrics.toml")).unwrap();
    assert_eq!(text, std::fs::read_to_string(b.join("metrics.toml")).unwrap());
    assert!(text.contains("[filter_bank]") && text.contains("[baseline]"), "{text}");

    let m = io::read_metrics(&a.join("metrics.toml")).unwrap();
    assert!(m.filter_bank.final_vertical.abs() < 0.3, "{m:?}");
    assert!(m.baseline.final_vertical.abs() > 1.0, "{m:?}");
    let plot = std::fs::read_to_string(a.join("plot.csv")).unwrap();
    assert!(plot.starts_with("t,speed_truth,speed_bank,speed_baseline,height_truth,height_bank,height_baseline,"));
    assert_eq!(plot.lines().count(), 12_001);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(tmp.path(), &["--profile", "stationary", "--duration", "2"]);
    let imu = dir.join("imu.csv");
    let out = dir.join("t.csv");

    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "max_leafs = 3\n").unwrap();
    assert_eq!(code(&["run", "--imu", s(&imu), "--config", s(&cfg), "--out", s(&out)]), 2);
    std::fs::write(&cfg, "[noise]\nsigma_s = -1.0\n").unwrap();
    assert_eq!(code(&["run", "--imu", s(&imu), "--config", s(&cfg), "--out", s(&out)]), 2);
    assert_eq!(code(&["run", "--imu", s(&imu), "--max-leaves", "0", "--out", s(&out)]), 2);
    assert_eq!(code(&["run", "--imu", s(&imu), "--out", s(&dir.join("missing/dir/t.csv"))]), 2);

    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "t,sx,sy,sz,wx,wy,wz\n0,0,0,9.81,0,0,0\n0.01,0,x,9.81,0,0,0\n").unwrap();
    assert_eq!(code(&["run", "--imu", s(&bad), "--out", s(&out)]), 3);
    assert_eq!(code(&["run", "--imu", s(&dir.join("absent.csv")), "--out", s(&out)]), 3);

    // a wild specific-force spike inflates the covariance past the limit
    let mut text = String::from("t,sx,sy,sz,wx,wy,wz\n");
    for k in 0..50 {
        let sz = if k == 30 { "1e12" } else { "9.81" };
        text.push_str(&format!("{},0,0,{sz},0,0,0\n", k as f64 * 0.01));
    }
    std::fs::write(&bad, text).unwrap();
    let result = modebank(&["run", "--imu", s(&bad), "--out", s(&out)]);
    assert_eq!(result.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&result.stderr).contains("sample 30"));
}
