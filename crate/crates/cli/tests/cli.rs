use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn srrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srrl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = srrl(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
        - 1
}

const FAST_C1: &str = "experiment = pend_c1\nruns = 1\nevolve.population = 100\nevolve.generations = 500\n";

#[test]
fn sim_gen_pendulum_counts_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c1.txt", "experiment = pend_c1\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let manifest = ok(&["--config", &cfg, "--out", a.to_str().unwrap(), "sim-gen"]);
    assert!(manifest.contains("29791 rows"));
    ok(&["--config", &cfg, "--out", b.to_str().unwrap(), "sim-gen"]);
    assert_eq!(data_rows(&a.join("data/train_ns20.csv")), 20);
    assert_eq!(data_rows(&a.join("data/test_grid.csv")), 29_791);
    for f in ["data/train_ns20.csv", "data/test_grid.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sim_gen_robot_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "r.txt", "experiment = robot_c\n");
    let out = tmp.path().join("r");
    ok(&["--config", &cfg, "--out", out.to_str().unwrap(), "sim-gen"]);
    assert_eq!(data_rows(&out.join("data/train_ns100.csv")), 100);
    assert_eq!(data_rows(&out.join("data/test_grid.csv")), 161_051);
}

#[test]
fn evolve_smoke_and_thread_independence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c1.txt", FAST_C1);
    let a = tmp.path().join("a");
    let a_s = a.to_str().unwrap();
    ok(&["--config", &cfg, "--out", a_s, "sim-gen"]);
    let one = ok(&["--config", &cfg, "--out", a_s, "--threads", "1", "evolve"]);
    let two = ok(&["--config", &cfg, "--out", a_s, "--threads", "2", "evolve"]);
    assert_eq!(one, two);
    assert!(one.starts_with("target,n_f,n_s,median_rmse,runs\n"));
    for stem in ["alpha_next_nf2_ns20", "alpha_dot_next_nf4_ns20"] {
        assert!(a.join(format!("models/{stem}.txt")).exists());
        assert!(a.join(format!("models/{stem}.json")).exists());
        let trace = fs::read_to_string(a.join(format!("traces/{stem}.csv"))).unwrap();
        let values: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn evolve_without_data_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let out = srrl(&["--out", tmp.path().join("x").to_str().unwrap(), "evolve"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_dataset_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "alpha,u,alpha_next\n1.0,oops,2.0\n").unwrap();
    let out = srrl(&["--out", tmp.path().to_str().unwrap(), "evolve", "--data", bad.to_str().unwrap(), "--test", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.txt", "evolve.nf = 2\n");
    assert_eq!(srrl(&["--config", &cfg, "sim-gen"]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "even.txt", "runs = 4\n");
    assert_eq!(srrl(&["--config", &cfg, "sim-gen"]).status.code(), Some(2));
    assert_eq!(srrl(&["--config", "/does/not/exist", "sim-gen"]).status.code(), Some(2));
    assert_eq!(srrl(&["no-such-verb"]).status.code(), Some(2));
}

#[test]
fn vi_and_rollout_on_the_reference_plant() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("vi");
    let o = out.to_str().unwrap();
    let msg = ok(&["--out", o, "vi"]);
    assert!(msg.contains("converged"));
    let summary = ok(&["--out", o, "rollout"]);
    assert!(summary.contains("success = true"), "{summary}");

    // the trajectory reloads and its return recomputes
    let csv = fs::read_to_string(out.join("rollout.csv")).unwrap();
    let rewards: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(4).filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()))
        .collect();
    assert_eq!(rewards.len(), 100);
    let ret = rewards.iter().rev().fold(0.0, |acc, r| r + 0.98 * acc);
    let reported: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("return = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((ret - reported).abs() < 1e-12);
}

#[test]
fn small_discount_converges_quickly() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "g.txt", "rl.gamma = 0.5\n");
    let out = tmp.path().join("g");
    ok(&["--config", &cfg, "--out", out.to_str().unwrap(), "vi"]);
    let sweeps = fs::read_to_string(out.join("vi_trace.csv")).unwrap().lines().count() - 1;
    assert!(sweeps <= 60, "{sweeps} sweeps");
}

#[test]
fn non_convergence_exits_with_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "nc.txt", "rl.max_sweeps = 3\n");
    let out = srrl(&["--config", &cfg, "--out", tmp.path().to_str().unwrap(), "vi"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn refine_smoke_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c3.txt",
        "experiment = pend_c3\nevolve.population = 50\nevolve.generations = 300\nevolve.n_f = 4\nrefine.n_models = 1\nrefine.eval_rollouts = 1\nrl.grid_points = 15, 15\n",
    );
    let out = tmp.path().join("c3");
    let summary = ok(&["--config", &cfg, "--out", out.to_str().unwrap(), "refine"]);
    assert!(summary.contains("stage reached: evaluation"));
    assert!(summary.contains("alpha_next = ") && summary.contains("alpha_dot_next = "));
    let csv = fs::read_to_string(out.join("refine_report.csv")).unwrap();
    assert!(csv.starts_with("record,key,initial,refined\n"));
    assert!(csv.contains("\nreturn,0,"));
}

#[test]
fn baseline_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c1.txt", &format!("{FAST_C1}data.n_s = 60\n"));
    let out = tmp.path().join("b");
    let o = out.to_str().unwrap();
    ok(&["--config", &cfg, "--out", o, "sim-gen"]);
    let first = ok(&["--config", &cfg, "--out", o, "baseline"]);
    let second = ok(&["--config", &cfg, "--out", o, "baseline"]);
    assert_eq!(first, second);
    assert!(first.starts_with("target,llr_rmse,sr_rmse,sr_runs\nalpha_next,"));
}

#[test]
fn report_on_empty_dir() {
    let tmp = TempDir::new().unwrap();
    let text = ok(&["report", tmp.path().to_str().unwrap()]);
    assert!(text.starts_with("median tables: 0 rows"));
    let csv = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    assert_eq!(csv, "experiment,source,target,n_f,n_s,median_rmse,runs\n");
}

#[test]
fn report_merges_sorted_and_is_stable() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    for (dir, exp, body) in [
        ("z_run", "pend_c1", "target,n_f,n_s,median_rmse,runs\nb_next,2,20,1e-3,3\na_next,4,20,2e-3,3\n"),
        ("a_run", "robot_c", "target,n_f,n_s,median_rmse,runs\nx_pos_next,2,100,1e-9,3\n"),
        ("m_run", "pend_c1", "target,n_f,n_s,median_rmse,runs\na_next,2,50,5e-4,3\n"),
    ] {
        fs::create_dir_all(root.join(dir)).unwrap();
        fs::write(root.join(dir).join("median_table.csv"), body).unwrap();
        fs::write(root.join(dir).join("config_evolve.txt"), format!("experiment = {exp}\n")).unwrap();
    }
    ok(&["report", root.to_str().unwrap()]);
    let first = fs::read(root.join("report.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    let keys: Vec<String> = text.lines().skip(1).map(|l| l.split(',').take(5).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(
        keys,
        vec![
            "pend_c1,m_run,a_next,2,50",
            "pend_c1,z_run,a_next,4,20",
            "pend_c1,z_run,b_next,2,20",
            "robot_c,a_run,x_pos_next,2,100",
        ]
    );
    ok(&["report", root.to_str().unwrap()]);
    assert_eq!(fs::read(root.join("report.csv")).unwrap(), first);
}
