use std::path::Path;
use std::process::{Command, Output};

fn singtest(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_singtest"))
        .args(args)
        .env("SINGTEST_OUT_DIR", dir)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_and_help() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(singtest(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(singtest(dir.path(), &["simulate", "--bogus"]).status.code(), Some(64));
    assert_eq!(singtest(dir.path(), &["tables", "--which", "3"]).status.code(), Some(64));
    assert_eq!(singtest(dir.path(), &["simulate", "--model", "bump"]).status.code(), Some(64));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let o = singtest(dir.path(), &["--seed", seed, "simulate", "--model", "jump", "--n", "20", "--out", name]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        text.lines().filter(|l| !l.starts_with("# command:")).collect::<Vec<_>>().join("\n")
    };
    let a = run("a.csv", "5");
    assert_eq!(a, run("b.csv", "5"));
    assert_ne!(a, run("c.csv", "6"));
    assert!(a.starts_with("# format: dataset/1"));
    assert!(a.contains("# seed: 5"));
}

#[test]
fn field_reads_a_dataset_and_rejects_another_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = singtest(dir.path(), &["simulate", "--model", "cusp", "--n", "50"]);
    assert!(o.status.success());
    let data = dir.path().join("dataset.csv");
    let data = data.to_str().unwrap();
    let o = singtest(dir.path(), &["field", "--model", "cusp", "--data", data]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("u_hat"));
    let o = singtest(dir.path(), &["field", "--model", "jump", "--data", data]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn analytic_pyke_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = singtest(dir.path(), &["analytic", "pyke", "--gamma", "0.5493", "--eps", "0.05"]);
    let x: f64 = stdout(&o).trim().parse().unwrap();
    let x_arg = x.to_string();
    let o = singtest(dir.path(), &["analytic", "pyke", "--gamma", "0.5493", "--x", &x_arg]);
    let tail: f64 = stdout(&o).trim().parse().unwrap();
    assert!((tail - 0.05).abs() < 1e-8, "tail {tail}");
}

#[test]
fn tables_check_reports_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = singtest(dir.path(), &["tables", "--which", "2", "--M", "2000", "--check"]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)));
    assert!(stdout(&o).contains("30 cells"), "{}", stdout(&o));
    assert!(dir.path().join("table2.csv").exists());
}

#[test]
fn calibrate_then_power_from_file_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "family = \"jump_cos2\"\n[run]\nseed = 3\neps = [0.05]\nm = 800\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = singtest(dir.path(), &["--config", cfg, "calibrate", "--class", "jump", "--npt", "2", "--out", "thr.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let thr = std::fs::read_to_string(dir.path().join("thr.csv")).unwrap();
    assert!(thr.contains("# seed: 3"));
    assert!(thr.contains("npt_ln_d"));
    let thr_path = dir.path().join("thr.csv");
    let o = singtest(
        dir.path(),
        &[
            "--config",
            cfg,
            "power",
            "--class",
            "jump",
            "--M",
            "400",
            "--u-star",
            "0,2",
            "--thresholds",
            thr_path.to_str().unwrap(),
            "--emit-plot-data",
            "fig6",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fig = std::fs::read_to_string(dir.path().join("fig6.csv")).unwrap();
    assert!(fig.lines().any(|l| l.starts_with("test,u_star,n_or_limit,power")));
}

#[test]
fn bad_config_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "family = \"cusp\"\nkappa = 0.9\n").unwrap();
    let o = singtest(dir.path(), &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(1));
}
