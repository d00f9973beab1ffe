use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ridepool(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ridepool"))
        .args(args)
        .args(["--data-dir", dir.to_str().unwrap()])
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ridepool(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    ridepool(dir, args).status.code().expect("exit code")
}

fn out_dir(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

/// Two-zone grid, three four-hour alternating demand days and a table
/// learned from the first two.
fn world() -> TempDir {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let here = out_dir(d, "");
    ok(d, &["synth-network", "--width", "10", "--height", "6", "--zones", "2", "--out-dir", &here]);
    ok(d, &["synth-demand", "--alternating", "4,150,0.2", "--copies", "3", "--name", "day", "--out-dir", &here]);
    ok(d, &["learn", "--fleet", "150", "--days", "day_0.csv,day_1.csv", "--out-dir", &here]);
    tmp
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().into(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_logs_and_metrics() {
    let tmp = world();
    let d = tmp.path();
    let out = out_dir(d, "sim");
    let args = [
        "simulate",
        "--fleet",
        "8",
        "--policy",
        "nonmyopic",
        "--rebalancer",
        "value",
        "--days",
        "day_2.csv",
        "--trajectory",
        "--audit",
        "--out-dir",
        &out,
    ];
    let stdout = ok(d, &args);
    assert!(stdout.contains("relocations"), "{stdout}");
    let names: Vec<_> = files(Path::new(&out)).into_iter().map(|(p, _)| p.display().to_string()).collect();
    for want in
        ["audit_d0.csv", "hourly.csv", "metrics.csv", "relocations_d0.csv", "requests_d0.csv", "trajectory_d0.csv"]
    {
        assert!(names.iter().any(|n| n == want), "missing {want} in {names:?}");
    }
    let relocations = fs::read_to_string(Path::new(&out).join("relocations_d0.csv")).unwrap();
    assert!(relocations.lines().count() > 1, "no relocations logged");
    let metrics = fs::read_to_string(Path::new(&out).join("metrics.csv")).unwrap();
    assert!(metrics.lines().last().unwrap().contains(",all,"), "{metrics}");
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = world();
    let d = tmp.path();
    for run in ["a", "b"] {
        let out = out_dir(d, run);
        ok(
            d,
            &[
                "simulate",
                "--fleet",
                "8",
                "--policy",
                "nonmyopic",
                "--rebalancer",
                "value",
                "--days",
                "day_2.csv",
                "--trajectory",
                "--seed",
                "4",
                "--out-dir",
                &out,
            ],
        );
        ok(d, &["learn", "--fleet", "150", "--days", "day_0.csv", "--seed", "4", "--out-dir", &out]);
        ok(d, &["synth-demand", "--alternating", "2,50,0.5", "--seed", "4", "--out-dir", &out]);
    }
    let (a, b) = (files(&d.join("a")), files(&d.join("b")));
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{} differs", na.display());
    }
}

#[test]
fn resumed_learning_equals_one_pass() {
    let tmp = world();
    let d = tmp.path();
    let first = out_dir(d, "first");
    ok(d, &["learn", "--fleet", "150", "--days", "day_0.csv", "--out-dir", &first]);
    let resumed = out_dir(d, "resumed");
    ok(
        d,
        &[
            "learn",
            "--resume",
            "--start-day",
            "1",
            "--value-table",
            "first/values.csv",
            "--fleet",
            "150",
            "--days",
            "day_0.csv,day_1.csv",
            "--out-dir",
            &resumed,
        ],
    );
    let whole = fs::read(d.join("values.csv")).unwrap();
    let split = fs::read(Path::new(&resumed).join("values.csv")).unwrap();
    assert!(whole == split);
}

#[test]
fn sweep_and_compare_tables() {
    let tmp = world();
    let d = tmp.path();
    let out = out_dir(d, "sweep");
    ok(d, &["sweep", "--fleets", "6,9", "--policies", "myopic,nonmyopic", "--days", "day_2.csv", "--out-dir", &out]);
    let sweep = fs::read_to_string(Path::new(&out).join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5, "{sweep}");

    for p in ["myopic", "nonmyopic"] {
        ok(d, &["simulate", "--fleet", "6", "--policy", p, "--days", "day_2.csv", "--out-dir", &out_dir(d, p)]);
    }
    let cmp = out_dir(d, "cmp");
    ok(d, &["compare", "myopic/metrics.csv", "nonmyopic/metrics.csv", "--out-dir", &cmp]);
    let rows = fs::read_to_string(Path::new(&cmp).join("comparison.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    assert!(rows.lines().nth(1).unwrap().starts_with("myopic,6,"));
}

#[test]
fn heatmap_and_calibration_outputs() {
    let tmp = world();
    let d = tmp.path();
    let out = out_dir(d, "misc");
    ok(d, &["export-heatmap", "--times", "0,12,24", "--out-dir", &out]);
    let heat = fs::read_to_string(Path::new(&out).join("heatmap.csv")).unwrap();
    assert_eq!(heat.lines().count(), 1 + 3 * 2);
    ok(d, &["calibrate-lambda", "--fleet", "8", "--days", "day_2.csv", "--out-dir", &out]);
    let lambda = fs::read_to_string(Path::new(&out).join("lambda.csv")).unwrap();
    assert!(lambda.starts_with("lambda,samples,configured"));
}

#[test]
fn exit_codes() {
    let tmp = world();
    let d = tmp.path();
    let out = out_dir(d, "x");
    assert_eq!(code(d, &["simulate", "--days", "nope.csv", "--out-dir", &out]), 2);
    assert_eq!(code(d, &["simulate", "--set", "fleet_sise=3", "--days", "day_2.csv", "--out-dir", &out]), 2);
    assert_eq!(code(d, &["simulate", "--set", "tau=\"often\"", "--days", "day_2.csv", "--out-dir", &out]), 2);
    assert_eq!(code(d, &["simulate", "--bogus"]), 2);
    assert_eq!(code(d, &["learn", "--fleet", "2", "--days", "day_0.csv", "--out-dir", &out]), 3);
}

#[test]
fn help_lists_configuration_keys() {
    let out = Command::new(env!("CARGO_BIN_EXE_ridepool")).arg("--help").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["tick_seconds", "w_max", "learn_fleet_size", "n_steps", "gamma", "lambda", "tau", "value_table"] {
        assert!(text.contains(key), "--help does not mention {key}");
    }
}
