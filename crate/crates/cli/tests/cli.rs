use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(dir: &Path, config: &Value, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_funcld"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

fn linear_curve(x0: f64) -> Value {
    json!({
        "kind": "linear_curve",
        "h": {"kind": "constant", "value": 1.0},
        "l": {"kind": "constant", "value": 0.8},
        "y_law": {"kind": "normal", "mean": 0.0, "sd": 3.0},
        "x0": {"kind": "constant", "value": x0}
    })
}

fn small_ladder() -> Value {
    json!({"n_values": [50, 100], "a": 2.0, "alpha": 2.0, "lambda": 1.0, "replicates": 2000})
}

#[test]
fn rate_sweep_matches_gaussian_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"command": "rate", "rate": {"lambda": [0.5, 1.0], "lambda1": [1.0], "ratio": [0.0, 1.0]}});
    let o = run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = fs::read_to_string(dir.path().join("out/rate_sweep.csv")).unwrap();
    assert!(sweep.starts_with("lambda,gamma,gamma_prime,gamma_second,beta\n"));
    let gamma: f64 = column(&sweep, "gamma")[1].parse().unwrap();
    assert!((gamma - (1.0 - (-0.5f64).exp())).abs() < 1e-6, "{gamma}");
    let grid = fs::read_to_string(dir.path().join("out/rate_grid.csv")).unwrap();
    assert!(grid.starts_with("lambda1,lambda2,gamma_legendre,gamma_closed,abs_diff\n"));
    for d in column(&grid, "abs_diff") {
        assert!(d.parse::<f64>().unwrap() < 1e-6);
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "rate");
    assert!(manifest["version"].as_str().unwrap().starts_with("funcld "));
    assert_eq!(manifest["config"]["rate"]["lambda"], json!([0.5, 1.0]));
}

#[test]
fn missing_lambda_exits_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &json!({"command": "rate", "rate": {"lambda1": [1.0]}}), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`lambda`"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());

    let cfg = json!({"command": "simulate", "model": linear_curve(0.0), "ladder": {"n_values": [50], "a": 2.0, "alpha": 2.0, "replicates": 2000}, "seed": 1});
    let o = run(dir.path(), &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`lambda`"), "{}", stderr(&o));
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &json!({"command": "simulate", "model": linear_curve(0.0), "ladder": small_ladder()}), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`seed`"), "{}", stderr(&o));
}

#[test]
fn simulate_is_byte_identical_under_seed() {
    let cfg = json!({
        "command": "simulate",
        "model": linear_curve(0.0),
        "ladder": small_ladder(),
        "small_ball": {"v": [0.0], "u": 0.05, "replicates": 5000}
    });
    let read = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = run(dir.path(), &cfg, &["--seed", seed, "--threads", "1"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = dir.path().join("out");
        let mut names: Vec<String> =
            fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        assert_eq!(names, ["ladder.csv", "manifest.json", "small_ball.csv"]);
        let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], json!(seed.parse::<u64>().unwrap()));
        (fs::read(out.join("ladder.csv")).unwrap(), fs::read(out.join("small_ball.csv")).unwrap())
    };
    let first = read("3");
    assert_eq!(first, read("3"));
    assert_ne!(first, read("4"));
    let text = String::from_utf8(first.0).unwrap();
    assert!(text
        .starts_with("n,h,phi_h,replicates,hits,p_hat,wilson_low,wilson_high,empirical_rate,theoretical_rate,flag\n"));
}

#[test]
fn uniform_ladder_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut ladder = small_ladder();
    ladder["centers"] = json!([{"kind": "constant", "value": -0.5}, {"kind": "constant", "value": 0.5}]);
    let cfg = json!({"command": "uniform", "seed": 2, "model": linear_curve(0.0), "ladder": ladder});
    let o = run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/uniform_ladder.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn estimate_writes_values_and_log_mgf() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "command": "estimate",
        "seed": 5,
        "model": linear_curve(0.0),
        "estimate": {
            "data": {"kind": "simulated", "n": 300},
            "points": [{"kind": "constant", "value": 0.0}],
            "h": 0.2,
            "log_mgf": {"n_values": [100], "t1": 0.1, "t2": 0.0, "replicates": 200}
        }
    });
    let o = run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let est = fs::read_to_string(dir.path().join("out/estimate.csv")).unwrap();
    assert!(est.starts_with("point,r_n1,r_n2,r_hat,active_count\n"));
    let count: usize = column(&est, "active_count")[0].parse().unwrap();
    assert!(count > 0);
    let mgf = fs::read_to_string(dir.path().join("out/log_mgf.csv")).unwrap();
    assert_eq!(mgf.lines().count(), 2);
}

#[test]
fn cover_reports_entropy_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "command": "cover",
        "grid_points": 201,
        "cover": {
            "class": {"kind": "parametric_scale", "x": {"kind": "bump", "center": 0.5, "width": 0.08}, "a_lo": 1.0, "a_hi": 2.0, "count": 16},
            "ladder": {"n_values": [200, 2000]}
        }
    });
    let o = run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/cover.csv")).unwrap();
    assert!(csv.starts_with("nu,n_cover,nu_log_n,admissible_flag\n"));
    assert!(column(&csv, "admissible_flag").iter().all(|f| f == "true"));

    let bad = json!({"command": "cover", "cover": {"class": {"kind": "explicit", "members": [{"kind": "constant", "value": 1.0}]}, "ladder": {"n_values": [200]}, "nu": [0.1, 0.2]}});
    let o = run(dir.path(), &bad, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`cover.nu`"), "{}", stderr(&o));
}

#[test]
fn command_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"command": "simulate", "rate": {"lambda": [1.0]}});
    let o = run(dir.path(), &cfg, &["--command", "rate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("out/rate_sweep.csv").exists());
}
