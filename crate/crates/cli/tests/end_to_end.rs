//! End-to-end runs of the binary: artifacts, determinism, exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mm-cli")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mm_cli_test_{}_{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(bin())
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

/// A fast O(1)-scale single-asset configuration.
fn small_single(mode: &str) -> String {
    format!(
        r#"{{
        "version": 1,
        "mode": "{mode}",
        "gamma": 0.5,
        "xi": "gamma",
        "horizon": 20.0,
        "assets": [{{
            "label": "demo",
            "sigma": 0.3,
            "intensity_a": 1.0,
            "intensity_k": 1.0,
            "trade_size": 1.0,
            "inventory_bound_steps": 3
        }}],
        "numerics": {{ "dt": 0.05, "dt_sim": 0.05, "n_paths": 64, "seed": 11, "delta_floor": -0.2 }},
        "simulation": {{ "policy": "solved", "record_events": true, "initial_price": [10.0] }}
    }}"#
    )
}

#[test]
fn solve_single_writes_artifacts_and_is_byte_stable() {
    let dir = scratch("solve_single");
    let config = dir.join("run.json");
    fs::write(&config, small_single("solve-single")).unwrap();

    let out1 = dir.join("out1");
    let res = run(&config, &out1, &[]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    for file in
        ["theta.csv", "quotes_inventory.csv", "quotes_inventory.svg", "quotes_time.csv", "quotes_time.svg"]
    {
        assert!(out1.join(file).exists(), "missing {file}");
    }
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("bps"), "bps table missing: {stdout}");

    let theta = fs::read_to_string(out1.join("theta.csv")).unwrap();
    assert!(theta.starts_with("t,q,theta\n"));
    // locale-independent float formatting: no commas inside numbers means
    // every row has exactly 3 fields
    for line in theta.lines().skip(1).take(50) {
        assert_eq!(line.split(',').count(), 3);
        assert!(!line.contains(' '));
    }
    let quotes = fs::read_to_string(out1.join("quotes_inventory.csv")).unwrap();
    let mut lines = quotes.lines();
    assert_eq!(lines.next().unwrap(), "q,bid_offset,ask_offset,approx_bid,approx_ask");
    // bid suppressed at +Q, ask at -Q
    let first = lines.next().unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert!(!fields[1].is_empty() && fields[2].is_empty(), "ask must be empty at -Q: {first}");

    let out2 = dir.join("out2");
    assert!(run(&config, &out2, &[]).status.success());
    for file in ["theta.csv", "quotes_inventory.csv", "quotes_time.csv"] {
        let a = fs::read(out1.join(file)).unwrap();
        let b = fs::read(out2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn bundled_credit_index_config_produces_the_expected_grid() {
    let workspace = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = workspace.join("configs/ig_single.json");
    let out = scratch("bundled_ig");
    let res = run(&config, &out, &[]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    // nine inventory rows (bound of four trades each side)
    let quotes = fs::read_to_string(out.join("quotes_inventory.csv")).unwrap();
    assert_eq!(quotes.lines().count(), 1 + 9);
    // two-hour horizon at a one-second step
    let theta = fs::read_to_string(out.join("theta.csv")).unwrap();
    assert_eq!(theta.lines().count(), 1 + 7201 * 9);
    let last = theta.lines().last().unwrap();
    assert!(last.starts_with("7.2"), "last row should sit at t = 7200: {last}");
}

#[test]
fn empty_config_is_a_schema_error() {
    let dir = scratch("empty");
    let config = dir.join("empty.json");
    fs::write(&config, "{}").unwrap();
    let res = run(&config, &dir.join("out"), &[]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("configuration error"), "{err}");
}

#[test]
fn oversized_grid_is_a_numerical_failure_exit() {
    let dir = scratch("oversized");
    let config = dir.join("run.json");
    let text = r#"{
        "version": 1,
        "mode": "solve-multi",
        "gamma": 0.5,
        "xi": "zero",
        "horizon": 5.0,
        "assets": [
            {"label": "a", "sigma": 0.3, "intensity_a": 1.0, "intensity_k": 1.0, "trade_size": 1.0, "inventory_bound_steps": 400},
            {"label": "b", "sigma": 0.3, "intensity_a": 1.0, "intensity_k": 1.0, "trade_size": 1.0, "inventory_bound_steps": 400}
        ],
        "correlation": [[1.0, 0.5], [0.5, 1.0]]
    }"#;
    fs::write(&config, text).unwrap();
    let res = run(&config, &dir.join("out"), &[]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn solve_multi_emits_heatmaps_for_two_assets() {
    let dir = scratch("solve_multi");
    let config = dir.join("run.json");
    let text = r#"{
        "version": 1,
        "mode": "solve-multi",
        "gamma": 0.5,
        "xi": "gamma",
        "horizon": 10.0,
        "assets": [
            {"label": "a", "sigma": 0.3, "intensity_a": 1.0, "intensity_k": 1.0, "trade_size": 1.0, "inventory_bound_steps": 2},
            {"label": "b", "sigma": 0.45, "intensity_a": 0.8, "intensity_k": 1.4, "trade_size": 0.5, "inventory_bound_steps": 2}
        ],
        "correlation": [[1.0, 0.8], [0.8, 1.0]],
        "numerics": { "dt": 0.05 }
    }"#;
    fs::write(&config, text).unwrap();
    let out = dir.join("out");
    let res = run(&config, &out, &[]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("theta.csv").exists());
    assert!(out.join("bid_surface_a.svg").exists());
    assert!(out.join("bid_surface_b.svg").exists());
    let quotes = fs::read_to_string(out.join("quotes.csv")).unwrap();
    assert!(quotes.starts_with("q1,q2,asset,bid_offset,ask_offset\n"));
    let theta = fs::read_to_string(out.join("theta.csv")).unwrap();
    assert!(theta.starts_with("t,q1,q2,theta\n"));
}

#[test]
fn approx_mode_writes_quote_tables() {
    let dir = scratch("approx");
    let config = dir.join("run.json");
    fs::write(&config, small_single("approx")).unwrap();
    let out = dir.join("out");
    let res = run(&config, &out, &[]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("approx_quotes.csv")).unwrap();
    assert!(table.starts_with("q1,asset,bid_offset,ask_offset\n"));
    assert!(out.join("approx_quotes.svg").exists());
}

#[test]
fn simulate_mode_is_seed_deterministic_and_overridable() {
    let dir = scratch("simulate");
    let config = dir.join("run.json");
    fs::write(&config, small_single("simulate")).unwrap();

    let out1 = dir.join("out1");
    let out2 = dir.join("out2");
    let out3 = dir.join("out3");
    assert!(run(&config, &out1, &[]).status.success());
    assert!(run(&config, &out2, &[]).status.success());
    assert!(run(&config, &out3, &["--seed", "99", "--paths", "32"]).status.success());
    let a = fs::read(out1.join("report.json")).unwrap();
    let b = fs::read(out2.join("report.json")).unwrap();
    let c = fs::read(out3.join("report.json")).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical reports");
    assert_ne!(a, c, "an overridden seed must change the report");
    assert!(out1.join("events.csv").exists());
    let events = fs::read_to_string(out1.join("events.csv")).unwrap();
    assert!(events.starts_with("path,t,asset,side,S,delta,q_after,x_after\n"));
}

#[test]
fn calibrate_mode_fits_the_bundled_observations() {
    let dir = scratch("calibrate");
    let obs = dir.join("obs.csv");
    fs::write(
        &obs,
        "delta,duration,fills\n0.25,4000.0,3066\n0.5,4000.0,2389\n0.75,4000.0,1896\n1.0,4000.0,1448\n",
    )
    .unwrap();
    let config = dir.join("run.json");
    let text = format!(
        r#"{{
        "version": 1,
        "mode": "calibrate",
        "gamma": 0.5,
        "xi": "zero",
        "horizon": 10.0,
        "assets": [{{"label": "demo", "sigma": 0.3, "intensity_a": 1.0, "intensity_k": 1.0, "trade_size": 1.0, "inventory_bound_steps": 2}}],
        "calibration": {{ "observations": {:?} }}
    }}"#,
        obs.to_str().unwrap()
    );
    fs::write(&config, text).unwrap();
    let out = dir.join("out");
    let res = run(&config, &out, &[]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    // counts generated at A = 1, k = 1 with expected fills Λ(δ)·4000
    let a = fit["a"].as_f64().unwrap();
    let k = fit["k"].as_f64().unwrap();
    assert!((a - 1.0).abs() < 0.1, "A = {a}");
    assert!((k - 1.0).abs() < 0.1, "k = {k}");
}
