use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn small_config() -> Value {
    json!({
        "seed": 7,
        "synthetic": { "sigma": 0.03, "spacing": 5.0, "flight_truth": { "k0_v": 0.30, "k0_c": 0.45 } },
        "morris": {
            "trajectories": { "r": 4, "levels": 4, "jump": 2, "quantile_range": [0.005, 0.995] },
            "knot_spacing": 10.0
        },
        "surrogate": { "n_runs": 40, "knot_spacing": 5.0, "fit": { "q": 0.75, "cv_target": 1e-3, "max_order": 2 } },
        "mcmc": {
            "ensemble": { "n_chains": 3, "chain": { "n_samples": 600, "adapt_interval": 100 } },
            "burn": 200,
            "thin": 2
        },
        "propagation": { "n_samples": 200 },
        "sweep": { "dw": 0.25, "n_samples": 200 }
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn charuq(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_charuq"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                found.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    found.sort();
    found
}

#[test]
fn malformed_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["mcmc"]["burn"] = json!(600);
    let config = write_config(dir.path(), &cfg);
    let o = charuq(&config, &dir.path().join("out"), &["overlay"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_input_fails_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    let o = charuq(&config, &out, &["calibrate", "--data", "no_such.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such.csv"));
    assert!(!out.exists());
}

#[test]
fn non_positive_data_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let data = dir.path().join("bad.csv");
    fs::write(&data, "time,TC1,TC2,TC3,TC4\n0,300,300,300,300\n5,-1,300,300,300\n").unwrap();
    let o = charuq(&config, &dir.path().join("out"), &["calibrate", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_divergence_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["ground"] = json!({
        "name": "ground",
        "thickness": 0.0254,
        "duration": 20.0,
        "dt": 5.0,
        "surface_bc": { "kind": "heat_flux", "times": [0.0, 20.0], "values": [1e11, 1e11] },
        "back_bc": { "type": "adiabatic" },
        "initial_temperature": 290.0,
        "tc_depths_mm": [20.0, 15.0, 10.0, 5.0],
        "tc_labels": ["TC1", "TC2", "TC3", "TC4"]
    });
    let config = write_config(dir.path(), &cfg);
    let o = charuq(&config, &dir.path().join("out"), &["simulate"]);
    assert_eq!(o.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solver diverged"));
}

#[test]
fn simulate_and_synthesize_write_tc_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    ok(&charuq(&config, &out, &["simulate", "--scenario", "flight"]));
    ok(&charuq(&config, &out, &["synthesize-data", "--scenario", "flight", "--sigma", "0.05"]));
    let clean = fs::read_to_string(out.join("flight_tc.csv")).unwrap();
    let noisy = fs::read_to_string(out.join("flight.csv")).unwrap();
    assert!(clean.starts_with("time,TC1,TC2,TC3,TC4"));
    assert_eq!(clean.lines().count(), noisy.lines().count());
    assert_ne!(clean, noisy);
    assert!(out.join("flight_field.csv").is_file());
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "synthesize-data");
    assert!(manifest["stage_seeds"]["synthesize-flight"].is_u64());
}

#[test]
fn calibrate_chain_counts_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    ok(&charuq(&config, &out, &["calibrate"]));
    let chains = read_json(&out.join("chains/chains.json"));
    assert_eq!(chains["n_chains"], 3);
    assert_eq!(chains["n_samples"], 600);
    for k in 0..3 {
        let csv = fs::read_to_string(out.join(format!("chains/chain_{k}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 601);
    }
    let summary = read_json(&out.join("calibration.json"));
    assert_eq!(summary["n_samples"], 3 * (600 - 200) / 2);
    let posterior = fs::read_to_string(out.join("posterior.csv")).unwrap();
    assert_eq!(posterior.lines().count(), 1 + 600);
}

#[test]
fn sweep_rows_match_w_grid_and_select_reads_them_back() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let ground = dir.path().join("ground");
    let flight = dir.path().join("flight");
    ok(&charuq(&config, &ground, &["calibrate", "--scenario", "ground"]));
    ok(&charuq(&config, &flight, &["pce", "--scenario", "flight"]));
    let surrogate = flight.join("surrogate_flight.json");
    ok(&charuq(
        &config,
        &flight,
        &["calibrate", "--scenario", "flight", "--surrogate", surrogate.to_str().unwrap()],
    ));
    let sweep = dir.path().join("sweep");
    ok(&charuq(
        &config,
        &sweep,
        &[
            "sweep-w",
            "--informative",
            ground.join("posterior.csv").to_str().unwrap(),
            "--reference",
            flight.join("posterior.csv").to_str().unwrap(),
            "--surrogate",
            surrogate.to_str().unwrap(),
        ],
    ));
    let table = fs::read_to_string(sweep.join("divergence_table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    let ws: Vec<f64> = rows.iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ws, vec![0.0, 0.25, 0.5, 0.75, 1.0]);

    let selected = dir.path().join("select");
    let o = charuq(
        &config,
        &selected,
        &["select-w", "--table", sweep.join("divergence_table.csv").to_str().unwrap()],
    );
    ok(&o);
    let printed: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    let report = read_json(&selected.join("select_w.json"));
    assert_eq!(report["jeffreys"].as_f64().unwrap(), printed);
    assert_eq!(report, read_json(&sweep.join("select_w.json")));
}

#[test]
fn pipeline_emits_report_and_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&charuq(&config, &a, &["pipeline"]));
    ok(&charuq(&config, &b, &["--threads", "2", "pipeline"]));

    let fa = files(&a);
    assert_eq!(fa, files(&b));
    for f in &fa {
        assert!(fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(), "{} differs", f.display());
    }

    let report = read_json(&a.join("report.json"));
    for key in ["coverage_gap_95", "containment_99", "optimal_w", "influential_inputs", "divergence_rows"] {
        assert!(!report[key].is_null(), "report lacks {key}");
    }
    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    let seeds = manifest["stage_seeds"].as_object().unwrap();
    for stage in ["calibrate-ground", "calibrate-flight", "sweep"] {
        assert!(seeds.contains_key(stage), "missing stage seed {stage}: {seeds:?}");
    }
    let listed: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(listed.contains(&"report.json"));
    assert!(listed.iter().all(|p| a.join(p).is_file()));
}

#[test]
fn seed_override_changes_stochastic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&charuq(&config, &a, &["synthesize-data"]));
    ok(&charuq(&config, &b, &["--seed", "8", "synthesize-data"]));
    assert_ne!(fs::read(a.join("ground.csv")).unwrap(), fs::read(b.join("ground.csv")).unwrap());
    assert_eq!(read_json(&b.join("manifest.json"))["global_seed"], 8);
}
