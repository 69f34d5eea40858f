use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use distcomm_cli::output::{read_rows, COLUMNS};
use serde_json::{json, Value};
use tempfile::TempDir;

fn h2(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

fn bern(p1: f64) -> Value {
    json!({ "alphabet": "bit", "probs": [1.0 - p1, p1] })
}

fn ham() -> Value {
    json!({ "input": "bit", "output": "bit", "matrix": "hamming" })
}

fn config(experiment: Value) -> Value {
    json!({ "schema_version": 1, "seed": 3, "alphabets": { "bit": 2 }, "experiment": experiment })
}

fn write(dir: &TempDir, name: &str, v: &Value) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn distcomm(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distcomm"))
        .args(args)
        .arg(cfg)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn reliability(trials_per_message: usize) -> Value {
    config(json!({
        "kind": "reliability",
        "input": bern(0.5), "distortion": ham(), "target": 0.1, "eps": 0.1,
        "channels": [{ "type": "bsc", "flip": 0.03 }],
        "rates": [0.3], "n_list": [60, 120],
        "messages_sampled": 4, "trials_per_message": trials_per_message
    }))
}

#[test]
fn rd_csv_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let grid = [0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
    let cfg = write(
        &dir,
        "rd.json",
        &config(json!({ "kind": "rd", "source": bern(0.3), "distortion": ham(), "d_grid": grid })),
    );
    let o = distcomm(&["rd", "--quiet"], &cfg, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("rd.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
    let rows = read_rows(&dir.path().join("rd.csv")).unwrap();
    let rates: Vec<_> = rows.iter().filter(|r| r.metric == "rate_bits").collect();
    assert_eq!(rates.len(), grid.len());
    for r in rates {
        let d = r.param.unwrap();
        let oracle = if d >= 0.3 { 0.0 } else { h2(0.3) - h2(d) };
        assert!((r.estimate - oracle).abs() < 1e-3, "D={d}");
    }
    assert!(dir.path().join("rd.svg").exists());
    assert!(dir.path().join("rd.timings.csv").exists());
}

#[test]
fn zero_trials_is_a_schema_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.json", &reliability(0));
    let o = distcomm(&["reliability"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.trials_per_message"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.json", &reliability(30));
    let mut csvs = Vec::new();
    for (i, workers) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        let o = distcomm(
            &[
                "run",
                "--quiet",
                "--plot-format",
                "none",
                "--workers",
                workers,
            ],
            &cfg,
            &out,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        csvs.push(std::fs::read(out.join("reliability.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let o = distcomm(
        &["run", "--quiet", "--seed", "4"],
        &cfg,
        &dir.path().join("o2"),
    );
    assert!(o.status.success());
    assert_ne!(
        std::fs::read(dir.path().join("o2/reliability.csv")).unwrap(),
        csvs[0]
    );
}

#[test]
fn intervals_contain_estimates() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "s.json",
        &config(json!({
            "kind": "source", "source": bern(0.5), "distortion": ham(), "target": 0.2,
            "rates": [0.2, 0.4], "n_list": [20, 60], "trials": 100
        })),
    );
    let o = distcomm(&["source", "--quiet"], &cfg, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_rows(&dir.path().join("source.csv")).unwrap();
    assert_eq!(rows.len(), 1 + 2 * 2 * 2);
    for r in rows {
        assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high, "{r:?}");
    }
}

#[test]
fn validate_reports_named_fields() {
    let dir = TempDir::new().unwrap();
    let good = write(&dir, "good.json", &reliability(10));
    let o = distcomm(&["validate"], &good, dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty() && o.stderr.is_empty());

    let mut bad = reliability(10);
    bad["experiment"]["input"]["probs"] = json!([0.5, 0.4]);
    let o = distcomm(&["validate"], &write(&dir, "sum.json", &bad), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.input.probs: sums to 0.9"));

    let mut bad = reliability(10);
    bad["experiment"]["distortion"]["output"] = json!("trit");
    let o = distcomm(&["validate"], &write(&dir, "alpha.json", &bad), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.distortion.output: undeclared alphabet \"trit\""));

    let mut bad = reliability(10);
    bad["experiment"]["channels"][0]["flop"] = json!(0.1);
    let o = distcomm(&["validate"], &write(&dir, "field.json", &bad), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown field `flop`"));

    let mut bad = reliability(10);
    bad["schema_version"] = json!(2);
    let o = distcomm(&["validate"], &write(&dir, "ver.json", &bad), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schema_version"));

    let o = distcomm(&["separation"], &good, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.kind"));
}

#[test]
fn exit_codes_for_infeasible_and_resource() {
    let dir = TempDir::new().unwrap();
    let too_fast = config(json!({
        "kind": "separation",
        "source": bern(0.5), "distortion": ham(), "target": 0.11,
        "pipe": { "source": bern(0.5), "distortion": ham(), "target": 0.05 },
        "channels": [{ "type": "identity", "alphabet": "bit" }],
        "certify": { "n_list": [100], "trials": 100, "max_excess": 0.1 },
        "source_margin": 0.1, "channel_rate": 0.9, "eps": 0.1,
        "n_list": [100], "trials": 10
    }));
    let o = distcomm(&["run"], &write(&dir, "sep.json", &too_fast), dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let uncertified = config(json!({
        "kind": "separation",
        "source": bern(0.5), "distortion": ham(), "target": 0.11,
        "pipe": { "source": bern(0.5), "distortion": ham(), "target": 0.05 },
        "channels": [{ "type": "bsc", "flip": 0.2 }],
        "certify": { "n_list": [100], "trials": 100, "max_excess": 0.1 },
        "source_margin": 0.1, "channel_rate": 0.6, "eps": 0.1,
        "n_list": [100], "trials": 10
    }));
    let o = distcomm(
        &["run"],
        &write(&dir, "cert.json", &uncertified),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("excess-distortion upper bound"));

    let k = 13;
    let big = json!({
        "schema_version": 1,
        "alphabets": { "big": k },
        "experiment": {
            "kind": "exponent",
            "source": { "alphabet": "big", "probs": vec![1.0 / k as f64; k] },
            "distortion": { "input": "big", "output": "big", "matrix": "hamming" },
            "target": 0.5, "eps_grid": [0.1]
        }
    });
    let o = distcomm(&["exponent"], &write(&dir, "big.json", &big), dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn plots_are_redrawn_from_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.json", &reliability(20));
    let o = distcomm(
        &["run", "--quiet", "--plot-format", "none"],
        &cfg,
        dir.path(),
    );
    assert!(o.status.success());
    let svg = dir.path().join("reliability.svg");
    assert!(!svg.exists());
    let o = Command::new(env!("CARGO_BIN_EXE_distcomm"))
        .args(["plot", "--quiet"])
        .arg(dir.path().join("reliability.csv"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("max_message_error"));
}
