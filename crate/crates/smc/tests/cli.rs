use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use smc::io::{read_csv, read_model, write_model};
use smc_core::models::NonMarkovGauss;
use smc_core::rng::SeedStream;

fn smc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smc")).args(args).env_remove("SMC_THREADS").output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn missing_model_is_a_config_error() {
    let o = smc(&["run", "--model", "/nonexistent/model.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["error"], "model_not_found");
}

#[test]
fn bad_arguments_exit_2() {
    for args in [&["run", "--particles", "0"][..], &["run", "--resampler", "residual"], &["run", "--proposal", "nested:0"], &["frobnicate"], &["pmmh", "--rho", "1.5"]] {
        let o = smc(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stdout_json(&o)["error"].is_string());
    }
}

#[test]
fn invalid_model_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    std::fs::write(&p, r#"{"phi":0.9,"q":1,"beta":0.5,"r":1,"d":2,"y":[[1.0]]}"#).unwrap();
    let o = smc(&["run", "--model", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["error"], "invalid_model");
}

#[test]
fn output_carries_provenance() {
    let o = smc(&["--seed", "9", "run", "--steps", "4", "--particles", "8", "--resampler", "stratified"]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    let meta = &v["meta"];
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["version"], smc::io::VERSION);
    assert_eq!(meta["config"]["resampler"], "stratified");
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["logZ_trace"].as_array().unwrap().len(), 4);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let cases: [&[&str]; 6] = [
        &["run", "--steps", "20", "--particles", "64"],
        &["pimh", "--steps", "10", "--particles", "16", "--iters", "50"],
        &["ipmcmc", "--steps", "8", "--particles", "8", "--iters", "20"],
        &["island", "--steps", "10", "--particles", "5", "--islands", "6"],
        &["nsmc", "--steps", "5", "--particles", "10", "--inner", "4"],
        &["reproduce", "table1", "--reps", "8"],
    ];
    let dir = tempfile::tempdir().unwrap();
    for (k, args) in cases.iter().enumerate() {
        let mut outs = Vec::new();
        for threads in ["1", "3", "1"] {
            let out = dir.path().join(format!("{k}-{}", outs.len()));
            let mut full = vec!["--seed", "4", "--threads", threads, "--out", out.to_str().unwrap()];
            full.extend_from_slice(args);
            let o = smc(&full);
            assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stdout));
            let file = if args[0] == "reproduce" { out.join("table1.csv") } else { out };
            outs.push(std::fs::read(file).unwrap());
        }
        assert!(outs.windows(2).all(|w| w[0] == w[1]), "{args:?}");
    }
}

#[test]
fn smc_threads_overrides_the_flag() {
    let base = smc(&["--threads", "1", "run", "--steps", "5"]);
    let o = Command::new(env!("CARGO_BIN_EXE_smc")).args(["--threads", "1", "run", "--steps", "5"]).env("SMC_THREADS", "4").output().unwrap();
    assert!(o.status.success());
    assert_eq!(o.stdout, base.stdout);
}

#[test]
fn model_json_round_trips_bitwise() {
    let m = NonMarkovGauss::running_example_dim(7, 2, &SeedStream::new(3));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    std::fs::write(&p, write_model(&m)).unwrap();
    let (back, _) = read_model(&p).unwrap();
    assert_eq!(back.y.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), m.y.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert_eq!((back.phi, back.q, back.beta, back.r, back.d), (m.phi, m.q, m.beta, m.r, m.d));
}

#[test]
fn simulated_model_feeds_oracle_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    assert!(smc(&["--seed", "2", "--out", model.to_str().unwrap(), "oracle", "--simulate", "6"]).status.success());
    let oracle = stdout_json(&smc(&["oracle", "--model", model.to_str().unwrap()]));
    let z = oracle["logZ"].as_f64().unwrap();
    let zv = stdout_json(&smc(&["run", "--model", model.to_str().unwrap(), "--proposal", "zero-variance", "--particles", "3"]));
    assert!((zv["logZ"].as_f64().unwrap() - z).abs() < 1e-9);
    assert_eq!(oracle["meta"]["config"]["model"]["sha256"].as_str().map(str::len), Some(64));
}

#[test]
fn every_proposal_runs() {
    for p in ["prior", "optimal", "laplace", "ekf", "ukf", "nested:3", "zero-variance"] {
        let o = smc(&["run", "--steps", "5", "--particles", "10", "--proposal", p]);
        assert!(o.status.success(), "{p}");
        assert!(stdout_json(&o)["logZ"].as_f64().unwrap().is_finite(), "{p}");
    }
}

#[test]
fn reproduce_targets_have_expected_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for which in ["weight-degeneracy", "path-degeneracy", "logz-violin", "table1"] {
        assert!(smc(&["--out", d, "reproduce", which, "--reps", "3"]).status.success(), "{which}");
    }
    let (h, rows) = read_csv(&read(&dir.path().join("weight-degeneracy.csv"))).unwrap();
    assert_eq!(h, ["t", "particle", "weight"]);
    assert_eq!(rows.len(), 6 * 5);
    for t in 1..=6 {
        let s: f64 = rows.iter().filter(|r| r[0] == t.to_string()).map(|r| r[2].parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    let (_, rows) = read_csv(&read(&dir.path().join("path-degeneracy.csv"))).unwrap();
    assert_eq!(rows.len(), 100);
    assert_eq!(rows.last().unwrap()[1], "20");
    let (h, rows) = read_csv(&read(&dir.path().join("logz-violin.csv"))).unwrap();
    assert_eq!(h, ["beta", "rep", "logZhat_minus_logZ"]);
    assert_eq!(rows.len(), 5 * 3);
    let (h, rows) = read_csv(&read(&dir.path().join("table1.csv"))).unwrap();
    assert_eq!(h, ["T", "rep", "sis", "smc"]);
    assert_eq!(rows.len(), 3 * 3);
    assert!(read(&dir.path().join("table1.csv")).starts_with("# version="));
}

#[test]
fn evaluate_writes_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bread.json");
    std::fs::write(&cfg, r#"{"steps": 20, "y": [0.5, 1.5]}"#).unwrap();
    let o = smc(&["evaluate", "bread", "--config", cfg.to_str().unwrap(), "--reps", "20"]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    for k in ["estimate", "se", "forward", "reverse"] {
        assert!(v[k].as_f64().unwrap().is_finite(), "{k}");
    }
    assert_eq!(v["meta"]["config"]["config"]["steps"], 20);
    let o = smc(&["evaluate", "aide", "--reps", "10"]);
    assert!(o.status.success());
    assert!(stdout_json(&o)["estimate"].as_f64().unwrap().is_finite());
    std::fs::write(&cfg, r#"{"stepz": 20}"#).unwrap();
    assert_eq!(smc(&["evaluate", "bread", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn chains_report_traces() {
    let (h, rows) = read_csv(&String::from_utf8(smc(&["pmmh", "--steps", "5", "--iters", "30", "--rho", "0.9"]).stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 30);
    assert!(h.iter().any(|c| c == "accepted"));
    let (h, rows) = read_csv(&String::from_utf8(smc(&["csmc", "--steps", "5", "--iters", "15", "--ancestor-sampling"]).stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 15);
    assert_eq!(h.len(), rows[0].len());
}
