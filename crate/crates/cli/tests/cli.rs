use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
[market]
demand = 15.0
payment_rule = "marginal_price"

[[bidders]]
true_cost = { a = 0.1, d = 8.0, x_max = 10.0 }
strategies = { kind = "perturb", actions = 6, linear = [-6.0, 30.0] }

[[bidders]]
true_cost = { a = 0.095, d = 9.0, x_max = 10.0 }
strategies = { kind = "perturb", actions = 6, linear = [-6.0, 30.0] }

[[bidders]]
true_cost = { a = 0.105, d = 10.0, x_max = 10.0 }
strategies = { kind = "perturb", actions = 6, linear = [-6.0, 30.0] }

[learning]
arms = ["full_information", "bandit", "extended_true"]
horizon = 40
alpha_hat = 4.0

[runs]
count = 3
generation_seed = 5
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_auction-learn"))
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(dir: &Path, text: &str, extra: &[&str]) -> Output {
    let config = write_config(dir, text);
    let out = dir.join("out");
    let mut args = vec!["run", "--config", &config, "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bin().args(&args).output().unwrap()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

fn golden() -> Value {
    serde_json::from_str(include_str!("golden/schema_v1.json")).unwrap()
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

#[test]
fn output_schema_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), SMALL, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    let g = golden();
    for (name, cols) in g["csv"].as_object().unwrap() {
        if name == "sweep.csv" {
            continue;
        }
        assert_eq!(header(&out.join(name)), strings(cols), "{name}");
    }

    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let s = &g["summary.json"];
    assert_eq!(keys(&summary), strings(&s["top"]));
    assert_eq!(summary["schema_version"], g["schema_version"]);
    let arm = &summary["arms"][0];
    assert_eq!(keys(arm), strings(&s["arm"]));
    assert_eq!(keys(&arm["summary"]), strings(&s["summary"]));
    assert_eq!(keys(&arm["summary"]["bidders"][0]), strings(&s["bidder"]));
    assert_eq!(keys(&arm["summary"]["social_cost"]), strings(&s["stat"]));

    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let m = &g["manifest.json"];
    assert_eq!(keys(&manifest), strings(&m["top"]));
    assert_eq!(keys(&manifest["resolved"]), strings(&m["resolved"]));
    assert_eq!(keys(&manifest["resolved"]["arms"][0]["bidders"][0]), strings(&m["resolved_bidder"]));
}

#[test]
fn csv_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(tmp.path(), SMALL, &[]).status.success());
    let out = tmp.path().join("out");
    let rows = |name: &str| csv::Reader::from_path(out.join(name)).unwrap().records().count();
    // 3 arms × (3 bidders + pooled) × 40 rounds
    assert_eq!(rows("regret.csv"), 3 * 4 * 40);
    assert_eq!(rows("alpha.csv"), 3 * 4);
    assert_eq!(rows("zero_allocations.csv"), 3 * 3);
    assert_eq!(rows("social_cost.csv"), 3);
    assert_eq!(rows("runs.csv"), 3 * 3 * 3);
}

#[test]
fn manifest_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(tmp.path(), SMALL, &["--seed-override", "4,9", "--workers", "2"]).status.success());
    let out = tmp.path().join("out");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([4, 9]));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let again = tempfile::tempdir().unwrap();
    let seeds = manifest["seeds"].as_array().unwrap().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
    let o = run(again.path(), manifest["config"].as_str().unwrap(), &["--seed-override", &seeds, "--workers", "1"]);
    assert!(o.status.success());
    for name in ["regret.csv", "alpha.csv", "runs.csv", "summary.json"] {
        assert_eq!(
            fs::read(out.join(name)).unwrap(),
            fs::read(again.path().join("out").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_alpha = SMALL.replace("alpha_hat = 4.0", "alpha_hat = 20.0");
    let o = run(tmp.path(), &bad_alpha, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside [1, 6]"));

    let o = run(tmp.path(), &SMALL.replace("count = 3", "seeds = []"), &[]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(tmp.path(), &SMALL.replace("horizon = 40", "horizon = 40\nhorizn = 1"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("horizn") && err.contains("line"), "{err}");

    let o = bin().args(["run", "--config", "/nonexistent/exp.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn infeasible_markets_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &SMALL.replace("demand = 15.0", "demand = 45.0"), &[]);
    assert_eq!(o.status.code(), Some(2));

    // VCG needs the market cleared without each winner, which fails when
    // every bidder is required
    let vcg = SMALL.replace("demand = 15.0", "demand = 25.0").replace("\"marginal_price\"", "\"vcg\"");
    let o = run(tmp.path(), &vcg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("round 1") && err.contains("profile"), "{err}");
}

#[test]
fn verify_and_fault_injection() {
    let o = bin().arg("verify").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 7);

    let o = bin().args(["verify", "--inject-fault", "revelation-below-w"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL extended estimator is unbiased"));

    let o = bin().args(["verify", "--inject-fault", "vcg-wrong-sign"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL VCG externality"));
}

#[test]
fn single_value_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(tmp.path(), SMALL, &[]).status.success());
    let config = write_config(tmp.path(), SMALL);
    let sweep_dir = tmp.path().join("sweep");
    let o = bin()
        .args(["sweep", "--config", &config, "--out-dir", sweep_dir.to_str().unwrap(), "--param", "T", "--values", "40"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["regret.csv", "alpha.csv", "zero_allocations.csv", "social_cost.csv", "runs.csv", "summary.json"] {
        assert_eq!(
            fs::read(tmp.path().join("out").join(name)).unwrap(),
            fs::read(sweep_dir.join("T=40").join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(header(&sweep_dir.join("sweep.csv")), strings(&golden()["csv"]["sweep.csv"]));
}

#[test]
fn sweep_over_actions() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("alpha_hat = 4.0", "alpha_hat_fraction = 0.7")
        .replace(r#"arms = ["full_information", "bandit", "extended_true"]"#, r#"arms = ["extended_true"]"#);
    let config = write_config(tmp.path(), &text);
    let dir = tmp.path().join("sweep");
    let o = bin()
        .args(["sweep", "--config", &config, "--out-dir", dir.to_str().unwrap(), "--param", "K", "--values", "3,5"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.join("sweep.csv")).unwrap();
    let values: Vec<String> = r.records().map(|rec| rec.unwrap()[1].to_string()).collect();
    assert_eq!(values, ["3", "5"]);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["sweep"]["param"], "K");

    let o = bin()
        .args(["sweep", "--config", &config, "--out-dir", dir.to_str().unwrap(), "--param", "bogus", "--values", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
