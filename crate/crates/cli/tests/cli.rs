use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hedge_core::tree::load_document;
use serde_json::{json, Value};
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn hedge(args: &[&str], config: &Path, out: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hedge"));
    cmd.args(args).arg("--config").arg(config).arg("--out").arg(out);
    cmd.env_remove("HEDGE_EXACT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("hedge runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(value).unwrap()).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn close(a: &Value, b: f64) -> bool {
    a.as_f64().is_some_and(|a| (a - b).abs() < 1e-6)
}

#[test]
fn solve_two_models_shows_the_robust_premium() {
    let dir = TempDir::new().unwrap();
    let out = hedge(&["solve"], &fixture("solve_two_models.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["verdict"], "PASS");
    assert!(close(&report["primal"], 12.0));
    assert!(close(&report["dual"], 12.0));
    assert!(report["gap"].as_f64().unwrap() <= 1e-7);
    assert!(close(&report["individual_prices"]["theta1"], 10.0));
    assert!(close(&report["individual_prices"]["theta2"], 7.5));
    assert_eq!(report["arbitrage"]["theta1"], "no_free_lunch");
    assert_eq!(report["certificates"]["primal"]["verified"], true);
    assert_eq!(report["certificates"]["dual"]["valid"], true);
    assert!(dir.path().join("primal_cert.json").is_file());
    assert!(dir.path().join("dual_cert.json").is_file());
}

#[test]
fn exact_mode_reaches_the_same_price() {
    let dir = TempDir::new().unwrap();
    let out = hedge(&["solve"], &fixture("solve_two_models.json"), dir.path(), &[("HEDGE_EXACT", "1")]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["arithmetic"]["primal"], "exact");
    assert_eq!(report["arithmetic"]["dual"], "exact");
    assert_eq!(report["primal"].as_f64(), Some(12.0));
    assert_eq!(report["dual"].as_f64(), Some(12.0));
}

#[test]
fn saved_certificates_recheck_to_the_same_verdict() {
    let dir = TempDir::new().unwrap();
    let solved = hedge(&["solve"], &fixture("solve_two_models.json"), dir.path(), &[]);
    assert_eq!(solved.status.code(), Some(0));
    let config = write_config(
        dir.path(),
        "check.json",
        &json!({
            "mode": "check-cps",
            "input": fixture("two_models.json"),
            "cps": "dual_cert.json",
            "primal_cert": "primal_cert.json",
        }),
    );
    let first_dir = dir.path().join("first");
    let second_dir = dir.path().join("second");
    let first = hedge(&["check-cps"], &config, &first_dir, &[]);
    let second = hedge(&["check-cps"], &config, &second_dir, &[]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert_eq!(second.status.code(), first.status.code());
    let a = read_json(&first_dir.join("report.json"));
    let b = read_json(&second_dir.join("report.json"));
    assert_eq!(a, b);
    assert_eq!(a["valid"], true);
    assert_eq!(a["primal_verified"], true);
    assert!(close(&a["dual"], 12.0));
}

#[test]
fn tampered_system_fails_the_check() {
    let dir = TempDir::new().unwrap();
    hedge(&["solve"], &fixture("solve_two_models.json"), dir.path(), &[]);
    let mut cert = read_json(&dir.path().join("dual_cert.json"));
    cert["cps"]["m"]["u"] = json!(1000.0);
    std::fs::write(dir.path().join("bad.json"), cert.to_string()).unwrap();
    let config = write_config(
        dir.path(),
        "check.json",
        &json!({ "input": fixture("two_models.json"), "cps": "bad.json" }),
    );
    let out = hedge(&["check-cps"], &config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["valid"], false);
    assert!(!report["violations"].as_array().unwrap().is_empty());
}

#[test]
fn missing_leaf_claim_is_a_schema_error() {
    let dir = TempDir::new().unwrap();
    let out = hedge(&["solve"], &fixture("solve_missing_leaf.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("\"d\""), "{err}");
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn sure_up_model_has_a_free_lunch_until_costs_widen() {
    let dir = TempDir::new().unwrap();
    let out = hedge(&["detect-arbitrage"], &fixture("detect_sure_up.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["models"]["a"]["verdict"], "free_lunch");
    assert_eq!(report["models"]["a"]["verified"], true);

    let out = hedge(&["detect-arbitrage", "--lambda", "0.2"], &fixture("detect_sure_up.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["models"]["a"]["verdict"], "no_free_lunch");
    assert_eq!(report["models"]["a"]["verified"], true);
}

#[test]
fn solve_fails_on_a_free_lunch() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "solve.json",
        &json!({ "input": fixture("sure_up.json"), "claim": {"type": "call", "strike": 100} }),
    );
    let out = hedge(&["solve"], &config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["verdict"], "FAIL");
    assert!(report["primal"].is_null());
    assert_eq!(report["arbitrage"]["a"], "free_lunch");
}

#[test]
fn binomial_generator_round_trips() {
    let dir = TempDir::new().unwrap();
    let out = hedge(&["generate"], &fixture("generate_binomial.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc = load_document(&std::fs::read(dir.path().join("family.json")).unwrap()).unwrap();
    let tree = doc.family.tree();
    assert_eq!(tree.len(), 15);
    assert_eq!(doc.family.lambda(), 0.02);
    let uuu = tree.lookup("uuu").unwrap();
    assert!((doc.family.fields()[0].at(uuu) - 133.1).abs() < 1e-9);
    let claims = doc.claims.unwrap();
    let pos = tree.leaf_position(uuu).unwrap();
    assert!((claims.values(0)[pos] - 33.1).abs() < 1e-9);
}

#[test]
fn kernel_generator_puts_two_models_on_one_tree() {
    let dir = TempDir::new().unwrap();
    let out = hedge(&["generate"], &fixture("generate_kernels.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let fam = load_document(&std::fs::read(dir.path().join("family.json")).unwrap())
        .unwrap()
        .family;
    let tree = fam.tree();
    assert_eq!(tree.len(), 15);
    assert_eq!(fam.fields().len(), 2);
    let rough = fam.model("rough").unwrap();
    let flat = fam.model("flat").unwrap();
    // Along u, d, u the date-3 weights are 3^0.2, 2^0.2 and 1.
    let udu = tree.lookup("udu").unwrap();
    let expected = (0.1 * (3f64.powf(0.2) - 2f64.powf(0.2) + 1.0)).exp();
    assert!((rough.at(udu) - expected).abs() < 1e-12);
    let uuu = tree.lookup("uuu").unwrap();
    assert!((flat.at(uuu) - 100.0 * 0.3f64.exp()).abs() < 1e-9);
    assert!((flat.at(tree.root()) - 100.0).abs() < 1e-12);
}

#[test]
fn sandwich_fits_or_names_the_blocking_node() {
    let dir = TempDir::new().unwrap();
    let out = hedge(&["fit-sandwich"], &fixture("sandwich.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = read_json(&dir.path().join("report.json"));
    let m = &report["martingale"];
    let (root, u, d) = (m["root"].as_f64().unwrap(), m["u"].as_f64().unwrap(), m["d"].as_f64().unwrap());
    assert!((root - 0.5 * (u + d)).abs() < 1e-9);
    assert!((95.0..=105.0).contains(&root));

    let config = write_config(
        dir.path(),
        "tight.json",
        &json!({
            "input": fixture("sure_up.json"),
            "corridor": {
                "lower": {"root": 100, "u": 120, "d": 110},
                "upper": {"root": 100, "u": 130, "d": 125},
            },
        }),
    );
    let out = hedge(&["fit-sandwich"], &config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["feasible"], false);
    assert_eq!(report["witness"]["node"], "root");
}

#[test]
fn malformed_configs_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let both = write_config(
        dir.path(),
        "both.json",
        &json!({
            "input": fixture("two_models.json"),
            "generator": {"type": "binomial", "levels": 1, "models": []},
        }),
    );
    let unknown = write_config(dir.path(), "unknown.json", &json!({ "input": fixture("two_models.json"), "tol": 1 }));
    let no_cps = write_config(dir.path(), "no_cps.json", &json!({ "input": fixture("two_models.json") }));
    let bad_param = write_config(
        dir.path(),
        "bad_param.json",
        &json!({
            "generator": {"type": "binomial", "levels": 2, "models": [{"theta": "a", "s0": 100, "up": 0.9, "down": 0.8}]},
        }),
    );
    for (mode, config) in [("solve", &both), ("solve", &unknown), ("check-cps", &no_cps), ("generate", &bad_param)] {
        let out = hedge(&[mode], config, dir.path(), &[]);
        assert_eq!(out.status.code(), Some(2), "{mode} {}: {}", config.display(), stderr(&out));
        assert!(!stderr(&out).is_empty());
    }
    let missing = hedge(&["solve"], &dir.path().join("absent.json"), dir.path(), &[]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn gap_tolerance_comes_from_the_command_line() {
    let dir = TempDir::new().unwrap();
    let out = hedge(&["solve", "--tol-gap", "1e-3"], &fixture("solve_two_models.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["tolerances"]["gap"].as_f64(), Some(1e-3));
}
