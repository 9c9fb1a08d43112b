use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn negsamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negsamp"))
        .args(args)
        .env_remove("NEGSAMP_LOG")
        .env("NEGSAMP_WORKERS", "2")
        .output()
        .expect("spawn negsamp")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Generates a 20k-row normal dataset and returns its path.
fn dataset(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("data.csv");
    let o = negsamp(&["generate", "--covariate", "normal", "--n", "20000", "--seed", "11", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let missing = dir.path().join("nope.csv");
    let sub = dir.path().join("s.csv");

    // unknown flag and bad value are clap usage errors
    assert_eq!(code(&negsamp(&["generate", "--bogus"])), 2);
    assert_eq!(code(&negsamp(&["sample", "--input", p(&data), "--scheme", "uniform", "--rho", "x", "--seed", "1", "--out", p(&sub)])), 2);
    // rho outside (0, 1]
    assert_eq!(code(&negsamp(&["sample", "--input", p(&data), "--scheme", "uniform", "--rho", "1.5", "--seed", "1", "--out", p(&sub)])), 2);
    // unreadable input
    assert_eq!(code(&negsamp(&["fit", "--input", p(&missing)])), 2);

    // all-negative data cannot be fitted: numerical failure
    let neg = dir.path().join("neg.csv");
    fs::write(&neg, "y,x1\n0,0.5\n0,-1.0\n0,2.0\n0,0.1\n").unwrap();
    assert_eq!(code(&negsamp(&["fit", "--input", p(&neg)])), 1);

    // separable data
    let sep = dir.path().join("sep.csv");
    fs::write(&sep, "y,x1\n0,-2\n0,-1\n1,1\n1,2\n").unwrap();
    assert_eq!(code(&negsamp(&["fit", "--input", p(&sep)])), 1);

    // non-convergence exits 1 unless allowed
    let capped = ["fit", "--input", p(&data), "--max-iter", "1"];
    assert_eq!(code(&negsamp(&capped)), 1);
    let mut allowed = capped.to_vec();
    allowed.push("--allow-nonconverged");
    let o = negsamp(&allowed);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["converged"], false);
}

#[test]
fn uniform_rho_one_keeps_everything() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let sub = dir.path().join("u.csv");
    let o = negsamp(&["sample", "--input", p(&data), "--scheme", "uniform", "--rho", "1", "--seed", "2", "--out", p(&sub)]);
    assert_eq!(code(&o), 0);
    let rows = fs::read_to_string(&sub).unwrap().lines().count();
    assert_eq!(rows, 20_001);
    let side = json(&sub.with_extension("json"));
    assert_eq!(side["counts"]["output_rows"], 20_000);
    assert_eq!(side["pi"]["min"], 1.0);
    assert!(side["plan"]["truncation_t"].is_null());
}

#[test]
fn opt_sample_sidecar_and_missing_pilot() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let pilot = dir.path().join("pilot.json");
    let sub = dir.path().join("s.csv");

    let o = negsamp(&["sample", "--input", p(&data), "--scheme", "opt-a", "--rho", "0.01", "--seed", "3", "--out", p(&sub)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--pilot is required for scheme opt-a"));
    assert!(!sub.exists());

    assert_eq!(code(&negsamp(&["pilot", "--input", p(&data), "--seed", "4", "--out", p(&pilot)])), 0);
    let o = negsamp(&["sample", "--input", p(&data), "--scheme", "opt-a", "--rho", "0.01", "--pilot", p(&pilot), "--seed", "3", "--out", p(&sub)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let side = json(&sub.with_extension("json"));
    assert_eq!(side["plan"]["scheme"], "opt-a");
    assert_eq!(side["plan"]["rho"], 0.01);
    assert_eq!(side["plan"]["seed"], 3);
    let counts = &side["counts"];
    let pos = counts["positives"].as_u64().unwrap();
    let kept = counts["kept_negatives"].as_u64().unwrap();
    assert_eq!(counts["output_rows"].as_u64().unwrap(), pos + kept);
    assert!(kept > 0 && kept < counts["input_negatives"].as_u64().unwrap());
    let pi_min = side["pi"]["min"].as_f64().unwrap();
    assert!(pi_min > 0.0 && pi_min < 1.0);
    assert!(side["pilot"]["m_inv"].is_array());

    // positives always carry pi = 1
    let text = fs::read_to_string(&sub).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("y,pi,neg_rate,"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "1" {
            assert_eq!(f[1].parse::<f64>().unwrap(), 1.0);
        }
    }

    // same seed, same file
    let again = dir.path().join("s2.csv");
    negsamp(&["sample", "--input", p(&data), "--scheme", "opt-a", "--rho", "0.01", "--pilot", p(&pilot), "--seed", "3", "--out", p(&again)]);
    assert_eq!(fs::read(&sub).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn lik_with_unit_pi_matches_mle() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let sub = dir.path().join("u.csv");
    negsamp(&["sample", "--input", p(&data), "--scheme", "uniform", "--rho", "1", "--seed", "2", "--out", p(&sub)]);

    let fit = |input: &Path, est: &str| -> Vec<f64> {
        let o = negsamp(&["fit", "--input", p(input), "--estimator", est]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        let mut t = vec![v["theta"]["alpha"].as_f64().unwrap()];
        t.extend(v["theta"]["beta"].as_array().unwrap().iter().map(|b| b.as_f64().unwrap()));
        t
    };
    let mle = fit(&data, "mle");
    for est in ["lik", "ipw"] {
        let other = fit(&sub, est);
        for (a, b) in mle.iter().zip(&other) {
            assert!((a - b).abs() <= 1e-10, "{est}: {a} vs {b}");
        }
    }

    let o = negsamp(&["fit", "--input", p(&data), "--estimator", "ipw"]);
    assert_eq!(code(&o), 2);
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn experiment_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
        master_seed = 9
        [experiment]
        kind = "mse_sweep"
        rho_grid = [0.01, 0.02]
        methods = ["full", "uni_w", "opt_lik"]
        replications = 4
        [experiment.design]
        covariate = "normal"
        n = 20000
        "#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = negsamp(&["experiment", "--config", p(&cfg), "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = fs::read(a.join("mse_sweep.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("mse_sweep.csv")).unwrap());

    let text = String::from_utf8(csv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 2);
    // the Full column does not depend on rho
    let full: Vec<&str> = rows.iter().filter(|r| r[0] == "Full").map(|r| r[3]).collect();
    assert_eq!(full.len(), 2);
    assert_eq!(full[0], full[1]);

    let m = json(&a.join("manifest.json"));
    assert_eq!(m["kind"], "mse_sweep");
    assert_eq!(m["master_seed"], 9);
    assert_eq!(m["config"]["experiment"]["replications"], 4);
    assert!(m["runtime_secs"].as_f64().unwrap() >= 0.0);

    // seed override changes the numbers
    let c = dir.path().join("c");
    negsamp(&["experiment", "--config", p(&cfg), "--out", p(&c), "--seed", "10"]);
    assert_ne!(fs::read(c.join("mse_sweep.csv")).unwrap(), fs::read(a.join("mse_sweep.csv")).unwrap());
    assert_eq!(json(&c.join("manifest.json"))["master_seed"], 10);
}

#[test]
fn table1_rows_and_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
        master_seed = 1
        [experiment]
        kind = "table1"
        replications = 3
        "#,
    );
    let out = dir.path().join("t");
    let o = negsamp(&["experiment", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("table1.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert_eq!(lines.iter().filter(|l| l.starts_with("model,")).count(), 1);
    assert_eq!(lines.iter().filter(|l| l.starts_with("correct,")).count(), 3);
    assert_eq!(lines.iter().filter(|l| l.starts_with("misspecified,")).count(), 3);

    // no output directory anywhere
    assert_eq!(code(&negsamp(&["experiment", "--config", p(&cfg)])), 2);

    let bad = write_config(
        dir.path(),
        r#"
        master_seed = 1
        [experiment]
        kind = "table1"
        replicates = 3
        "#,
    );
    let o = negsamp(&["experiment", "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("replicates"));
}

#[test]
fn bad_worker_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "master_seed = 1\n[experiment]\nkind = \"table1\"\nreplications = 2\n");
    let o = Command::new(env!("CARGO_BIN_EXE_negsamp"))
        .args(["experiment", "--config", p(&cfg), "--out", p(dir.path())])
        .env("NEGSAMP_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
