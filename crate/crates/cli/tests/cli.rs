use std::fs;
use std::path::Path;
use std::process::Command;

use dslab_cli::{run, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS};
use serde_json::Value;

fn dslab(args: &[&str]) -> dslab_cli::Outcome {
    run(std::iter::once("dslab").chain(args.iter().copied()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn algebra_verify_with_defaults_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dslab(&["algebra-verify", "--out", &out_arg(dir.path())]);
    assert_eq!(o.code, EXIT_PASS, "{}", o.stderr);
    let r = json(&dir.path().join("report.json"));
    assert!(r["details"]["max_error"].as_f64().unwrap() <= 1e-13);
    assert_eq!(r["details"]["anticommutators"].as_array().unwrap().len(), 9);
}

#[test]
fn theorem3_range_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dslab(&["zero-mode", "theorem3", "--k", "3.5", "--out", &out_arg(&dir.path().join("x"))]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("k ∈ [1,10/3)"), "{}", o.stderr);
    assert!(!dir.path().join("x").exists());
}

#[test]
fn bad_configs_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "grid_n = 16\nsmoothing = 2\n").unwrap();
    let o = dslab(&["norms", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("`smoothing`"), "{}", o.stderr);
    let o = dslab(&["norms", "--grid-n", "sixteen"]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("`grid_n`"));
    let o = dslab(&["norms", "--grid-n", "15"]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("grid_n"));
    assert_eq!(dslab(&["no-such-command"]).code, EXIT_CONFIG);
    assert_eq!(dslab(&["zero-mode"]).code, EXIT_CONFIG);
    let o = dslab(&["zero-mode", "theorem4", "--t", "1.1"]);
    assert!(o.code == EXIT_CONFIG && o.stderr.contains("0 < t < 11/10"));
    let o = dslab(&["inequality-check", "--variant", "cor1", "--q", "4"]);
    assert!(o.code == EXIT_CONFIG && o.stderr.contains("r := 3(q/p−1) ∈ [1, p]"), "{}", o.stderr);
    let o = dslab(&["inequality-check", "--variant", "cor2", "--k", "4"]);
    assert!(o.code == EXIT_CONFIG && o.stderr.contains("k ∈ [1, p(p+3)/3)"));
}

#[test]
fn flags_override_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("grid_n = 16\ngrid_l = 3.0\np = 1.5\nout = {:?}\n", out_arg(&dir.path().join("a")))).unwrap();
    let o = dslab(&["norms", "--config", cfg.to_str().unwrap(), "--p", "2"]);
    assert_eq!(o.code, EXIT_PASS, "{}", o.stderr);
    let r = json(&dir.path().join("a/report.json"));
    assert_eq!(r["parameters"]["p"], 2.0);
    assert_eq!(r["parameters"]["grid_n"], 16);
}

#[test]
fn norms_on_sample_and_on_a_field_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = dslab(&["norms", "--p", "2", "--grid-n", "16", "--out", &out_arg(&a)]);
    assert_eq!(o.code, EXIT_PASS, "{}", o.stderr);
    let reports = json(&a.join("norms.json"));
    let lp = &reports[0];
    assert_eq!(lp["kind"], "lp");
    // ‖e^{-|x|²}‖₂ = (π/2)^{3/4}, box L = 3 holds it to rounding
    let exact = (std::f64::consts::PI / 2.0).powf(0.75);
    assert!((lp["value"].as_f64().unwrap() / exact - 1.0).abs() < 1e-3);
    let side = json(&a.join("sample.json"));
    assert_eq!(side["n"], 16);
    let b = dir.path().join("b");
    let field = a.join("sample.dslf");
    let o = dslab(&["norms", "--field", field.to_str().unwrap(), "--out", &out_arg(&b)]);
    assert_eq!(o.code, EXIT_PASS, "{}", o.stderr);
    let again = json(&b.join("norms.json"));
    assert_eq!(again[0]["value"], lp["value"]);
    let o = dslab(&["norms", "--field", dir.path().join("missing.dslf").to_str().unwrap(), "--out", &out_arg(&b)]);
    assert_eq!(o.code, EXIT_FAIL);
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // a coarse scan cannot resolve the dip at t = 1
    let o = dslab(&[
        "coupling-scan", "--grid-n", "8", "--grid-l", "2", "--t-max", "1.1", "--t-step", "0.1", "--out", &out_arg(dir.path()),
    ]);
    assert_eq!(o.code, EXIT_FAIL, "{}", o.stdout);
    let r = json(&dir.path().join("report.json"));
    assert_eq!(r["pass"], false);
    assert_eq!(json(&dir.path().join("manifest.json"))["pass"], false);
    let csv = fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(csv.starts_with("t,sigma_min,iterations,converged\n"));
    assert_eq!(csv.lines().count(), 13);
    let summary = json(&dir.path().join("scan_summary.json"));
    for key in ["floor", "dips", "runs"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
}

#[test]
fn manifest_lists_every_output_with_its_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = dslab(&["extremal-search", "--budget", "100", "--grid-n", "12", "--out", &out_arg(dir.path())]);
    assert_eq!(o.code, EXIT_PASS, "{}", o.stderr);
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(m["code_version"].as_str().unwrap().starts_with("dslab "));
    let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(listed, ["report.json", "search.csv", "search.json"]);
    for f in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(dir.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
    let meta = json(&dir.path().join("metadata.json"));
    assert!(meta["elapsed_seconds"].as_f64().unwrap() >= 0.0);
}

fn same_reports(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        if name == "metadata.json" {
            continue;
        }
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn binary_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_dslab");
    for tag in ["a", "b"] {
        let run = Command::new(exe)
            .args(["inequality-check", "--variant", "cor1", "--trials", "6", "--grid-n", "16", "--refine-n", "20"])
            .args(["--seed", "9", "--threads", "2", "--out", &out_arg(&dir.path().join(tag))])
            .output()
            .unwrap();
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    same_reports(&dir.path().join("a"), &dir.path().join("b"));
}

#[test]
fn scan_reports_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    for threads in ["1", "3"] {
        let o = dslab(&[
            "coupling-scan", "--grid-n", "8", "--grid-l", "2", "--t-max", "0.4", "--t-step", "0.2", "--threads", threads,
            "--out", &out_arg(&dir.path().join(threads)),
        ]);
        assert!(o.code != EXIT_CONFIG, "{}", o.stderr);
    }
    for name in ["scan.csv", "scan_summary.json"] {
        assert_eq!(fs::read(dir.path().join("1").join(name)).unwrap(), fs::read(dir.path().join("3").join(name)).unwrap());
    }
}
