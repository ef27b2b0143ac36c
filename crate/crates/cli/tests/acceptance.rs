//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! here rather than taken from the command defaults. Exits nonzero when any
//! criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use dslab_cli::{run, EXIT_CONFIG, EXIT_PASS};
use serde_json::Value;

struct Ctx {
    root: PathBuf,
}

impl Ctx {
    /// Runs a command in-process into `root/<tag>` and returns its report.
    fn report(&self, tag: &str, args: &[&str]) -> (i32, Value) {
        let dir = self.root.join(tag);
        let mut argv = vec!["dslab"];
        argv.extend_from_slice(args);
        let dir_s = dir.to_str().unwrap().to_string();
        argv.extend_from_slice(&["--out", &dir_s]);
        let o = run(argv);
        assert!(o.code != EXIT_CONFIG, "{tag}: {}", o.stderr);
        let r = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        (o.code, r)
    }

    fn rejects(&self, args: &[&str], range: &str) -> bool {
        let o = run(std::iter::once("dslab").chain(args.iter().copied()));
        o.code == EXIT_CONFIG && o.stderr.contains(range)
    }
}

fn check<'a>(r: &'a Value, name: &str) -> &'a Value {
    r["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

fn val(r: &Value, name: &str) -> f64 {
    check(r, name)["value"].as_f64().unwrap()
}

fn ok(r: &Value, name: &str) -> bool {
    check(r, name)["pass"].as_bool().unwrap()
}

fn all_ok(r: &Value) -> bool {
    r["pass"].as_bool().unwrap()
}

fn criterion_1(c: &Ctx) -> (bool, String) {
    let t = Instant::now();
    let (code, r) = c.report("c1", &["algebra-verify", "--tol-algebra", "1e-13"]);
    let secs = t.elapsed().as_secs_f64();
    let e = val(&r, "clifford_max_error");
    (code == EXIT_PASS && e <= 1e-13 && secs < 1.0, format!("max |{{a_j,a_k}} - 2d_jk I| = {e:.2e} (<= 1e-13), {secs:.2} s (< 1 s)"))
}

fn criterion_2(c: &Ctx) -> (bool, String) {
    let t = Instant::now();
    let (_, r) = c.report("c2", &["inversion-verify", "algebra", "--samples", "10000", "--seed", "2", "--tol-inversion", "1e-12"]);
    let secs = t.elapsed().as_secs_f64();
    let names = ["x_unitarity", "diagonalization", "beta_clifford", "y_homogeneity"];
    let worst = names.iter().map(|n| val(&r, n)).fold(0.0, f64::max);
    let pass = names.iter().all(|n| ok(&r, n)) && secs < 10.0;
    (pass, format!("10^4 points, worst of X unitarity / X^-1 b X + a / b-Clifford / Y homogeneity = {worst:.2e} (<= 1e-12), {secs:.2} s (< 10 s)"))
}

fn criterion_3(c: &Ctx) -> (bool, String) {
    let t = Instant::now();
    let (_, r) = c.report(
        "c3",
        &["inversion-verify", "transform", "--grid-n", "64", "--refine-n", "96", "--grid-l", "4", "--tol-identity", "0.05", "--tol-convergence", "0.75"],
    );
    let secs = t.elapsed().as_secs_f64();
    let (e, q) = (val(&r, "transform_identity_error"), val(&r, "transform_refinement_ratio"));
    (all_ok(&r) && secs < 120.0, format!("error(N=64) = {e:.3e} (<= 0.05), error(96)/error(64) = {q:.3} (<= 0.75), {secs:.1} s (< 120 s)"))
}

fn criterion_4(c: &Ctx) -> (bool, String) {
    let (_, r) = c.report("c4", &["inversion-verify", "jacobian", "--r-outer", "8", "--grid-n", "64", "--p", "1", "--tol-jacobian", "0.02"]);
    let d = &r["details"]["jacobian"];
    let exact = d["exact"].as_f64().unwrap();
    let pass = (exact - 4.0 * std::f64::consts::PI * 7.0 / 8.0).abs() < 1e-12 && all_ok(&r);
    (
        pass,
        format!(
            "exterior vs 4pi*7/8: {:.2e}, inverted vs 4pi*7/8: {:.2e}, gap {:.2e} (each <= 0.02)",
            val(&r, "jacobian_exterior_vs_exact"),
            val(&r, "jacobian_inverted_vs_exact"),
            val(&r, "jacobian_relative_gap")
        ),
    )
}

fn criterion_5(c: &Ctx) -> (bool, String) {
    let (_, r) = c.report(
        "c5",
        &["zero-mode", "oracle", "--r-outer", "6", "--grid-n", "64", "--refine-n", "96", "--tol-residual", "1e-2", "--tol-slope", "0.05"],
    );
    let res = r["details"]["residuals"].as_array().unwrap();
    let (r64, r96) = (res[0][1].as_f64().unwrap(), res[1][1].as_f64().unwrap());
    (
        all_ok(&r),
        format!(
            "| |psi| - sqrt2/(1+r^2) | = {:.1e} (<= 1e-12), residual N=64 {r64:.2e} (<= 1e-2) -> N=96 {r96:.2e}, ray slope {:.4} (-2 +- 0.05)",
            val(&r, "magnitude_error"),
            val(&r, "potential_ray_slope")
        ),
    )
}

fn criterion_6(c: &Ctx) -> (bool, String) {
    let (_, t3) = c.report("c6a", &["zero-mode", "theorem3", "--k", "3", "--r-outer", "8", "--grid-n", "64", "--tol-tail", "0.05"]);
    let (_, t4) =
        c.report("c6b", &["zero-mode", "theorem4", "--t", "1", "--s", "1.3", "--r-outer", "8", "--grid-n", "64", "--tol-tail", "0.05"]);
    let k = format!("{}", 10.0 / 3.0);
    let s = format!("{}", 4.0 / 3.0);
    let rejected = c.rejects(&["zero-mode", "theorem3", "--k", &k], "k ∈ [1,10/3)")
        && c.rejects(&["zero-mode", "theorem4", "--t", "1.1"], "0 < t < 11/10")
        && c.rejects(&["zero-mode", "theorem4", "--s", &s], "s ∈ [1,4/3)");
    (
        all_ok(&t3) && all_ok(&t4) && rejected,
        format!(
            "tail fractions k=3: {:.4}, (t,s)=(1,1.3): {:.4} (< 0.05); increments decreasing beyond R=2: {}/{}; k=10/3, t=11/10, s=4/3 rejected: {rejected}",
            val(&t3, "tail_fraction"),
            val(&t4, "tail_fraction"),
            ok(&t3, "increments_decreasing_beyond_2"),
            ok(&t4, "increments_decreasing_beyond_2"),
        ),
    )
}

fn criterion_7(c: &Ctx) -> (bool, String) {
    let (_, r) = c.report("c7", &["zero-mode", "decay", "--r-outer", "8", "--r-min", "2", "--grid-n", "64", "--tol-slope", "0.05"]);
    let closed = r["details"]["closed_form_slope"].as_f64().unwrap();
    (
        all_ok(&r),
        format!("slope over r in [2,8] = {:.4} (-2.00 +- 0.05); closed-form |psi| gives {closed:.4} on the same shells", val(&r, "decay_slope")),
    )
}

fn criterion_8(c: &Ctx) -> (bool, String) {
    let common = ["--trials", "200", "--seed", "8", "--grid-l", "1", "--grid-n", "48", "--refine-n", "64", "--tol-scale", "1e-10", "--tol-refine", "0.1"];
    let suites: [(&str, &[&str]); 3] = [
        ("dsineq", &["--variant", "dsineq", "--p", "2", "--q", "4"]),
        ("cor1", &["--variant", "cor1", "--p", "2", "--q", "3.3333333333333335", "--k", "2"]),
        ("cor2", &["--variant", "cor2", "--p", "2", "--k", "2"]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (tag, extra) in suites {
        let mut args = vec!["inequality-check"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&common);
        let (_, r) = c.report(&format!("c8-{tag}"), &args);
        pass &= all_ok(&r);
        parts.push(format!(
            "{tag}: finite {}/200, max change {:.2}%, scale dev {:.1e}",
            r["details"]["finite"],
            100.0 * val(&r, "max_ratio_refinement_change"),
            val(&r, "scale_invariance")
        ));
    }
    (pass, format!("{} (< 10%, <= 1e-10)", parts.join("; ")))
}

fn criterion_9(c: &Ctx) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in ["1", "2"] {
        let (_, r) = c.report(
            &format!("c9-p{p}"),
            &["inequality-check", "--variant", "lemma", "--p", p, "--t-min", "1e-4", "--t-max", "1e-1", "--t-count", "13", "--tol-fit", "0.1"],
        );
        pass &= all_ok(&r);
        parts.push(format!("p={p}: slopes {:.4} / {:.4}", val(&r, "difference_slope"), val(&r, "smoothing_slope")));
    }
    (pass, format!("{} (0.5 +- 0.1 / -0.5 +- 0.1)", parts.join("; ")))
}

fn criterion_10(c: &Ctx) -> (bool, String) {
    let t = Instant::now();
    let (_, r) = c.report(
        "c10",
        &[
            "coupling-scan", "--potential", "loss_yau", "--grid-n", "32", "--grid-l", "6", "--t-min", "0", "--t-max", "2", "--t-step", "0.05",
            "--tol-dip", "0.1", "--seed", "0",
        ],
    );
    let secs = t.elapsed().as_secs_f64();
    let s = &r["details"]["summary"];
    (
        all_ok(&r) && secs < 600.0,
        format!(
            "min sigma on [0.95,1.05] / sigma(0.5) = {:.4} (<= 0.1), dips on [0,0.5]: {}, runs {} (<= 2), floor {:.4}, {secs:.0} s (< 600 s)",
            val(&r, "dip_at_1_relative"),
            val(&r, "dips_on_0_to_half"),
            s["runs"].as_array().unwrap().len(),
            s["floor"].as_f64().unwrap()
        ),
    )
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut n = 0;
    for name in names.iter().filter(|n| *n != "metadata.json") {
        if fs::read(a.join(name)).unwrap() != fs::read(b.join(name)).map_err(|e| e.to_string())? {
            return Err(format!("{} differs", a.join(name).display()));
        }
        n += 1;
    }
    Ok(n)
}

fn criterion_11(c: &Ctx) -> (bool, String) {
    let exe = env!("CARGO_BIN_EXE_dslab");
    let runs: [&[&str]; 8] = [
        &["algebra-verify"],
        &["inversion-verify", "--samples", "500", "--grid-n", "24", "--refine-n", "32"],
        &["norms", "--grid-n", "16"],
        &["inequality-check", "--variant", "dsineq", "--trials", "4", "--grid-n", "16", "--refine-n", "20"],
        &["extremal-search", "--variant", "cor1", "--budget", "100", "--grid-n", "12"],
        &["zero-mode", "theorem4", "--grid-n", "32"],
        &["zero-mode", "nullity", "--grid-n", "8"],
        &["coupling-scan", "--grid-n", "8", "--grid-l", "2", "--t-max", "0.5", "--t-step", "0.25"],
    ];
    let mut files = 0;
    for (i, args) in runs.iter().enumerate() {
        let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|s| c.root.join(format!("c11-{i}-{s}"))).collect();
        for d in &dirs {
            let o = Command::new(exe).args(*args).args(["--seed", "11", "--threads", "2", "--out", d.to_str().unwrap()]).output().unwrap();
            if o.status.code() == Some(EXIT_CONFIG) || o.status.code().is_none() {
                return (false, format!("{args:?} did not run: {}", String::from_utf8_lossy(&o.stderr)));
            }
        }
        match same_tree(&dirs[0], &dirs[1]) {
            Ok(n) => files += n,
            Err(e) => return (false, e),
        }
    }
    (true, format!("{} commands run twice with seed 11, threads 2: {files} report files byte-identical", runs.len()))
}

type Criterion = fn(&Ctx) -> (bool, String);

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let ctx = Ctx { root: tmp.path().to_path_buf() };
    let criteria: [(&str, Criterion); 11] = [
        ("Clifford suite", criterion_1),
        ("inversion algebra", criterion_2),
        ("transform identity", criterion_3),
        ("Jacobian", criterion_4),
        ("zero-mode oracle", criterion_5),
        ("weighted tail checks", criterion_6),
        ("decay fit", criterion_7),
        ("inequality suites", criterion_8),
        ("semigroup fits", criterion_9),
        ("coupling scan", criterion_10),
        ("determinism", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, msg) = match catch_unwind(AssertUnwindSafe(|| f(&ctx))) {
            Ok(r) => r,
            Err(e) => (false, format!("panicked: {}", e.downcast_ref::<String>().cloned().unwrap_or_default())),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {msg} [{:.1} s]", if pass { "PASS" } else { "FAIL" }, i + 1, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
