//! Batch runner for the dslab verification campaigns.
//!
//! `dslab <command> [mode] [--config FILE] [--key value ...]` resolves a
//! [`config::RunConfig`], runs the campaign on a worker pool of `threads`
//! threads and writes `report.json`, command-specific data files,
//! `manifest.json` and `metadata.json` to the output directory.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or the run
//! aborts, 2 for configuration errors.

pub mod commands;
pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Arg, ArgAction, Command};

use crate::commands::{prepare, Finished, COMMANDS};
use crate::config::{ConfigError, Params, RunConfig, Value, KEYS};
use crate::output::{Metadata, OutputDir, Report};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const REPORT: &str = "report.json";
pub const DEFAULT_OUT: &str = "dslab-out";

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn about(command: &str) -> &'static str {
    match command {
        "algebra-verify" => "Clifford relations of the Dirac matrices",
        "inversion-verify" => "inversion frame identities, transform identity and Jacobian (part: all, algebra, transform, jacobian)",
        "norms" => "norm report of a field file or the built-in Gaussian sample",
        "inequality-check" => "seeded trial suites for dsineq, cor1, cor2, or the semigroup fits (variant = lemma)",
        "extremal-search" => "seeded search for the largest inequality ratio",
        "zero-mode" => "checks on the explicit zero mode (oracle, theorem3, theorem4, decay, weighted, exponent, nullity)",
        "coupling-scan" => "smallest singular value of the box operator along a coupling sweep",
        _ => "",
    }
}

pub fn cli() -> Command {
    let mut root = Command::new("dslab")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Numerical verification campaigns for exterior Dirac zero modes")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for &name in COMMANDS {
        let mut sc = Command::new(name).about(about(name)).arg(
            Arg::new("config").long("config").value_name("PATH").help("flat key = value config file").action(ArgAction::Set),
        );
        if name == "zero-mode" || name == "inversion-verify" {
            sc = sc.arg(Arg::new("mode").index(1).required(name == "zero-mode").value_name("MODE"));
        }
        for k in KEYS {
            sc = sc.arg(Arg::new(k.name).long(flag_name(k.name)).value_name("VALUE").help(k.help).action(ArgAction::Set));
        }
        root = root.subcommand(sc);
    }
    root
}

/// Exit code plus the text `main` prints.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    pub out_dir: Option<PathBuf>,
}

impl Outcome {
    fn config(e: ConfigError) -> Self {
        Outcome { code: EXIT_CONFIG, stdout: String::new(), stderr: format!("configuration error: {e}\n"), out_dir: None }
    }
}

fn resolve(matches: &clap::ArgMatches) -> Result<RunConfig, ConfigError> {
    let mut cfg = match matches.get_one::<String>("config") {
        Some(path) => RunConfig::load(&PathBuf::from(path))?,
        None => RunConfig::default(),
    };
    for k in KEYS {
        if let Some(v) = matches.get_one::<String>(k.name) {
            cfg.set_text(k.name, v)?;
        }
    }
    Ok(cfg)
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let text = e.render().to_string();
            return if code == EXIT_PASS {
                Outcome { code, stdout: text, stderr: String::new(), out_dir: None }
            } else {
                Outcome { code, stdout: String::new(), stderr: text, out_dir: None }
            };
        }
    };
    let (command, sub) = matches.subcommand().expect("subcommand is required");
    let mode = sub.try_get_one::<String>("mode").ok().flatten().cloned();
    let cfg = match resolve(sub) {
        Ok(c) => c,
        Err(e) => return Outcome::config(e),
    };
    let out_dir = match cfg.get("out") {
        Some(Value::Str(s)) => PathBuf::from(s),
        _ => PathBuf::from(DEFAULT_OUT),
    };
    let threads = match cfg.get("threads") {
        Some(Value::Int(t)) => *t as usize,
        _ => 0,
    };
    let mut params = Params::new(&cfg);
    let job = match prepare(command, mode.as_deref(), &mut params) {
        Ok(j) => j,
        Err(e) => return Outcome::config(e),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => return Outcome::config(ConfigError(format!("key `threads`: {e}"))),
    };
    let mut out = match OutputDir::create(&out_dir) {
        Ok(o) => o,
        Err(e) => return Outcome::config(ConfigError(format!("key `out`: cannot create {}: {e}", out_dir.display()))),
    };

    let started = unix_ms();
    let clock = Instant::now();
    let result = pool.install(|| job.run(&mut out));
    let elapsed = clock.elapsed().as_secs_f64();

    let mut stderr = String::new();
    let finished = match result {
        Ok(f) => f,
        Err(e) => {
            stderr.push_str(&format!("{command}: run aborted: {}\n", e.0));
            Finished { details: serde_json::json!({ "error": e.0 }), checks: Vec::new() }
        }
    };
    let aborted = !stderr.is_empty();
    let pass = !aborted && finished.checks.iter().all(|c| c.pass);
    let report = Report {
        command: command.to_string(),
        mode: mode.clone(),
        parameters: params.used().clone(),
        pass,
        checks: finished.checks,
        details: finished.details,
    };
    let io = (|| -> std::io::Result<()> {
        out.write_json(REPORT, &report)?;
        let config: BTreeMap<String, Value> = cfg.values().iter().filter(|(k, _)| *k != "out").map(|(k, v)| (k.clone(), v.clone())).collect();
        let meta = Metadata {
            started_unix_ms: started,
            finished_unix_ms: unix_ms(),
            elapsed_seconds: elapsed,
            threads: pool.current_num_threads(),
        };
        out.finish(command, mode.as_deref(), &config, &cfg.hash(command, mode.as_deref()), pass, &meta)?;
        Ok(())
    })();
    if let Err(e) = io {
        stderr.push_str(&format!("{command}: cannot write reports to {}: {e}\n", out_dir.display()));
        return Outcome { code: EXIT_FAIL, stdout: String::new(), stderr, out_dir: Some(out_dir) };
    }

    let mut stdout = String::new();
    for c in &report.checks {
        stdout.push_str(&format!(
            "{} {:<36} {:.6e} {} {:?}\n",
            if c.pass { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.limit
        ));
    }
    let label = match &mode {
        Some(m) => format!("{command} {m}"),
        None => command.to_string(),
    };
    stdout.push_str(&format!(
        "{label}: {} ({} checks) -> {}\n",
        if pass { "PASS" } else { "FAIL" },
        report.checks.len(),
        out_dir.display()
    ));
    Outcome { code: if pass { EXIT_PASS } else { EXIT_FAIL }, stdout, stderr, out_dir: Some(out_dir) }
}
