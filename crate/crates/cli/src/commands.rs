//! One campaign per command. Each command is resolved from the config into a
//! [`Job`] first (all range checks happen there, before any output is
//! written) and then run.

use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value as Json};

use dslab::clifford::{alphas, anticommutator, clifford_residual, operator_norm, Matrix4, SpinorValue};
use dslab::dirac::DerivativeMethod;
use dslab::extremal::{
    build_trial, default_suite, inequality_ratio, lemma_constant_fit, maximize_ratio, trial_suite, InequalitySpec, Variant,
};
use dslab::grid::{make_grid, norm3, radial_profile, sample_field, DomainMask, GridSpec, MaskKind, SpinorField};
use dslab::inversion::{jacobian_check, verify_algebra_sweep, verify_transform_identity, PotentialSpec};
use dslab::norms::{besov_norm, dirac_sobolev_norm, geometric_grid, lp_norm, weak_lq, WeakConvention};
use dslab::zero_mode::{
    coupling_scan, decay_fit, exponent_condition, loss_yau_mode, loss_yau_psi, nullity_estimate, potential_ray_slope,
    residual_norm, theorem3_check, theorem4_check, validate_theorem3_k, validate_theorem4, weighted_conditions,
    ScanOptions, ShellStatistic,
};

use crate::config::{bad, ConfigError, Params};
use crate::output::{Check, OutputDir};

pub const COMMANDS: &[&str] =
    &["algebra-verify", "inversion-verify", "norms", "inequality-check", "extremal-search", "zero-mode", "coupling-scan"];

pub const ZERO_MODES: &[&str] = &["oracle", "theorem3", "theorem4", "decay", "weighted", "exponent", "nullity"];
pub const INVERSION_PARTS: &[&str] = &["all", "algebra", "transform", "jacobian"];

/// A failure while running a job; maps to exit code 1.
#[derive(Debug)]
pub struct RunError(pub String);

impl From<dslab::Error> for RunError {
    fn from(e: dslab::Error) -> Self {
        RunError(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError(e.to_string())
    }
}

type Run<T> = Result<T, RunError>;

/// Outcome of a job: report details and checks.
pub struct Finished {
    pub details: Json,
    pub checks: Vec<Check>,
}

fn cfg_err(e: dslab::Error) -> ConfigError {
    ConfigError(e.to_string())
}

fn grid(l: f64, n: usize) -> Result<GridSpec, ConfigError> {
    make_grid(l, n).map_err(|e| ConfigError(format!("grid_l/grid_n: {e}")))
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        bad(format!("key `{name}` must be positive, got {v}"))
    }
}

fn annulus(l: f64, n: usize, r_outer: f64) -> Run<SpinorField> {
    let g = make_grid(l, n)?;
    let mask = DomainMask::new(&g, MaskKind::ExteriorAnnulus { r_outer });
    Ok(sample_field(&g, &mask, loss_yau_psi)?)
}

fn to_json<T: Serialize>(v: &T) -> Json {
    serde_json::to_value(v).expect("report values serialize")
}

fn parse_potential(name: &str) -> Result<PotentialSpec, ConfigError> {
    match name {
        "loss_yau" => Ok(PotentialSpec::LossYau),
        "zero" => Ok(PotentialSpec::zero()),
        other => bad(format!("key `potential`: unknown potential {other:?} (expected loss_yau or zero)")),
    }
}

pub enum Job {
    Algebra { tol: f64 },
    Inversion(InversionJob),
    Norms(NormsJob),
    Inequality(InequalityJob),
    Lemma { p: f64, times: Vec<f64>, tol: f64 },
    Extremal { spec: InequalitySpec, grid: GridSpec, budget: usize, seed: u64 },
    ZeroMode(ZeroModeJob),
    Scan(ScanJob),
}

pub struct InversionJob {
    algebra: Option<(u64, usize, f64)>,
    transform: Option<(f64, usize, usize, f64, f64)>,
    jacobian: Option<(f64, usize, f64, f64)>,
}

pub enum FieldSource {
    File(PathBuf),
    Gaussian(GridSpec),
}

pub struct NormsJob {
    source: FieldSource,
    p: f64,
    q: f64,
    alpha: f64,
    t_range: (f64, f64),
    n_t: usize,
}

pub struct InequalityJob {
    spec: InequalitySpec,
    grid: GridSpec,
    refine: Option<GridSpec>,
    trials: usize,
    seed: u64,
    tol_scale: f64,
    tol_refine: f64,
}

pub enum ZeroModeJob {
    Oracle { l: f64, n: usize, refine_n: usize, tol_residual: f64, tol_slope: f64 },
    Theorem3 { k: f64, l: f64, n: usize, tol_tail: f64 },
    Theorem4 { t: f64, s: f64, l: f64, n: usize, tol_tail: f64 },
    Decay { l: f64, n: usize, r_min: f64, tol_slope: f64 },
    Weighted { l: f64, n: usize },
    Exponent { p: f64, t: f64, k: f64 },
    Nullity { grid: GridSpec, t: f64, threshold: f64, seed: u64 },
}

pub struct ScanJob {
    potential: PotentialSpec,
    grid: GridSpec,
    times: Vec<f64>,
    seed: u64,
    tol_dip: f64,
}

/// Default grid size for a command; the explicit `grid_n` wins.
fn n_or(p: &mut Params, default: usize) -> usize {
    p.usize("grid_n", default)
}

fn inequality_spec(p: &mut Params, variant: Variant) -> Result<InequalitySpec, ConfigError> {
    let pe = p.f64("p", 2.0);
    let spec = match variant {
        Variant::Dsineq => InequalitySpec::new(variant, pe, p.f64("q", 4.0), 0.0),
        Variant::Cor1 => InequalitySpec::new(variant, pe, p.f64("q", 10.0 / 3.0), p.f64("k", 2.0)),
        Variant::Cor2 => InequalitySpec::new(variant, pe, 0.0, p.f64("k", 2.0)),
    };
    spec.validate().map_err(cfg_err)?;
    Ok(spec)
}

/// Resolves `command` (and its mode) into a job, applying every range check.
pub fn prepare(command: &str, mode: Option<&str>, p: &mut Params) -> Result<Job, ConfigError> {
    let no_mode = |mode: Option<&str>| match mode {
        Some(m) => bad(format!("command `{command}` takes no mode, got {m:?}")),
        None => Ok(()),
    };
    match command {
        "algebra-verify" => {
            no_mode(mode)?;
            Ok(Job::Algebra { tol: positive("tol_algebra", p.f64("tol_algebra", 1e-13))? })
        }
        "inversion-verify" => {
            let part = mode.unwrap_or("all");
            if !INVERSION_PARTS.contains(&part) {
                return bad(format!("inversion-verify: unknown part {part:?} (expected one of {INVERSION_PARTS:?})"));
            }
            let all = part == "all";
            let algebra = if all || part == "algebra" {
                let samples = p.usize("samples", 10_000);
                if samples == 0 {
                    return bad("key `samples` must be at least 1");
                }
                Some((p.u64("seed", 0), samples, positive("tol_inversion", p.f64("tol_inversion", 1e-12))?))
            } else {
                None
            };
            let transform = if all || part == "transform" {
                let l = positive("grid_l", p.f64("grid_l", 4.0))?;
                if l <= 1.0 {
                    return bad(format!("key `grid_l` must exceed 1 for the exterior annulus, got {l}"));
                }
                let n = n_or(p, 64);
                let rn = p.usize("refine_n", 96);
                grid(l, n)?;
                grid(1.0, rn)?;
                Some((l, n, rn, p.f64("tol_identity", 0.05), p.f64("tol_convergence", 0.75)))
            } else {
                None
            };
            let jacobian = if all || part == "jacobian" {
                let r = p.f64("r_outer", 8.0);
                if !(r > 1.0 && r.is_finite()) {
                    return bad(format!("key `r_outer` must exceed 1, got {r}"));
                }
                let n = n_or(p, 64);
                grid(r, n)?;
                let pe = p.f64("p", 1.0);
                if !(pe > 0.75) {
                    return bad(format!("key `p` must exceed 3/4 for the |x|^-4 integrand to converge, got {pe}"));
                }
                Some((r, n, pe, p.f64("tol_jacobian", 0.02)))
            } else {
                None
            };
            Ok(Job::Inversion(InversionJob { algebra, transform, jacobian }))
        }
        "norms" => {
            no_mode(mode)?;
            let source = match p.optional_string("field") {
                Some(path) => FieldSource::File(PathBuf::from(path)),
                None => FieldSource::Gaussian(grid(p.f64("grid_l", 3.0), n_or(p, 32))?),
            };
            let pe = p.f64("p", 2.0);
            if !(pe >= 1.0) {
                return bad(format!("key `p` must be >= 1, got {pe}"));
            }
            let q = positive("q", p.f64("q", 4.0))?;
            let alpha = p.f64("alpha", -1.5);
            if !(alpha < 0.0) {
                return bad(format!("key `alpha` must be negative, got {alpha}"));
            }
            let t_range = (positive("t_min", p.f64("t_min", 1e-4))?, p.f64("t_max", 1e2));
            if !(t_range.1 > t_range.0) {
                return bad(format!("keys `t_min` < `t_max` required, got {t_range:?}"));
            }
            let n_t = p.usize("t_count", 64);
            if n_t < 16 {
                return bad(format!("key `t_count` must be at least 16, got {n_t}"));
            }
            Ok(Job::Norms(NormsJob { source, p: pe, q, alpha, t_range, n_t }))
        }
        "inequality-check" => {
            no_mode(mode)?;
            let variant = p.string("variant", "dsineq");
            if variant == "lemma" {
                let pe = p.f64("p", 2.0);
                if !(pe >= 1.0) {
                    return bad(format!("key `p` must be >= 1, got {pe}"));
                }
                let (a, b) = (positive("t_min", p.f64("t_min", 1e-4))?, p.f64("t_max", 1e-1));
                if !(b > a) {
                    return bad(format!("keys `t_min` < `t_max` required, got ({a}, {b})"));
                }
                let n_t = p.usize("t_count", 13);
                if n_t < 3 {
                    return bad(format!("key `t_count` must be at least 3, got {n_t}"));
                }
                return Ok(Job::Lemma { p: pe, times: geometric_grid(a, b, n_t), tol: p.f64("tol_fit", 0.1) });
            }
            let variant: Variant = variant.parse().map_err(|e: dslab::Error| ConfigError(format!("key `variant`: {e}")))?;
            let spec = inequality_spec(p, variant)?;
            let l = p.f64("grid_l", 1.0);
            let g = grid(l, n_or(p, 48))?;
            let rn = p.usize("refine_n", 64);
            let refine = if rn == 0 { None } else { Some(grid(l, rn)?) };
            let trials = p.usize("trials", 200);
            if trials == 0 {
                return bad("key `trials` must be at least 1");
            }
            Ok(Job::Inequality(InequalityJob {
                spec,
                grid: g,
                refine,
                trials,
                seed: p.u64("seed", 0),
                tol_scale: p.f64("tol_scale", 1e-10),
                tol_refine: p.f64("tol_refine", 0.1),
            }))
        }
        "extremal-search" => {
            no_mode(mode)?;
            let variant: Variant =
                p.string("variant", "cor2").parse().map_err(|e: dslab::Error| ConfigError(format!("key `variant`: {e}")))?;
            let spec = inequality_spec(p, variant)?;
            let g = grid(p.f64("grid_l", 1.0), n_or(p, 32))?;
            let budget = p.usize("budget", 200);
            if budget < 100 {
                return bad(format!("key `budget` must be at least 100, got {budget}"));
            }
            Ok(Job::Extremal { spec, grid: g, budget, seed: p.u64("seed", 0) })
        }
        "zero-mode" => {
            let Some(m) = mode else {
                return bad(format!("zero-mode needs a mode, one of {ZERO_MODES:?}"));
            };
            let job = match m {
                "oracle" => {
                    let l = p.f64("r_outer", 6.0);
                    let (n, rn) = (n_or(p, 64), p.usize("refine_n", 96));
                    grid(l, n)?;
                    grid(l, rn)?;
                    ZeroModeJob::Oracle {
                        l,
                        n,
                        refine_n: rn,
                        tol_residual: p.f64("tol_residual", 1e-2),
                        tol_slope: p.f64("tol_slope", 0.05),
                    }
                }
                "theorem3" => {
                    let k = p.f64("k", 3.0);
                    validate_theorem3_k(k).map_err(cfg_err)?;
                    let l = p.f64("r_outer", 8.0);
                    let n = n_or(p, 64);
                    grid(l, n)?;
                    ZeroModeJob::Theorem3 { k, l, n, tol_tail: p.f64("tol_tail", 0.05) }
                }
                "theorem4" => {
                    let (t, s) = (p.f64("t", 1.0), p.f64("s", 1.3));
                    validate_theorem4(t, s).map_err(cfg_err)?;
                    let l = p.f64("r_outer", 8.0);
                    let n = n_or(p, 64);
                    grid(l, n)?;
                    ZeroModeJob::Theorem4 { t, s, l, n, tol_tail: p.f64("tol_tail", 0.05) }
                }
                "decay" => {
                    let l = p.f64("r_outer", 8.0);
                    let n = n_or(p, 64);
                    grid(l, n)?;
                    let r_min = p.f64("r_min", 2.0);
                    if !(r_min >= 1.0 && r_min < l) {
                        return bad(format!("key `r_min` must lie in [1, r_outer), got {r_min}"));
                    }
                    ZeroModeJob::Decay { l, n, r_min, tol_slope: p.f64("tol_slope", 0.05) }
                }
                "weighted" => {
                    let l = p.f64("r_outer", 8.0);
                    let n = n_or(p, 64);
                    grid(l, n)?;
                    ZeroModeJob::Weighted { l, n }
                }
                "exponent" => {
                    let (pe, t, k) = (p.f64("p", 1.0), p.f64("t", 0.5), p.f64("k", 4.0));
                    exponent_condition(pe, t, k).map_err(cfg_err)?;
                    ZeroModeJob::Exponent { p: pe, t, k }
                }
                "nullity" => {
                    let l = p.f64("grid_l", 4.0);
                    let g = grid(l, n_or(p, 16))?;
                    let floor = PI / (2.0 * l) * 3f64.sqrt();
                    let threshold = p.f64("threshold", 0.1 * floor);
                    if !(threshold >= 0.0) {
                        return bad(format!("key `threshold` must be nonnegative, got {threshold}"));
                    }
                    ZeroModeJob::Nullity { grid: g, t: p.f64("t", 1.0), threshold, seed: p.u64("seed", 0) }
                }
                other => return bad(format!("zero-mode: unknown mode {other:?} (expected one of {ZERO_MODES:?})")),
            };
            Ok(Job::ZeroMode(job))
        }
        "coupling-scan" => {
            no_mode(mode)?;
            let potential = parse_potential(&p.string("potential", "loss_yau"))?;
            let g = grid(p.f64("grid_l", 6.0), n_or(p, 32))?;
            let (a, b) = (p.f64("t_min", 0.0), p.f64("t_max", 2.0));
            let step = positive("t_step", p.f64("t_step", 0.05))?;
            if !(b >= a) {
                return bad(format!("keys `t_min` <= `t_max` required, got ({a}, {b})"));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            if count > 100_000 {
                return bad(format!("key `t_step`: {count} couplings is too many"));
            }
            // rounded so that 0.05·i prints as the decimal it stands for
            let times = (0..count).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect();
            Ok(Job::Scan(ScanJob { potential, grid: g, times, seed: p.u64("seed", 0), tol_dip: p.f64("tol_dip", 0.1) }))
        }
        other => bad(format!("unknown command `{other}` (expected one of {COMMANDS:?})")),
    }
}

impl Job {
    pub fn run(self, out: &mut OutputDir) -> Run<Finished> {
        match self {
            Job::Algebra { tol } => algebra(tol),
            Job::Inversion(j) => inversion(j),
            Job::Norms(j) => norms(j, out),
            Job::Inequality(j) => inequality(j, out),
            Job::Lemma { p, times, tol } => lemma(p, &times, tol),
            Job::Extremal { spec, grid, budget, seed } => {
                let res = maximize_ratio(&spec, &grid, budget, seed)?;
                out.write_json("search.json", &res)?;
                out.write_bytes("search.csv", res.to_csv().as_bytes())?;
                let checks = vec![Check::holds("best_ratio_finite", res.best.ratio.is_finite())];
                Ok(Finished {
                    details: json!({ "best_ratio": res.best.ratio, "evaluations": res.evaluations.len(), "files": ["search.json", "search.csv"] }),
                    checks,
                })
            }
            Job::ZeroMode(j) => zero_mode(j),
            Job::Scan(j) => scan(j, out),
        }
    }
}

fn algebra(tol: f64) -> Run<Finished> {
    let a = alphas();
    let mut pairs = Vec::new();
    for j in 0..3 {
        for k in 0..3 {
            let target = Matrix4::diagonal(Complex64::new(if j == k { 2.0 } else { 0.0 }, 0.0));
            let err = operator_norm(&(anticommutator(&a[j], &a[k]) - target))?;
            pairs.push(json!({ "j": j + 1, "k": k + 1, "error": err }));
        }
    }
    let hermitian = a.iter().map(|m| (*m - m.adjoint()).max_abs()).fold(0.0, f64::max);
    let max = clifford_residual();
    Ok(Finished {
        details: json!({ "anticommutators": pairs, "max_error": max, "hermiticity_error": hermitian }),
        checks: vec![Check::at_most("clifford_max_error", max, tol), Check::at_most("alpha_hermitian", hermitian, tol)],
    })
}

fn inversion(j: InversionJob) -> Run<Finished> {
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    if let Some((seed, samples, tol)) = j.algebra {
        let sweep = verify_algebra_sweep(seed, samples)?;
        for r in &sweep {
            let gated = ["x_unitarity", "diagonalization", "beta_clifford", "y_homogeneity"];
            if gated.contains(&r.identity.as_str()) {
                checks.push(Check::at_most(&r.identity, r.max_error, tol));
            }
        }
        details.insert("algebra".into(), to_json(&sweep));
    }
    if let Some((l, n, rn, tol, ratio_tol)) = j.transform {
        let rule = |x: &[f64; 3]| SpinorValue::basis(0).scale_real((-norm3(x).powi(2)).exp());
        let run = |n: usize| -> Run<_> {
            Ok(verify_transform_identity(rule, l, &make_grid(l, n)?, &make_grid(1.0, n)?, DerivativeMethod::CenteredFd4)?)
        };
        let (a, b) = (run(n)?, run(rn)?);
        checks.push(Check::at_most("transform_identity_error", a.relative_error, tol));
        let ratio = b.relative_error / a.relative_error;
        checks.push(Check::at_most("transform_refinement_ratio", ratio, ratio_tol));
        details.insert("transform".into(), json!({ "field": "exp(-|x|^2) e1", "coarse": a, "fine": b, "ratio": ratio }));
    }
    if let Some((r, n, pe, tol)) = j.jacobian {
        let rule = |x: &[f64; 3]| SpinorValue::basis(0).scale_real(norm3(x).powi(-4));
        let rep = jacobian_check(rule, pe, r, &make_grid(r, n)?, &make_grid(1.0, n)?)?;
        // ∫_{1<|x|<R} |x|^{-4p} dx
        let exact = 4.0 * PI * (1.0 - r.powf(3.0 - 4.0 * pe)) / (4.0 * pe - 3.0);
        let gap_ext = (rep.exterior_integral - exact).abs() / exact;
        let gap_inv = (rep.inverted_integral - exact).abs() / exact;
        checks.push(Check::at_most("jacobian_exterior_vs_exact", gap_ext, tol));
        checks.push(Check::at_most("jacobian_inverted_vs_exact", gap_inv, tol));
        checks.push(Check::at_most("jacobian_relative_gap", rep.relative_gap, tol));
        details.insert("jacobian".into(), json!({ "field": "|x|^-4 e1", "report": rep, "exact": exact }));
    }
    Ok(Finished { details: Json::Object(details), checks })
}

fn norms(j: NormsJob, out: &mut OutputDir) -> Run<Finished> {
    let (field, source) = match &j.source {
        FieldSource::File(path) => (dslab::io::read_field(path)?, json!({ "file": path.display().to_string() })),
        FieldSource::Gaussian(g) => {
            let mask = DomainMask::new(g, MaskKind::FullBox);
            let f = sample_field(g, &mask, |x: &[f64; 3]| SpinorValue::basis(0).scale_real((-norm3(x).powi(2)).exp()))?;
            dslab::io::write_field(&out.path("sample.dslf"), &f)?;
            out.register("sample.dslf")?;
            out.register("sample.json")?;
            (f, json!({ "sample": "exp(-|x|^2) e1", "file": "sample.dslf" }))
        }
    };
    let reports = vec![
        lp_norm(&field, j.p)?,
        dirac_sobolev_norm(&field, j.p, DerivativeMethod::CenteredFd4)?,
        weak_lq(&field, j.q, WeakConvention::HomogeneousRoot)?,
        weak_lq(&field, j.q, WeakConvention::PaperLiteral)?,
        besov_norm(&field, j.alpha, j.t_range, j.n_t)?,
    ];
    out.write_json("norms.json", &reports)?;
    let finite = reports.iter().all(|r| r.value.is_finite());
    Ok(Finished {
        details: json!({ "source": source, "values": reports.iter().map(|r| json!({ "kind": r.kind, "value": r.value })).collect::<Vec<_>>(), "file": "norms.json" }),
        checks: vec![Check::holds("values_finite", finite)],
    })
}

#[derive(Serialize)]
struct TrialRow {
    index: usize,
    ratio: f64,
    lhs: f64,
    rhs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio_refined: Option<f64>,
}

fn inequality(j: InequalityJob, out: &mut OutputDir) -> Run<Finished> {
    let suite = trial_suite(j.seed, j.trials);
    let rows: Vec<TrialRow> = suite
        .par_iter()
        .enumerate()
        .map(|(index, params)| -> Run<TrialRow> {
            let rec = inequality_ratio(&build_trial(params, &j.grid)?, &j.spec)?;
            let ratio_refined = match &j.refine {
                Some(g) => Some(inequality_ratio(&build_trial(params, g)?, &j.spec)?.ratio),
                None => None,
            };
            Ok(TrialRow { index, ratio: rec.ratio, lhs: rec.lhs, rhs: rec.rhs, ratio_refined })
        })
        .collect::<Run<_>>()?;
    let scales = [Complex64::new(3.5, 0.0), Complex64::new(-0.2, 0.7)];
    let probe = suite.len().min(8);
    let deviations: Vec<f64> = suite[..probe]
        .par_iter()
        .zip(&rows[..probe])
        .map(|(params, row)| -> Run<f64> {
            let f = build_trial(params, &j.grid)?;
            let mut worst: f64 = 0.0;
            for c in scales {
                let r = inequality_ratio(&f.scaled(c), &j.spec)?.ratio;
                worst = worst.max(((r - row.ratio) / row.ratio).abs());
            }
            Ok(worst)
        })
        .collect::<Run<_>>()?;
    let scale_dev = deviations.iter().copied().fold(0.0, f64::max);
    let finite = rows.iter().filter(|r| r.ratio.is_finite() && r.ratio_refined.map_or(true, f64::is_finite)).count();
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let argmax = rows.iter().position(|r| r.ratio == max_ratio);
    let mut checks = vec![
        Check::holds("all_ratios_finite", finite == rows.len()),
        Check::at_most("scale_invariance", scale_dev, j.tol_scale),
    ];
    let mut details = json!({
        "spec": j.spec,
        "exponents": j.spec.validate()?,
        "trials": rows.len(),
        "finite": finite,
        "n": j.grid.n(),
        "half_width": j.grid.half_width(),
        "max_ratio": max_ratio,
        "argmax": argmax,
        "scale_factors": scales.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
        "scale_probe_trials": probe,
        "scale_deviation": scale_dev,
        "file": "trials.csv",
    });
    if let Some(g) = &j.refine {
        let max_ref = rows.iter().filter_map(|r| r.ratio_refined).fold(f64::NEG_INFINITY, f64::max);
        let change = (max_ref / max_ratio - 1.0).abs();
        checks.push(Check::below("max_ratio_refinement_change", change, j.tol_refine));
        details["refine_n"] = json!(g.n());
        details["max_ratio_refined"] = json!(max_ref);
        details["refinement_change"] = json!(change);
    }
    let mut csv = String::from("index,ratio,lhs,rhs,ratio_refined\n");
    for r in &rows {
        let refined = r.ratio_refined.map(|x| format!("{x:.12e}")).unwrap_or_default();
        csv.push_str(&format!("{},{:.12e},{:.12e},{:.12e},{}\n", r.index, r.ratio, r.lhs, r.rhs, refined));
    }
    out.write_bytes("trials.csv", csv.as_bytes())?;
    Ok(Finished { details, checks })
}

fn lemma(p: f64, times: &[f64], tol: f64) -> Run<Finished> {
    let fit = lemma_constant_fit(&default_suite()?, p, times)?;
    let checks = vec![
        Check::within("difference_slope", fit.slope, 0.5, tol),
        Check::within("smoothing_slope", fit.smoothing_slope, -0.5, tol),
        Check::holds("constants_finite", fit.fitted_c.is_finite() && fit.smoothing_c.is_finite()),
    ];
    Ok(Finished { details: to_json(&fit), checks })
}

fn zero_mode(j: ZeroModeJob) -> Run<Finished> {
    let ly = PotentialSpec::LossYau;
    match j {
        ZeroModeJob::Oracle { l, n, refine_n, tol_residual, tol_slope } => {
            let mode = loss_yau_mode()?;
            let coarse = annulus(l, n, l)?;
            let magnitude = coarse
                .active()
                .map(|(_, x, v)| (v.norm() - 2f64.sqrt() / (1.0 + norm3(&x).powi(2))).abs())
                .fold(0.0, f64::max);
            let r_coarse = residual_norm(&coarse, &ly, DerivativeMethod::CenteredFd4)?;
            let r_fine = residual_norm(&annulus(l, refine_n, l)?, &ly, DerivativeMethod::CenteredFd4)?;
            let dirs = [[1.0, 0.0, 0.0], [0.3, -0.5, 0.8], [0.0, 0.0, -1.0], [-1.0, 2.0, 0.5]];
            let slopes: Vec<f64> = dirs.iter().map(|&d| potential_ray_slope(&ly, d, 10.0, 100.0, 32)).collect::<Result<_, _>>()?;
            let worst = slopes.iter().copied().max_by(|a, b| (a + 2.0).abs().total_cmp(&(b + 2.0).abs())).unwrap_or(f64::NAN);
            let checks = vec![
                Check::at_most("magnitude_error", magnitude, 1e-12),
                Check::at_most("residual", r_coarse, tol_residual),
                Check::below("residual_refined", r_fine, r_coarse),
                Check::within("potential_ray_slope", worst, -2.0, tol_slope),
            ];
            Ok(Finished {
                details: json!({
                    "startup_oracle": mode.oracle,
                    "domain": format!("1 < |x| < {l}"),
                    "residuals": [[n, r_coarse], [refine_n, r_fine]],
                    "magnitude_error": magnitude,
                    "ray_window": [10.0, 100.0],
                    "ray_slopes": slopes,
                }),
                checks,
            })
        }
        ZeroModeJob::Theorem3 { k, l, n, tol_tail } => {
            let rep = theorem3_check(&annulus(l, n, l)?, k)?;
            let checks = vec![
                Check::holds("increments_decreasing_beyond_2", rep.increments_decreasing),
                Check::below("tail_fraction", rep.tail_fraction, tol_tail),
            ];
            Ok(Finished { details: to_json(&rep), checks })
        }
        ZeroModeJob::Theorem4 { t, s, l, n, tol_tail } => {
            let rep = theorem4_check(&annulus(l, n, l)?, t, s)?;
            let checks = vec![
                Check::holds("increments_decreasing_beyond_2", rep.increments_decreasing),
                Check::below("tail_fraction", rep.tail_fraction, tol_tail),
            ];
            Ok(Finished { details: to_json(&rep), checks })
        }
        ZeroModeJob::Decay { l, n, r_min, tol_slope } => {
            let prof = radial_profile(&annulus(l, n, l)?, 24)?;
            let fit = decay_fit(&prof, (r_min, l), ShellStatistic::Mean)?;
            // the same regression on the closed-form magnitude at the bin radii
            let (xs, ys): (Vec<f64>, Vec<f64>) = prof
                .bins
                .iter()
                .filter(|b| b.radius >= r_min && b.radius <= l)
                .map(|b| (b.radius.ln(), (2f64.sqrt() / (1.0 + b.radius * b.radius)).ln()))
                .unzip();
            let closed = slope(&xs, &ys);
            Ok(Finished {
                details: json!({ "fit": fit, "closed_form_slope": closed, "profile": prof }),
                checks: vec![Check::within("decay_slope", fit.slope, -2.0, tol_slope)],
            })
        }
        ZeroModeJob::Weighted { l, n } => {
            let rep = weighted_conditions(&annulus(l, n, l)?, &make_grid(1.0, n)?)?;
            let finite = |r: &dslab::zero_mode::TailReport| r.partial_integrals.iter().all(|v| v.is_finite());
            let checks = vec![
                Check::holds("derivative_weighted_finite", finite(&rep.derivative_weighted)),
                Check::holds("inverted_weighted_finite", finite(&rep.inverted_weighted)),
            ];
            Ok(Finished { details: to_json(&rep), checks })
        }
        ZeroModeJob::Exponent { p, t, k } => Ok(Finished { details: to_json(&exponent_condition(p, t, k)?), checks: Vec::new() }),
        ZeroModeJob::Nullity { grid, t, threshold, seed } => {
            let opts = ScanOptions { seed, ..Default::default() };
            let rep = nullity_estimate(&ly, t, &grid, threshold, &opts)?;
            let checks = vec![Check::holds("converged", rep.converged)];
            Ok(Finished { details: json!({ "n": grid.n(), "half_width": grid.half_width(), "report": rep }), checks })
        }
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn scan(j: ScanJob, out: &mut OutputDir) -> Run<Finished> {
    let opts = ScanOptions { seed: j.seed, ..Default::default() };
    let res = coupling_scan(&j.potential, &j.times, &j.grid, &opts)?;
    out.write_bytes("scan.csv", res.to_csv().as_bytes())?;
    out.write_json("scan_summary.json", &res.summary)?;
    let s = &res.summary;
    let mut checks = vec![
        Check::holds("perturbation_bound", s.perturbation_violations == 0),
        Check::at_most("dip_runs", s.runs.len() as f64, 2.0),
    ];
    let near = |t: f64| res.records.iter().find(|r| (r.t - t).abs() < 1e-9);
    if matches!(j.potential, PotentialSpec::LossYau) {
        if let Some(half) = near(0.5) {
            let dip = res
                .records
                .iter()
                .filter(|r| (r.t - 1.0).abs() <= 0.05 + 1e-9)
                .map(|r| r.sigma_min)
                .fold(f64::INFINITY, f64::min);
            checks.push(Check::at_most("dip_at_1_relative", dip / half.sigma_min, j.tol_dip));
        }
        let early = s.dips.iter().filter(|&&t| t <= 0.5 + 1e-9).count();
        checks.push(Check::at_most("dips_on_0_to_half", early as f64, 0.0));
    }
    Ok(Finished {
        details: json!({ "summary": s, "files": ["scan.csv", "scan_summary.json"] }),
        checks,
    })
}
