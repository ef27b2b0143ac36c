//! Dirac–Sobolev inequalities on the unit ball: trial functions, ratios,
//! lower-bound search for the best constants, and the two heat-semigroup
//! estimates used in their proof.
//!
//! Every ratio is computed on cutoff-Gaussian trial functions only. A large
//! ratio is a certified lower bound on the best constant at the given
//! discretization; nothing here bounds the constant from above.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::SpinorValue;
use crate::dirac::{apply_dirac, sup_norm, DerivativeMethod, HeatPropagator};
use crate::error::{arg, Error, Result};
use crate::grid::{make_grid, norm3, sample_field, DomainMask, GridSpec, MaskKind, SpinorField};
use crate::norms::{besov_norm, lp_value, weak_lq, WeakConvention};
use crate::zero_mode::ols_slope;

pub const MAX_BUMPS: usize = 4;
pub const MAX_CENTER: f64 = 0.9;
/// Range of the Gaussian exponent `a` used by random sampling and refinement.
pub const WIDTH_RANGE: (f64, f64) = (1.0, 40.0);
pub const GAMMA_RANGE: (f64, f64) = (0.05, 2.0);

pub const TRIAL_FAMILY: &str =
    "cutoff Gaussian bumps (at most 4) in the unit ball; the inequality is checked on this family only";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 3],
    /// Exponent `a` in `e^{-a|x-c|²}`.
    pub width: f64,
    /// Unit spinor direction.
    pub direction: [Complex64; 4],
    pub amplitude: f64,
}

/// `f(x) = Σ b_i u_i e^{-a_i|x-c_i|²} η(|x|)` with `η(r) = exp(-γ/(1-r²))` on `r < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub bumps: Vec<Bump>,
    pub gamma: f64,
}

impl TrialParams {
    pub fn validate(&self) -> Result<()> {
        if self.bumps.is_empty() || self.bumps.len() > MAX_BUMPS {
            return arg(format!("trial needs 1..={MAX_BUMPS} bumps, got {}", self.bumps.len()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return arg(format!("cutoff sharpness must be positive, got {}", self.gamma));
        }
        for (i, b) in self.bumps.iter().enumerate() {
            if !(norm3(&b.center) <= MAX_CENTER) {
                return arg(format!("bump {i}: center must satisfy |c| <= {MAX_CENTER}"));
            }
            if !(b.width > 0.0 && b.width.is_finite()) {
                return arg(format!("bump {i}: width must be positive"));
            }
            let u = SpinorValue::new(b.direction).norm();
            if (u - 1.0).abs() > 1e-9 {
                return arg(format!("bump {i}: direction has norm {u}, expected 1"));
            }
            if !b.amplitude.is_finite() {
                return arg(format!("bump {i}: amplitude must be finite"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64; 3]) -> SpinorValue {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        if r2 >= 1.0 {
            return SpinorValue::ZERO;
        }
        let eta = (-self.gamma / (1.0 - r2)).exp();
        let mut acc = SpinorValue::ZERO;
        for b in &self.bumps {
            let d2: f64 = (0..3).map(|j| (x[j] - b.center[j]).powi(2)).sum();
            let s = b.amplitude * (-b.width * d2).exp() * eta;
            acc += SpinorValue::new(b.direction).scale_real(s);
        }
        acc
    }

    /// Flat coordinates used by the simplex search: per bump the center, `ln a`,
    /// the eight real parts of the direction and the amplitude; then `ln γ`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.bumps.len() * 13 + 1);
        for b in &self.bumps {
            v.extend_from_slice(&b.center);
            v.push(b.width.ln());
            for z in b.direction {
                v.push(z.re);
                v.push(z.im);
            }
            v.push(b.amplitude);
        }
        v.push(self.gamma.ln());
        v
    }

    /// Inverse of [`TrialParams::to_vector`], projected back onto the admissible set.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        if v.len() % 13 != 1 || v.len() < 14 || v.len() > 13 * MAX_BUMPS + 1 {
            return arg(format!("parameter vector of length {} does not describe a trial", v.len()));
        }
        let bumps = v[..v.len() - 1]
            .chunks(13)
            .map(|c| {
                let mut center = [c[0], c[1], c[2]];
                let r = norm3(&center);
                if r > MAX_CENTER {
                    center = center.map(|x| x * MAX_CENTER / r);
                }
                let width = c[3].clamp(WIDTH_RANGE.0.ln(), WIDTH_RANGE.1.ln()).exp();
                let mut direction: [Complex64; 4] = std::array::from_fn(|j| Complex64::new(c[4 + 2 * j], c[5 + 2 * j]));
                let n = SpinorValue::new(direction).norm();
                if n > 1e-12 {
                    direction = direction.map(|z| z / n);
                } else {
                    direction = SpinorValue::basis(0).0;
                }
                Bump { center, width, direction, amplitude: c[12] }
            })
            .collect();
        let gamma = v[v.len() - 1].clamp(GAMMA_RANGE.0.ln(), GAMMA_RANGE.1.ln()).exp();
        Ok(TrialParams { bumps, gamma })
    }

    /// A random admissible trial.
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        let m = rng.gen_range(1..=MAX_BUMPS);
        let (lo, hi) = (WIDTH_RANGE.0.ln(), WIDTH_RANGE.1.ln());
        let bumps = (0..m)
            .map(|_| {
                let center = loop {
                    let c = [0; 3].map(|_| rng.gen_range(-MAX_CENTER..MAX_CENTER));
                    if norm3(&c) <= MAX_CENTER {
                        break c;
                    }
                };
                let width = rng.gen_range(lo..hi).exp();
                let direction = loop {
                    let d: [Complex64; 4] =
                        std::array::from_fn(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                    let n = SpinorValue::new(d).norm();
                    if n > 0.1 {
                        break d.map(|z| z / n);
                    }
                };
                let amplitude = loop {
                    let b: f64 = rng.gen_range(-1.0..1.0);
                    if b.abs() > 0.05 {
                        break b;
                    }
                };
                Bump { center, width, direction, amplitude }
            })
            .collect();
        let gamma = rng.gen_range(GAMMA_RANGE.0.ln()..GAMMA_RANGE.1.ln()).exp();
        TrialParams { bumps, gamma }
    }
}

/// `count` trials from a seeded stream.
pub fn trial_suite(seed: u64, count: usize) -> Vec<TrialParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| TrialParams::sample(&mut rng)).collect()
}

/// Samples the trial on the unit-ball cells of `grid`.
pub fn build_trial(params: &TrialParams, grid: &GridSpec) -> Result<SpinorField> {
    params.validate()?;
    if grid.half_width() < 1.0 {
        return arg(format!("trial grid must contain the unit ball, half-width is {}", grid.half_width()));
    }
    let mask = DomainMask::new(grid, MaskKind::UnitBall);
    sample_field(grid, &mask, |x: &[f64; 3]| params.eval(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `‖f‖_{q,∞} ≤ C ‖(α·p)f‖_p^θ ‖f‖_{B^{θ/(θ-1)}}^{1-θ}`, `θ = p/q`.
    Dsineq,
    /// `‖f‖_k ≤ C ‖(α·p)f‖_p^θ ‖f‖_r^{1-θ}`, `r = 3(q/p - 1)`.
    Cor1,
    /// `‖f‖_k ≤ C ‖(α·p)f‖_p`.
    Cor2,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Dsineq => "dsineq",
            Variant::Cor1 => "cor1",
            Variant::Cor2 => "cor2",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dsineq" => Ok(Variant::Dsineq),
            "cor1" => Ok(Variant::Cor1),
            "cor2" => Ok(Variant::Cor2),
            other => arg(format!("unknown inequality variant '{other}' (expected dsineq, cor1 or cor2)")),
        }
    }
}

pub const DSINEQ_RANGE: &str = "1 ≤ p < q";
pub const COR1_R_RANGE: &str = "r := 3(q/p−1) ∈ [1, p]";
pub const COR1_K_RANGE: &str = "k ∈ (0, q)";
pub const COR2_K_RANGE: &str = "k ∈ [1, p(p+3)/3)";

/// Exponents of one inequality. Fields a variant does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalitySpec {
    pub variant: Variant,
    pub p: f64,
    pub q: f64,
    pub k: f64,
}

/// Derived exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Besov exponent `θ/(θ-1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub besov_alpha: Option<f64>,
}

impl InequalitySpec {
    pub fn new(variant: Variant, p: f64, q: f64, k: f64) -> Self {
        InequalitySpec { variant, p, q, k }
    }

    pub fn validate(&self) -> Result<Exponents> {
        let (p, q, k) = (self.p, self.q, self.k);
        if !(p >= 1.0 && p.is_finite()) {
            return arg(format!("p = {p} must be a finite number >= 1"));
        }
        match self.variant {
            Variant::Dsineq => {
                if !(q > p && q.is_finite()) {
                    return arg(format!("p = {p}, q = {q} violate {DSINEQ_RANGE}"));
                }
                let theta = p / q;
                Ok(Exponents { theta: Some(theta), r: None, besov_alpha: Some(theta / (theta - 1.0)) })
            }
            Variant::Cor1 => {
                let r = 3.0 * (q / p - 1.0);
                if !(r >= 1.0 && r <= p) {
                    return arg(format!("r = {r} from p = {p}, q = {q} violates {COR1_R_RANGE}"));
                }
                if !(k > 0.0 && k < q) {
                    return arg(format!("k = {k} violates {COR1_K_RANGE} with q = {q}"));
                }
                Ok(Exponents { theta: Some(p / q), r: Some(r), besov_alpha: None })
            }
            Variant::Cor2 => {
                let top = p * (p + 3.0) / 3.0;
                if !(k >= 1.0 && k < top) {
                    return arg(format!("k = {k} violates {COR2_K_RANGE} = [1, {top}) with p = {p}"));
                }
                Ok(Exponents { theta: None, r: None, besov_alpha: None })
            }
        }
    }
}

/// Time window and sample count for the Besov factor of `dsineq`.
pub const BESOV_T_RANGE: (f64, f64) = (1e-3, 10.0);
pub const BESOV_N_T: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityRecord {
    pub variant: Variant,
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub n: usize,
    pub half_width: f64,
    pub active_cells: usize,
    pub method: DerivativeMethod,
}

/// `‖(α·p)f‖_p` over the field's mask. The derivative is spectral on the full
/// box, which is exact up to aliasing for fields vanishing near the box edge.
fn dirac_lp(f: &SpinorField, p: f64) -> Result<f64> {
    let g = *f.grid();
    let full = SpinorField::from_values(g, DomainMask::new(&g, MaskKind::FullBox), f.values().to_vec())?;
    let d = apply_dirac(&full, DerivativeMethod::SpectralPeriodic)?.restricted(f.mask());
    lp_value(&d, p)
}

/// Left side, right side and ratio of one inequality on `f`.
pub fn inequality_ratio(f: &SpinorField, spec: &InequalitySpec) -> Result<InequalityRecord> {
    let ex = spec.validate()?;
    if f.active().all(|(_, _, v)| v.norm_sqr() == 0.0) {
        return arg("inequality ratio of the zero field");
    }
    let p = spec.p;
    let dp = dirac_lp(f, p)?;
    let (lhs, rhs, q, k) = match spec.variant {
        Variant::Dsineq => {
            let theta = ex.theta.expect("dsineq has theta");
            let lhs = weak_lq(f, spec.q, WeakConvention::HomogeneousRoot)?.value;
            let alpha = ex.besov_alpha.expect("dsineq has alpha");
            let b = besov_norm(f, alpha, BESOV_T_RANGE, BESOV_N_T)?.value;
            (lhs, dp.powf(theta) * b.powf(1.0 - theta), Some(spec.q), None)
        }
        Variant::Cor1 => {
            let theta = ex.theta.expect("cor1 has theta");
            let lhs = lp_value(f, spec.k)?;
            let fr = lp_value(f, ex.r.expect("cor1 has r"))?;
            (lhs, dp.powf(theta) * fr.powf(1.0 - theta), Some(spec.q), Some(spec.k))
        }
        Variant::Cor2 => (lp_value(f, spec.k)?, dp, None, Some(spec.k)),
    };
    let ratio = lhs / rhs;
    if !ratio.is_finite() {
        return Err(Error::Domain(format!("ratio {lhs}/{rhs} is not finite")));
    }
    let g = f.grid();
    Ok(InequalityRecord {
        variant: spec.variant,
        p,
        q,
        k,
        r: ex.r,
        theta: ex.theta,
        lhs,
        rhs,
        ratio,
        n: g.n(),
        half_width: g.half_width(),
        active_cells: f.mask().count(),
        method: DerivativeMethod::SpectralPeriodic,
    })
}

/// Random starts per round of [`maximize_ratio`].
pub const ROUND_SAMPLES: usize = 40;
/// Simplex starts per round.
pub const ROUND_STARTS: usize = 5;
/// Evaluations per simplex start.
pub const START_EVALS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Random,
    Refine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub index: usize,
    pub round: usize,
    pub stage: Stage,
    /// Index of the simplex start within its round.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    pub ratio: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub params: TrialParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub spec: InequalitySpec,
    pub exponents: Exponents,
    pub budget: usize,
    pub seed: u64,
    pub family: String,
    pub best_params: TrialParams,
    pub best: InequalityRecord,
    /// Best ratio after each evaluation.
    pub trace: Vec<f64>,
    pub evaluations: Vec<Evaluation>,
}

impl SearchResult {
    /// One row per evaluation: `index,round,stage,start,ratio,lhs,rhs`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,round,stage,start,ratio,lhs,rhs\n");
        for e in &self.evaluations {
            let stage = match e.stage {
                Stage::Random => "random",
                Stage::Refine => "refine",
            };
            let start = e.start.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{:.12e},{:.12e},{:.12e}\n",
                e.index, e.round, stage, start, e.ratio, e.lhs, e.rhs
            ));
        }
        out
    }
}

fn evaluate(params: &TrialParams, grid: &GridSpec, spec: &InequalitySpec) -> Result<InequalityRecord> {
    inequality_ratio(&build_trial(params, grid)?, spec)
}

/// Descending ratio, then lexicographic on the parameter vector.
fn better(a: &Evaluation, b: &Evaluation) -> std::cmp::Ordering {
    b.ratio.total_cmp(&a.ratio).then_with(|| {
        let (va, vb) = (a.params.to_vector(), b.params.to_vector());
        va.iter()
            .zip(&vb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(va.len().cmp(&vb.len()))
    })
}

/// Nelder–Mead maximization of `objective` from `x0`, stopping after exactly
/// `cap` evaluations (or fewer if the simplex collapses). The sequence of
/// evaluated points does not depend on `cap`.
fn nelder_mead<F>(x0: &[f64], step: &[f64], cap: usize, mut objective: F) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut used = 0;
    let mut eval = |x: &[f64], used: &mut usize| -> Result<Option<f64>> {
        if *used >= cap {
            return Ok(None);
        }
        *used += 1;
        objective(x).map(Some)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let Some(f0) = eval(x0, &mut used)? else { return Ok(()) };
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let Some(f) = eval(&x, &mut used)? else { return Ok(()) };
        simplex.push((x, f));
    }
    loop {
        // maximize: sort descending
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|s| s.0[j]).sum::<f64>() / n as f64).collect();
        let along = |c: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + c * (worst.0[j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let Some(fr) = eval(&xr, &mut used)? else { return Ok(()) };
        if fr > simplex[0].1 {
            let xe = along(-2.0);
            let Some(fe) = eval(&xe, &mut used)? else { return Ok(()) };
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let xc = if fr > worst.1 { along(-0.5) } else { along(0.5) };
        let Some(fc) = eval(&xc, &mut used)? else { return Ok(()) };
        if fc > worst.1.max(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for s in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&s.0).map(|(b, y)| b + 0.5 * (y - b)).collect();
            let Some(f) = eval(&x, &mut used)? else { return Ok(()) };
            *s = (x, f);
        }
        if simplex.iter().all(|s| s.0.iter().zip(&best).all(|(a, b)| (a - b).abs() < 1e-10)) {
            return Ok(());
        }
    }
}

fn simplex_steps(v: &[f64]) -> Vec<f64> {
    let mut steps = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        steps.push(if i + 1 == v.len() {
            0.3
        } else {
            match i % 13 {
                0..=2 => 0.1,
                3 => 0.3,
                12 => 0.2 * v[i].abs().max(0.1),
                _ => 0.2,
            }
        });
    }
    steps
}

/// Multistart search for the largest ratio over the trial family.
///
/// The evaluation stream is fixed by `seed` alone and consists of rounds of
/// [`ROUND_SAMPLES`] random trials followed by [`ROUND_STARTS`] simplex runs of
/// [`START_EVALS`] evaluations from the best trials so far. `budget` only
/// truncates that stream, so the best ratio never decreases as the budget
/// grows. Random trials and simplex starts are evaluated in parallel; ties are
/// broken lexicographically on the parameters.
pub fn maximize_ratio(spec: &InequalitySpec, grid: &GridSpec, budget: usize, seed: u64) -> Result<SearchResult> {
    let exponents = spec.validate()?;
    if budget < 100 {
        return arg(format!("search budget must be at least 100 evaluations, got {budget}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evals: Vec<Evaluation> = Vec::with_capacity(budget);
    let mut round = 0;
    while evals.len() < budget {
        let batch: Vec<TrialParams> = (0..ROUND_SAMPLES).map(|_| TrialParams::sample(&mut rng)).collect();
        let take = ROUND_SAMPLES.min(budget - evals.len());
        let records: Vec<InequalityRecord> =
            batch[..take].par_iter().map(|p| evaluate(p, grid, spec)).collect::<Result<_>>()?;
        for (params, rec) in batch.into_iter().zip(records) {
            evals.push(Evaluation {
                index: evals.len(),
                round,
                stage: Stage::Random,
                start: None,
                ratio: rec.ratio,
                lhs: rec.lhs,
                rhs: rec.rhs,
                params,
            });
        }
        let remaining = budget - evals.len();
        if remaining == 0 {
            break;
        }
        let mut ranked: Vec<&Evaluation> = evals.iter().collect();
        ranked.sort_by(|a, b| better(a, b));
        let starts: Vec<TrialParams> = ranked.iter().take(ROUND_STARTS).map(|e| e.params.clone()).collect();
        let runs: Vec<Vec<(TrialParams, InequalityRecord)>> = starts
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let cap = START_EVALS.min(remaining.saturating_sub(i * START_EVALS));
                let mut seen = Vec::with_capacity(cap);
                let x0 = p.to_vector();
                nelder_mead(&x0, &simplex_steps(&x0), cap, |x| {
                    let params = TrialParams::from_vector(x)?;
                    let rec = evaluate(&params, grid, spec)?;
                    let r = rec.ratio;
                    seen.push((params, rec));
                    Ok(r)
                })?;
                Ok(seen)
            })
            .collect::<Result<_>>()?;
        for (start, run) in runs.into_iter().enumerate() {
            for (params, rec) in run {
                evals.push(Evaluation {
                    index: evals.len(),
                    round,
                    stage: Stage::Refine,
                    start: Some(start),
                    ratio: rec.ratio,
                    lhs: rec.lhs,
                    rhs: rec.rhs,
                    params,
                });
            }
        }
        round += 1;
    }
    evals.truncate(budget);
    let mut trace = Vec::with_capacity(evals.len());
    let mut best_idx = 0;
    for (i, e) in evals.iter().enumerate() {
        if better(e, &evals[best_idx]).is_lt() {
            best_idx = i;
        }
        trace.push(evals[best_idx].ratio);
    }
    let best_params = evals[best_idx].params.clone();
    let best = evaluate(&best_params, grid, spec)?;
    Ok(SearchResult {
        spec: *spec,
        exponents,
        budget,
        seed,
        family: TRIAL_FAMILY.into(),
        best_params,
        best,
        trace,
        evaluations: evals,
    })
}

/// Centered Gaussians `e^{-|x|²/w²} e₁`, each on its own full box of
/// half-width `5w` with `n` points per axis.
pub fn gaussian_suite(widths: &[f64], n: usize) -> Result<Vec<SpinorField>> {
    widths
        .iter()
        .map(|&w| {
            if !(w > 0.0 && w.is_finite()) {
                return arg(format!("suite width must be positive, got {w}"));
            }
            let g = make_grid(5.0 * w, n)?;
            let mask = DomainMask::new(&g, MaskKind::FullBox);
            sample_field(&g, &mask, |x: &[f64; 3]| {
                let r2 = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (w * w);
                SpinorValue::basis(0).scale_real((-r2).exp())
            })
        })
        .collect()
}

/// Default suite: 19 geometric widths from 0.003 to 1 at N = 32.
pub fn default_suite() -> Result<Vec<SpinorField>> {
    let widths: Vec<f64> = (0..19).map(|i| 0.003 * (1.0f64 / 0.003).powf(i as f64 / 18.0)).collect();
    gaussian_suite(&widths, 32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaFit {
    pub p: f64,
    /// Conjugate exponent `p' = p/(p-1)`; `None` stands for `∞`.
    pub p_conjugate: Option<f64>,
    pub t_grid: Vec<f64>,
    /// `max_f ‖f - P_t f‖_p / ‖(α·p)f‖_p` over the suite, per `t`.
    pub envelope: Vec<f64>,
    /// `max_t envelope(t)/√t`.
    pub fitted_c: f64,
    /// Log-log slope of the envelope in `t`.
    pub slope: f64,
    /// `max_g ‖(α·p)P_s g‖_{p'} / ‖g‖_{p'}` over the suite, per `s` (same grid).
    pub smoothing_envelope: Vec<f64>,
    /// `max_s √s · smoothing_envelope(s)`.
    pub smoothing_c: f64,
    pub smoothing_slope: f64,
    /// Suite member attaining the envelope at each `t`.
    pub argmax: Vec<usize>,
}

fn norm_p(f: &SpinorField, p: Option<f64>) -> Result<f64> {
    match p {
        Some(p) => lp_value(f, p),
        None => sup_norm(f),
    }
}

/// Fits the two semigroup estimates over `suite` and `t_grid`.
///
/// For each `t` the ratio `‖f - P_t f‖_p / ‖(α·p)f‖_p` is maximized over the
/// suite; when the suite contains members of every width near `√t` this
/// envelope scales like `√t`, and its maximum over `t` of `envelope/√t` is the
/// fitted constant. The smoothing estimate is treated the same way.
pub fn lemma_constant_fit(suite: &[SpinorField], p: f64, t_grid: &[f64]) -> Result<LemmaFit> {
    if suite.is_empty() {
        return arg("lemma fit needs a nonempty suite");
    }
    if !(p >= 1.0 && p.is_finite()) {
        return arg(format!("lemma fit needs finite p >= 1, got {p}"));
    }
    if t_grid.len() < 3 || t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return arg("lemma fit needs at least 3 positive times");
    }
    let pc = (p > 1.0).then(|| p / (p - 1.0));
    let rows: Vec<(Vec<f64>, Vec<f64>)> = suite
        .par_iter()
        .map(|f| {
            let g = *f.grid();
            let full = SpinorField::from_values(g, DomainMask::new(&g, MaskKind::FullBox), f.values().to_vec())?;
            let df = lp_value(&apply_dirac(&full, DerivativeMethod::SpectralPeriodic)?, p)?;
            let fpc = norm_p(&full, pc)?;
            if !(df > 0.0) || !(fpc > 0.0) {
                return arg("suite member is constant or zero");
            }
            let prop = HeatPropagator::new(&full);
            let mut a = Vec::with_capacity(t_grid.len());
            let mut b = Vec::with_capacity(t_grid.len());
            for &t in t_grid {
                let pt = prop.propagate(t)?.field;
                a.push(lp_value(&full.difference(&pt)?, p)? / df);
                b.push(norm_p(&prop.propagate_dirac(t)?.field, pc)? / fpc);
            }
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let mut envelope = vec![0.0f64; t_grid.len()];
    let mut smoothing_envelope = vec![0.0f64; t_grid.len()];
    let mut argmax = vec![0; t_grid.len()];
    for (m, (a, b)) in rows.iter().enumerate() {
        for i in 0..t_grid.len() {
            if a[i] > envelope[i] {
                envelope[i] = a[i];
                argmax[i] = m;
            }
            smoothing_envelope[i] = smoothing_envelope[i].max(b[i]);
        }
    }
    let lt: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let le: Vec<f64> = envelope.iter().map(|e| e.ln()).collect();
    let ls: Vec<f64> = smoothing_envelope.iter().map(|e| e.ln()).collect();
    let fitted_c = t_grid.iter().zip(&envelope).map(|(t, e)| e / t.sqrt()).fold(0.0, f64::max);
    let smoothing_c = t_grid.iter().zip(&smoothing_envelope).map(|(t, e)| e * t.sqrt()).fold(0.0, f64::max);
    Ok(LemmaFit {
        p,
        p_conjugate: pc,
        t_grid: t_grid.to_vec(),
        slope: ols_slope(&lt, &le).0,
        smoothing_slope: ols_slope(&lt, &ls).0,
        envelope,
        fitted_c,
        smoothing_envelope,
        smoothing_c,
        argmax,
    })
}
