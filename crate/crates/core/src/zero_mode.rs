//! An explicit zero mode, its potential, and the decay diagnostics built on it.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{operator_norm, sigma_dot, Matrix4, SpinorValue};
use crate::dirac::{apply_dirac, DerivativeMethod};
use crate::error::{arg, domain, Error, Result};
use crate::grid::{
    compensated_sum, make_grid, norm3, sample_field, DomainMask, GridSpec, MaskKind, RadialProfile, SpinorField,
};
use crate::inversion::{random_points, transform_field, PotentialSpec};
use crate::operator::{axpy, dot, norm, pcg, scale, DiracOnBox, Vector};

/// The two-spinor `w(x) = (I + iσ·x)u₀` with `u₀ = (1, 0)`.
fn loss_yau_w(x: &[f64; 3]) -> [Complex64; 2] {
    [Complex64::new(1.0, x[2]), Complex64::new(-x[1], x[0])]
}

/// `ψ(x) = (1+|x|²)^{-3/2} (w, w)`.
pub fn loss_yau_psi(x: &[f64; 3]) -> SpinorValue {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let w = loss_yau_w(x);
    let s = (1.0 + r2).powf(-1.5);
    SpinorValue::new([w[0] * s, w[1] * s, w[0] * s, w[1] * s])
}

/// Unit vector `n = w†σw/|w|²`.
pub fn loss_yau_direction(x: &[f64; 3]) -> [f64; 3] {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let d = 1.0 + r2;
    [
        (2.0 * x[2] * x[0] - 2.0 * x[1]) / d,
        (2.0 * x[2] * x[1] + 2.0 * x[0]) / d,
        (1.0 - r2 + 2.0 * x[2] * x[2]) / d,
    ]
}

/// `Q(x) = -3/(1+|x|²) diag(σ·n, σ·n)`, so that `(α·p)ψ = -Qψ`.
pub fn loss_yau_potential(x: &[f64; 3]) -> Matrix4 {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let n = loss_yau_direction(x);
    Matrix4::block_diagonal(sigma_dot(n)).scale_real(-3.0 / (1.0 + r2))
}

/// Closed-form spinor rule.
pub type SpinorRule = fn(&[f64; 3]) -> SpinorValue;

/// Outcome of the checks run before the explicit mode is handed out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// `max | |ψ| − √2/(1+r²) |` over the sampled cells.
    pub magnitude_error: f64,
    /// Residual `‖(α·p + Q)ψ‖₂/‖ψ‖₂` on successively finer grids.
    pub residuals: Vec<(usize, f64)>,
    /// `max ‖Q(x)‖|x|` over sampled rays on `1 ≤ |x| ≤ 100`.
    pub q_times_r: f64,
}

#[derive(Debug, Clone)]
pub struct ZeroMode {
    pub psi: SpinorRule,
    pub potential: PotentialSpec,
    pub oracle: OracleReport,
}

/// The explicit zero mode `ψ` with its potential, accepted only after an
/// independent finite-difference check that `(α·p + Q)ψ → 0` under refinement.
pub fn loss_yau_mode() -> Result<ZeroMode> {
    let potential = PotentialSpec::LossYau;
    let mut residuals = Vec::new();
    let mut magnitude_error: f64 = 0.0;
    for n in [24, 32] {
        let g = make_grid(6.0, n)?;
        let mask = DomainMask::new(&g, MaskKind::ExteriorAnnulus { r_outer: 6.0 });
        let psi = sample_field(&g, &mask, loss_yau_psi)?;
        for (_, x, v) in psi.active() {
            let r2 = norm3(&x).powi(2);
            magnitude_error = magnitude_error.max((v.norm() - 2f64.sqrt() / (1.0 + r2)).abs());
        }
        residuals.push((n, residual_norm(&psi, &potential, DerivativeMethod::CenteredFd4)?));
    }
    let mut q_times_r: f64 = 0.0;
    for x in random_points(11, 256, 1.0, 100.0) {
        q_times_r = q_times_r.max(operator_norm(&potential.eval(&x))? * norm3(&x));
    }
    let oracle = OracleReport { magnitude_error, residuals, q_times_r };
    let (r0, r1) = (oracle.residuals[0].1, oracle.residuals[1].1);
    if !(magnitude_error <= 1e-12 && r1 < r0 && r1 < 0.2 && q_times_r.is_finite() && q_times_r < 10.0) {
        return Err(Error::Oracle(format!("explicit zero mode failed its checks: {oracle:?}")));
    }
    Ok(ZeroMode { psi: loss_yau_psi, potential, oracle })
}

/// `‖(α·p)ψ + Qψ‖₂ / ‖ψ‖₂` over the mask eroded by three cells (and
/// restricted to where the derivative stencil is complete).
pub fn residual_norm(psi: &SpinorField, q: &PotentialSpec, method: DerivativeMethod) -> Result<f64> {
    let g = *psi.grid();
    let d = apply_dirac(psi, method)?;
    let sub = if method == DerivativeMethod::SpectralPeriodic {
        psi.mask().clone()
    } else {
        psi.mask().eroded(&g, 3).intersect(d.mask())
    };
    if sub.count() == 0 {
        return domain("interior sub-mask is empty");
    }
    let mut num = Vec::new();
    let mut den = Vec::new();
    for idx in (0..g.len()).filter(|&i| sub.is_active(i)) {
        let x = g.point(idx);
        let v = psi.value(idx);
        num.push((d.value(idx) + q.eval(&x).apply(&v)).norm_sqr());
        den.push(v.norm_sqr());
    }
    let den = compensated_sum(den);
    if den == 0.0 {
        return arg("residual of a field that vanishes on the interior sub-mask");
    }
    Ok((compensated_sum(num) / den).sqrt())
}

/// Partial integrals of a radial weight over `1 < |x| < R_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub quantity: String,
    pub parameters: Vec<(String, f64)>,
    pub radii: Vec<f64>,
    pub partial_integrals: Vec<f64>,
    pub increments: Vec<f64>,
    /// Estimated share of the full integral beyond the last radius, from the
    /// geometric ratio of the last two increments; 1 when they do not shrink.
    pub tail_fraction: f64,
    /// Increments of the shells beyond `R = 2` strictly decrease.
    pub increments_decreasing: bool,
}

impl TailReport {
    fn build(quantity: &str, parameters: Vec<(String, f64)>, radii: Vec<f64>, partial: Vec<f64>) -> Self {
        let mut increments = Vec::with_capacity(partial.len());
        let mut prev = 0.0;
        for &p in &partial {
            increments.push(p - prev);
            prev = p;
        }
        let total = partial.last().copied().unwrap_or(0.0);
        let tail_fraction = if total == 0.0 {
            0.0
        } else if increments.len() < 2 {
            1.0
        } else {
            let a = increments[increments.len() - 2];
            let b = increments[increments.len() - 1];
            let rho = if a > 0.0 { b / a } else { f64::INFINITY };
            if rho < 1.0 {
                let tail = b * rho / (1.0 - rho);
                (tail / (total + tail)).clamp(0.0, 1.0)
            } else {
                1.0
            }
        };
        // shells whose inner radius is at least 2
        let first = radii.iter().position(|&r| r >= 2.0 * (1.0 - 1e-12)).map_or(increments.len(), |i| i + 1);
        let beyond = &increments[first.min(increments.len())..];
        let increments_decreasing = beyond.windows(2).all(|w| w[1] < w[0]);
        TailReport {
            quantity: quantity.into(),
            parameters,
            radii,
            partial_integrals: partial,
            increments,
            tail_fraction,
            increments_decreasing,
        }
    }
}

/// `R = √2, 2, 2√2, 4, …` up to and including `r_outer` (appended when it
/// is not on the sequence). Half-doublings keep the last two shells close
/// enough to the asymptotic regime for the geometric tail estimate.
fn tail_radii(r_outer: f64) -> Vec<f64> {
    let mut radii = Vec::new();
    let mut i = 1;
    loop {
        let r = 2f64.powf(0.5 * i as f64);
        if r >= r_outer * (1.0 - 1e-12) {
            break;
        }
        radii.push(r);
        i += 1;
    }
    radii.push(r_outer);
    radii
}

fn annulus_outer(field: &SpinorField) -> Result<f64> {
    match field.mask().kind() {
        MaskKind::ExteriorAnnulus { r_outer } => Ok(r_outer),
        other => arg(format!("expected a field on an exterior annulus, got {other:?}")),
    }
}

/// Partial integrals of `w(|x|, ψ(x))` over `1 < |x| < R` on the active cells.
fn radial_partials<F>(field: &SpinorField, radii: &[f64], weight: F) -> Vec<f64>
where
    F: Fn(usize, f64) -> f64,
{
    let g = field.grid();
    let mut shells = vec![Vec::new(); radii.len()];
    for (idx, x, _) in field.active() {
        let r = norm3(&x);
        if let Some(s) = radii.iter().position(|&rr| r < rr) {
            shells[s].push(weight(idx, r));
        }
    }
    let mut acc = 0.0;
    shells
        .into_iter()
        .map(|s| {
            acc += compensated_sum(s) * g.cell_volume();
            acc
        })
        .collect()
}

pub const THEOREM3_K_RANGE: &str = "k ∈ [1,10/3)";
pub const THEOREM4_T_RANGE: &str = "0 < t < 11/10";
pub const THEOREM4_S_RANGE: &str = "s ∈ [1,4/3)";

pub fn validate_theorem3_k(k: f64) -> Result<()> {
    if !(k >= 1.0 && k < 10.0 / 3.0) {
        return arg(format!("k = {k} is outside the admissible range {THEOREM3_K_RANGE}"));
    }
    Ok(())
}

pub fn validate_theorem4(t: f64, s: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.1) {
        return arg(format!("t = {t} is outside the admissible range {THEOREM4_T_RANGE}"));
    }
    if !(s >= 1.0 && s < 4.0 / 3.0) {
        return arg(format!("s = {s} is outside the admissible range {THEOREM4_S_RANGE}"));
    }
    Ok(())
}

/// With `φ = |x|²ψ`, partial integrals of `|φ|^k |x|⁻⁶` over `1 < |x| < R`.
pub fn theorem3_check(psi: &SpinorField, k: f64) -> Result<TailReport> {
    validate_theorem3_k(k)?;
    let radii = tail_radii(annulus_outer(psi)?);
    let partial = radial_partials(psi, &radii, |idx, r| (r * r * psi.value(idx).norm()).powf(k) * r.powi(-6));
    Ok(TailReport::build("phi_k_weighted", vec![("k".into(), k)], radii, partial))
}

/// With `φ = |x|^{2+t}ψ`, partial integrals of `|φ|^s |x|⁻⁶`.
pub fn theorem4_check(psi: &SpinorField, t: f64, s: f64) -> Result<TailReport> {
    validate_theorem4(t, s)?;
    let radii = tail_radii(annulus_outer(psi)?);
    let partial = radial_partials(psi, &radii, |idx, r| (r.powf(2.0 + t) * psi.value(idx).norm()).powf(s) * r.powi(-6));
    Ok(TailReport::build("phi_s_weighted", vec![("t".into(), t), ("s".into(), s)], radii, partial))
}

/// The two weighted integrability conditions for an exterior zero mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedConditions {
    /// `∫_{1<|x|<R} |x|² |(α·p)ψ|² dx`.
    pub derivative_weighted: TailReport,
    /// `∫_{1/R<|y|<1} |Ψ(y)|² |y|⁻⁶ dy` for the inverted field, indexed by `R`.
    pub inverted_weighted: TailReport,
}

pub fn weighted_conditions(psi: &SpinorField, ball: &GridSpec) -> Result<WeightedConditions> {
    let r_outer = annulus_outer(psi)?;
    let radii = tail_radii(r_outer);
    let d = apply_dirac(psi, DerivativeMethod::CenteredFd4)?;
    let partial = radial_partials(&d, &radii, |idx, r| r * r * d.value(idx).norm_sqr());
    let derivative_weighted = TailReport::build("x2_dirac_psi_sq", Vec::new(), radii.clone(), partial);
    let (big, _) = transform_field(psi, ball)?;
    // shells in y are 1/R_i < |y| < 1/R_{i-1}
    let mut shells = vec![Vec::new(); radii.len()];
    for (_, y, v) in big.active() {
        let r = 1.0 / norm3(&y);
        if let Some(s) = radii.iter().position(|&rr| r < rr) {
            shells[s].push(v.norm_sqr() * norm3(&y).powi(-6));
        }
    }
    let mut acc = 0.0;
    let partial = shells
        .into_iter()
        .map(|s| {
            acc += compensated_sum(s) * ball.cell_volume();
            acc
        })
        .collect();
    let inverted_weighted = TailReport::build("inverted_psi_sq_weighted", Vec::new(), radii, partial);
    Ok(WeightedConditions { derivative_weighted, inverted_weighted })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentCheck {
    pub p: f64,
    pub t: f64,
    pub k: f64,
    /// `p((1+t)/3 + 1/k)`
    pub lhs: f64,
    pub holds: bool,
}

/// Whether `p((1+t)/3 + 1/k) < 1`.
pub fn exponent_condition(p: f64, t: f64, k: f64) -> Result<ExponentCheck> {
    if !(p >= 1.0 && k >= 1.0 && t > 0.0 && p.is_finite() && t.is_finite()) {
        return arg(format!("exponent condition needs p >= 1, k >= 1, t > 0; got p = {p}, t = {t}, k = {k}"));
    }
    let lhs = p * ((1.0 + t) / 3.0 + 1.0 / k);
    Ok(ExponentCheck { p, t, k, lhs, holds: lhs < 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShellStatistic {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFitReport {
    pub slope: f64,
    pub standard_error: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub statistic: ShellStatistic,
    pub shells: usize,
}

/// Ordinary least squares of `log(statistic)` against `log r` over the bins
/// whose radius lies in `[r_min, r_max]`.
pub fn decay_fit(profile: &RadialProfile, range: (f64, f64), statistic: ShellStatistic) -> Result<DecayFitReport> {
    let (r_min, r_max) = range;
    let pts: Vec<(f64, f64)> = profile
        .bins
        .iter()
        .filter(|b| b.radius >= r_min && b.radius <= r_max)
        .map(|b| {
            let v = match statistic {
                ShellStatistic::Mean => b.mean,
                ShellStatistic::Max => b.max,
            };
            (b.radius, v)
        })
        .collect();
    if pts.len() < 6 {
        return Err(Error::Fit(format!("decay fit needs >= 6 shells in [{r_min}, {r_max}], found {}", pts.len())));
    }
    if let Some(bad) = pts.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::Fit(format!("nonpositive shell statistic {} at r = {}", bad.1, bad.0)));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, standard_error) = ols_slope(&xs, &ys);
    Ok(DecayFitReport { slope, standard_error, r_min, r_max, statistic, shells: pts.len() })
}

/// OLS slope and its standard error.
pub(crate) fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - icept - slope * x).powi(2)).sum();
    let se = if xs.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, se)
}

/// Log-log slope of `‖Q(x)‖` along the ray through `dir` over `[r_min, r_max]`.
pub fn potential_ray_slope(q: &PotentialSpec, dir: [f64; 3], r_min: f64, r_max: f64, samples: usize) -> Result<f64> {
    let d = norm3(&dir);
    if !(d > 0.0) || !(r_min > 0.0 && r_max > r_min) || samples < 2 {
        return arg("ray slope needs a nonzero direction, 0 < r_min < r_max and >= 2 samples");
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..samples {
        let r = r_min * (r_max / r_min).powf(i as f64 / (samples - 1) as f64);
        let x = dir.map(|c| c * r / d);
        xs.push(r.ln());
        ys.push(operator_norm(&q.eval(&x))?.ln());
    }
    Ok(ols_slope(&xs, &ys).0)
}

/// `∫ ‖Q(x)‖³ dx` over the active cells of `mask`, with `Q` continued into
/// the unit ball as in [`PotentialSpec::eval_extended`].
pub fn q_cubed_integral(q: &PotentialSpec, grid: &GridSpec, mask: &DomainMask) -> Result<f64> {
    let terms: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .filter(|&i| mask.is_active(i))
        .map(|i| operator_norm(&q.eval_extended(&grid.point(i))).map(|v| v.powi(3)))
        .collect::<Result<_>>()?;
    if mask.count() == 0 {
        return domain("empty mask");
    }
    Ok(compensated_sum(terms) * grid.cell_volume())
}

/// One point of a coupling sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub t: f64,
    pub sigma_min: f64,
    /// Outer inverse-iteration steps.
    pub iterations: usize,
    pub converged: bool,
    /// Total inner conjugate-gradient steps.
    pub inner_iterations: usize,
}

/// Solver settings shared by [`coupling_scan`] and [`nullity_estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Shift `μ` in `(H†H + μ)⁻¹`.
    pub shift: f64,
    /// Shift in the Fourier preconditioner `(|k|² + μ_p)⁻¹`.
    pub precond_shift: f64,
    /// Relative change of `σ` between outer steps that counts as converged.
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            shift: 1e-4,
            precond_shift: 1.0,
            outer_tol: 1e-5,
            inner_tol: 1e-8,
            max_outer: 60,
            max_inner: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub potential: String,
    pub n: usize,
    pub half_width: f64,
    /// `σ_min` of the free operator, computed by the same solver.
    pub floor: f64,
    /// `(π/2L)√3`.
    pub floor_exact: f64,
    pub dip_threshold: f64,
    /// Couplings with `σ_min < floor/2`.
    pub dips: Vec<f64>,
    /// Maximal runs of consecutive dip couplings, as `(first, last)`.
    pub runs: Vec<(f64, f64)>,
    pub t_at_min: f64,
    pub sigma_at_min: f64,
    /// `max_x ‖Q(x)‖` on the grid.
    pub q_sup: f64,
    /// Consecutive pairs violating `|Δσ| ≤ ‖Q‖_∞|Δt| + tolerance`.
    pub perturbation_violations: usize,
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub records: Vec<ScanRecord>,
    pub summary: ScanSummary,
}

impl ScanResult {
    /// CSV with header `t,sigma_min,iterations,converged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,sigma_min,iterations,converged\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.12e},{},{}\n", r.t, r.sigma_min, r.iterations, r.converged));
        }
        out
    }
}

fn random_unit(len: usize, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vector = (0..len)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let nv = norm(&v);
    scale(&mut v, 1.0 / nv);
    v
}

/// Inverse iteration for the smallest singular value of `H_t`, starting from `v`
/// (unit norm), which is overwritten with the converged singular vector.
fn smallest_singular(op: &DiracOnBox, t: f64, v: &mut Vector, opts: &ScanOptions) -> ScanRecord {
    let mut sigma = norm(&op.apply(v, t));
    let mut inner_total = 0;
    let mut converged = false;
    let mut outer = 0;
    let mut inner_ok = true;
    while outer < opts.max_outer {
        outer += 1;
        let mut w = v.clone();
        scale(&mut w, 1.0 / (sigma * sigma + opts.shift));
        let cg = pcg(op, t, opts.shift, opts.precond_shift, v, &mut w, opts.inner_tol, opts.max_inner);
        inner_total += cg.iterations;
        inner_ok &= cg.converged;
        let nw = norm(&w);
        scale(&mut w, 1.0 / nw);
        *v = w;
        let next = norm(&op.apply(v, t));
        let change = (next - sigma).abs();
        sigma = next;
        if change <= opts.outer_tol * sigma.max(1e-3 * op.free_floor()) {
            converged = true;
            break;
        }
    }
    ScanRecord { t, sigma_min: sigma, iterations: outer, converged: converged && inner_ok, inner_iterations: inner_total }
}

fn check_scan_grid(grid: &GridSpec) -> Result<()> {
    if grid.n() < 8 {
        return arg("coupling scan needs at least 8 points per axis");
    }
    Ok(())
}

/// `σ_min(α·p + tQ)` along `t_grid` on the antiperiodic box `grid`, with `Q`
/// continued into the unit ball by [`PotentialSpec::eval_extended`].
///
/// Couplings are visited in order and each solve starts from the previous
/// singular vector (plus a small seeded perturbation), so records are
/// reproducible for a fixed seed regardless of thread count.
pub fn coupling_scan(q: &PotentialSpec, t_grid: &[f64], grid: &GridSpec, opts: &ScanOptions) -> Result<ScanResult> {
    check_scan_grid(grid)?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !t.is_finite()) {
        return arg("coupling grid must be a nonempty list of finite values");
    }
    let op = DiracOnBox::new(grid, q);
    let mut v = random_unit(op.len(), opts.seed);
    let floor = smallest_singular(&op, 0.0, &mut v.clone(), opts).sigma_min;
    let kick = random_unit(op.len(), opts.seed.wrapping_add(1));
    let mut records = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        axpy(&mut v, Complex64::new(1e-3, 0.0), &kick);
        let nv = norm(&v);
        scale(&mut v, 1.0 / nv);
        records.push(smallest_singular(&op, t, &mut v, opts));
    }
    let dip_threshold = floor / 2.0;
    let dips: Vec<f64> = records.iter().filter(|r| r.sigma_min < dip_threshold).map(|r| r.t).collect();
    let mut runs: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for r in &records {
        if r.sigma_min < dip_threshold {
            open = Some(match open {
                Some((a, _)) => (a, r.t),
                None => (r.t, r.t),
            });
        } else if let Some(run) = open.take() {
            runs.push(run);
        }
    }
    runs.extend(open);
    let best = records
        .iter()
        .min_by(|a, b| a.sigma_min.total_cmp(&b.sigma_min))
        .copied()
        .expect("nonempty grid");
    let q_sup = op.q_sup();
    let slack = 1e-6 + opts.outer_tol * floor;
    let perturbation_violations = records
        .windows(2)
        .filter(|w| (w[1].sigma_min - w[0].sigma_min).abs() > q_sup * (w[1].t - w[0].t).abs() + slack)
        .count();
    let summary = ScanSummary {
        potential: q.name(),
        n: grid.n(),
        half_width: grid.half_width(),
        floor,
        floor_exact: op.free_floor(),
        dip_threshold,
        dips,
        runs,
        t_at_min: best.t,
        sigma_at_min: best.sigma_min,
        q_sup,
        perturbation_violations,
        unconverged: records.iter().filter(|r| !r.converged).count(),
    };
    Ok(ScanResult { records, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullityReport {
    pub t: f64,
    pub threshold: f64,
    pub count: usize,
    /// Ritz estimates of the smallest singular values, ascending.
    pub singular_values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub const NULLITY_BLOCK: usize = 6;

/// Number of singular values of `H_t` below `threshold`, from block inverse
/// iteration with Rayleigh–Ritz on `H†H` (block size [`NULLITY_BLOCK`]).
pub fn nullity_estimate(q: &PotentialSpec, t: f64, grid: &GridSpec, threshold: f64, opts: &ScanOptions) -> Result<NullityReport> {
    check_scan_grid(grid)?;
    if !(threshold >= 0.0) || !t.is_finite() {
        return arg("nullity estimate needs a finite coupling and a nonnegative threshold");
    }
    let op = DiracOnBox::new(grid, q);
    let b = NULLITY_BLOCK;
    let mut block: Vec<Vector> = (0..b).map(|i| random_unit(op.len(), opts.seed.wrapping_add(100 + i as u64))).collect();
    orthonormalize(&mut block);
    let mut theta = vec![f64::INFINITY; b];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_outer.min(40) {
        iterations += 1;
        let mut next: Vec<Vector> = Vec::with_capacity(b);
        for (i, v) in block.iter().enumerate() {
            let mut w = v.clone();
            let guess = if theta[i].is_finite() { theta[i] + opts.shift } else { 1.0 };
            scale(&mut w, 1.0 / guess);
            pcg(&op, t, opts.shift, opts.precond_shift, v, &mut w, opts.inner_tol, opts.max_inner);
            next.push(w);
        }
        orthonormalize(&mut next);
        let hv: Vec<Vector> = next.iter().map(|v| op.apply(v, t)).collect();
        let gram = DMatrix::from_fn(b, b, |i, j| dot(&hv[i], &hv[j]));
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let new_theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        block = order
            .iter()
            .map(|&col| {
                let mut acc = vec![Complex64::default(); op.len()];
                for (r, v) in next.iter().enumerate() {
                    axpy(&mut acc, eig.eigenvectors[(r, col)], v);
                }
                acc
            })
            .collect();
        let settled = new_theta
            .iter()
            .zip(&theta)
            .all(|(a, b)| (a.sqrt() - b.sqrt()).abs() <= opts.outer_tol * a.sqrt().max(1e-3 * op.free_floor()));
        theta = new_theta;
        if settled {
            converged = true;
            break;
        }
    }
    let singular_values: Vec<f64> = theta.iter().map(|l| l.sqrt()).collect();
    Ok(NullityReport {
        t,
        threshold,
        count: singular_values.iter().filter(|&&s| s < threshold).count(),
        singular_values,
        iterations,
        converged,
    })
}

fn orthonormalize(vs: &mut [Vector]) {
    for i in 0..vs.len() {
        for _ in 0..2 {
            for j in 0..i {
                let c = dot(&vs[j], &vs[i]);
                let (head, tail) = vs.split_at_mut(i);
                axpy(&mut tail[0], -c, &head[j]);
            }
        }
        let nv = norm(&vs[i]);
        scale(&mut vs[i], 1.0 / nv);
    }
}
