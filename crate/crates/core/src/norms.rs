//! Norm-type functionals of sampled spinor fields: `L^p`, the Dirac–Sobolev
//! norm, the weak-`L^q` quantity and the heat-semigroup norm `B^α`.

use serde::{Deserialize, Serialize};

use crate::dirac::{apply_dirac, heat_semigroup_direct, DerivativeMethod, HeatPropagator};
use crate::error::{arg, domain, Result};
use crate::grid::{quadrature, quadrature_terms, Integrand, MaskKind, SpinorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Lp,
    DiracSobolev,
    WeakLq,
    Besov,
}

/// Which weak-`L^q` quantity to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakConvention {
    /// `sup_u u^q λ(|f| ≥ u)`, not homogeneous in `f`.
    PaperLiteral,
    /// `(sup_u u^q λ(|f| ≥ u))^{1/q}`.
    #[default]
    HomogeneousRoot,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convention: Option<WeakConvention>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<DerivativeMethod>,
}

/// Where and how a value was computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub n: usize,
    pub half_width: f64,
    pub mask: MaskKind,
    pub active_cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
    /// Maximizing `t` (Besov) or level `u` (weak-`L^q`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax_point: Option<[f64; 3]>,
    /// Large-`t` value `t^{-α/2}(4πt)^{-3/2}‖f‖₁` at `t_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_asymptote: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub kind: NormKind,
    pub value: f64,
    pub params: NormParams,
    pub discretization: Discretization,
    pub warnings: Vec<String>,
}

impl NormReport {
    fn new(kind: NormKind, value: f64, params: NormParams, field: &SpinorField) -> Self {
        let g = field.grid();
        NormReport {
            kind,
            value,
            params,
            discretization: Discretization {
                n: g.n(),
                half_width: g.half_width(),
                mask: field.mask().kind(),
                active_cells: field.mask().count(),
                t_min: None,
                t_max: None,
                n_t: None,
                argmax: None,
                argmax_point: None,
                tail_asymptote: None,
            },
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `(∫ |f|^p)^{1/p}` for any `p > 0` (a quasi-norm below 1).
pub(crate) fn lp_value(field: &SpinorField, p: f64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return arg(format!("exponent must be positive and finite, got {p}"));
    }
    let terms = field.active().map(|(_, _, v)| {
        let m = v.norm();
        if m == 0.0 {
            0.0
        } else {
            m.powf(p)
        }
    });
    Ok(quadrature_terms(field, terms)?.powf(1.0 / p))
}

pub fn lp_norm(field: &SpinorField, p: f64) -> Result<NormReport> {
    if !(p >= 1.0 && p.is_finite()) {
        return arg(format!("L^p norm needs finite p >= 1, got {p}"));
    }
    let value = quadrature(field, Integrand::Power { p })?.powf(1.0 / p);
    let params = NormParams { p: Some(p), ..Default::default() };
    Ok(NormReport::new(NormKind::Lp, value, params, field))
}

/// `(∫ |(α·p)f|^p + |f|^p)^{1/p}`. The derivative term is integrated over the
/// cells where the chosen stencil is complete.
pub fn dirac_sobolev_norm(field: &SpinorField, p: f64, method: DerivativeMethod) -> Result<NormReport> {
    if !(p >= 1.0 && p.is_finite()) {
        return arg(format!("Dirac-Sobolev norm needs finite p >= 1, got {p}"));
    }
    let d = apply_dirac(field, method)?;
    let mut report_warnings = Vec::new();
    let deriv = if d.mask().count() == 0 {
        report_warnings.push("derivative stencil fits nowhere in the mask; derivative term is zero".into());
        0.0
    } else {
        quadrature(&d, Integrand::Power { p })?
    };
    let value = (deriv + quadrature(field, Integrand::Power { p })?).powf(1.0 / p);
    let params = NormParams { p: Some(p), method: Some(method), ..Default::default() };
    let mut report = NormReport::new(NormKind::DiracSobolev, value, params, field);
    report.warnings = report_warnings;
    Ok(report)
}

/// Empirical distribution function of `|f|`: pairs `(u, λ(|f| ≥ u))` for each
/// distinct positive magnitude, `u` decreasing and `λ` increasing.
pub fn distribution_function(field: &SpinorField) -> Vec<(f64, f64)> {
    let vol = field.grid().cell_volume();
    let mut mags: Vec<f64> = field
        .active()
        .map(|(_, _, v)| v.norm())
        .filter(|&m| m > 0.0)
        .collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &u) in mags.iter().enumerate() {
        let lambda = (i + 1) as f64 * vol;
        match out.last_mut() {
            Some(last) if last.0 == u => last.1 = lambda,
            _ => out.push((u, lambda)),
        }
    }
    out
}

/// `sup_u u^q λ(|f| ≥ u)` (optionally rooted). The sup over each piece of the
/// step function is at its left end, so the sampled magnitudes suffice.
pub fn weak_lq(field: &SpinorField, q: f64, convention: WeakConvention) -> Result<NormReport> {
    if !(q > 0.0 && q.is_finite()) {
        return arg(format!("weak-L^q needs finite q > 0, got {q}"));
    }
    if field.mask().count() == 0 {
        return domain("weak-L^q over an empty mask");
    }
    let mut best = 0.0;
    let mut arg_u = None;
    for (u, lambda) in distribution_function(field) {
        let v = u.powf(q) * lambda;
        if v > best {
            best = v;
            arg_u = Some(u);
        }
    }
    let value = match convention {
        WeakConvention::PaperLiteral => best,
        WeakConvention::HomogeneousRoot => best.powf(1.0 / q),
    };
    let params = NormParams { q: Some(q), convention: Some(convention), ..Default::default() };
    let mut report = NormReport::new(NormKind::WeakLq, value, params, field);
    report.discretization.argmax = arg_u;
    Ok(report)
}

/// Geometric grid of `n` points from `t_min` to `t_max` inclusive.
pub fn geometric_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let ratio = (t_max / t_min).ln() / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { t_max } else { t_min * (ratio * i as f64).exp() })
        .collect()
}

pub const DEFAULT_T_RANGE: (f64, f64) = (1e-4, 1e2);
pub const DEFAULT_N_T: usize = 64;

/// Largest block size dividing `n` whose width stays below `sqrt(t)/8`.
fn coarsening_for(n: usize, h: f64, t: f64) -> usize {
    let mut b = 1;
    while n % (2 * b) == 0 && n / (2 * b) >= 4 && (2 * b) as f64 * h <= t.sqrt() / 8.0 {
        b *= 2;
    }
    b
}

/// `max_t t^{-α/2} sup_Ω |P_t f|` over a geometric grid of `n_t` times, with the
/// sup taken over the active cells of the field's mask.
///
/// Times at which the kernel is resolved (`2t ≥ h²`) use direct separable
/// quadrature, banded at small `t` and on a block-coarsened copy of `f` at
/// large `t`; it has no periodicity error and is cheaper than the padded
/// transform on these grids. Smaller times use the padded spectral propagator,
/// whose wrap-around error there is negligible.
pub fn besov_norm(field: &SpinorField, alpha: f64, t_range: (f64, f64), n_t: usize) -> Result<NormReport> {
    let (t_min, t_max) = t_range;
    if !(alpha < 0.0 && alpha.is_finite()) {
        return arg(format!("Besov exponent must be negative, got {alpha}"));
    }
    if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) {
        return arg(format!("invalid time range ({t_min}, {t_max})"));
    }
    if n_t < 16 {
        return arg(format!("need at least 16 time samples, got {n_t}"));
    }
    if field.mask().count() == 0 {
        return domain("Besov norm over an empty mask");
    }
    let g = *field.grid();
    let times = geometric_grid(t_min, t_max, n_t);
    let t_switch = 0.5 * g.spacing().powi(2);
    let prop = times.iter().any(|&t| t < t_switch).then(|| HeatPropagator::new(field));
    let mut best = (0.0, times[0], [0.0; 3]);
    for &t in &times {
        let heat = match &prop {
            Some(p) if t < t_switch => p.propagate(t)?.field,
            _ => heat_semigroup_direct(field, t, coarsening_for(g.n(), g.spacing(), t))?.field,
        };
        let weight = t.powf(-alpha / 2.0);
        for (idx, x, _) in field.active() {
            let v = weight * heat.value(idx).norm();
            if v > best.0 {
                best = (v, t, x);
            }
        }
    }
    let l1 = lp_value(field, 1.0)?;
    let tail = t_max.powf(-alpha / 2.0) * (4.0 * std::f64::consts::PI * t_max).powf(-1.5) * l1;
    let params = NormParams { alpha: Some(alpha), ..Default::default() };
    let mut report = NormReport::new(NormKind::Besov, best.0, params, field);
    let d = &mut report.discretization;
    d.t_min = Some(t_min);
    d.t_max = Some(t_max);
    d.n_t = Some(n_t);
    d.argmax = Some(best.1);
    d.argmax_point = Some(best.2);
    d.tail_asymptote = Some(tail);
    if best.0 > 0.0 && (best.1 == t_min || best.1 == t_max) {
        report
            .warnings
            .push(format!("supremum attained at the boundary of the time grid (t = {:e})", best.1));
    }
    if tail >= 0.99 * best.0 && best.0 > 0.0 {
        report.warnings.push(format!(
            "large-t asymptote {tail:e} at t_max is comparable to the grid maximum; the supremum may lie beyond t_max"
        ));
    }
    if alpha <= -3.0 && l1 > 0.0 {
        report
            .warnings
            .push(format!("alpha = {alpha} <= -3: t^(-alpha/2) sup|P_t f| need not stay bounded as t grows"));
    }
    Ok(report)
}

/// `‖f‖_k / ‖f‖_{q,∞}` (rooted), the quantity bounded by the embedding
/// `L^{q,∞} ⊂ L^k` on finite-measure sets.
pub fn lorentz_embedding_ratio(field: &SpinorField, k: f64, q: f64) -> Result<f64> {
    if !(k > 0.0 && q.is_finite() && k < q) {
        return arg(format!("embedding ratio needs 0 < k < q, got k = {k}, q = {q}"));
    }
    let denom = weak_lq(field, q, WeakConvention::HomogeneousRoot)?.value;
    if denom == 0.0 {
        return domain("embedding ratio of the zero field is undefined");
    }
    Ok(lp_value(field, k)? / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::SpinorValue;
    use crate::grid::{make_grid, norm3, sample_field, DomainMask};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn ball_field(n: usize) -> SpinorField {
        let g = make_grid(1.25, n).unwrap();
        let m = DomainMask::new(&g, MaskKind::UnitBall);
        sample_field(&g, &m, |_| SpinorValue::basis(0)).unwrap()
    }

    fn bump(n: usize, l: f64) -> SpinorField {
        let g = make_grid(l, n).unwrap();
        let m = DomainMask::new(&g, MaskKind::FullBox);
        sample_field(&g, &m, |x| {
            let r2 = norm3(x).powi(2);
            SpinorValue::new([
                Complex64::new((-r2).exp(), 0.0),
                Complex64::new(0.0, 0.5 * x[0] * (-r2).exp()),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.2 * (-2.0 * r2).exp(), 0.0),
            ])
        })
        .unwrap()
    }

    #[test]
    fn indicator_of_ball() {
        let vol = 4.0 * std::f64::consts::PI / 3.0;
        // the counted volume converges to the ball volume as the grid refines
        let errs: Vec<f64> = [32, 64]
            .iter()
            .map(|&n| {
                let f = ball_field(n);
                (lp_norm(&f, 2.0).unwrap().value - vol.sqrt()).abs()
            })
            .collect();
        assert!(errs[1] < 0.02 && errs[1] < errs[0]);
        let f = ball_field(64);
        for q in [0.5, 2.0, 5.0] {
            let w = weak_lq(&f, q, WeakConvention::PaperLiteral).unwrap().value;
            assert!((w - vol).abs() < 0.02 * vol);
        }
        let r = lorentz_embedding_ratio(&f, 2.0, 3.0).unwrap();
        assert!((r - vol.sqrt() / vol.cbrt()).abs() < 0.01);
    }

    #[test]
    fn zero_field() {
        let g = make_grid(1.0, 8).unwrap();
        let f = SpinorField::zeros(g, DomainMask::new(&g, MaskKind::FullBox));
        assert_eq!(lp_norm(&f, 2.0).unwrap().value, 0.0);
        assert_eq!(weak_lq(&f, 3.0, WeakConvention::HomogeneousRoot).unwrap().value, 0.0);
        assert_eq!(besov_norm(&f, -1.0, (1e-3, 1.0), 16).unwrap().value, 0.0);
        assert!(lorentz_embedding_ratio(&f, 2.0, 3.0).is_err());
    }

    #[test]
    fn argument_checks() {
        let f = ball_field(16);
        assert!(lp_norm(&f, 0.5).is_err());
        assert!(dirac_sobolev_norm(&f, 0.5, DerivativeMethod::CenteredFd2).is_err());
        assert!(weak_lq(&f, 0.0, WeakConvention::PaperLiteral).is_err());
        assert!(besov_norm(&f, 0.5, (1e-3, 1.0), 16).is_err());
        assert!(besov_norm(&f, -1.0, (1.0, 1e-3), 16).is_err());
        assert!(besov_norm(&f, -1.0, (1e-3, 1.0), 8).is_err());
        assert!(lorentz_embedding_ratio(&f, 3.0, 3.0).is_err());
    }

    #[test]
    fn sobolev_of_constant_and_plane_wave() {
        let g = make_grid(2.0, 16).unwrap();
        let m = DomainMask::new(&g, MaskKind::FullBox);
        let c = sample_field(&g, &m, |_| SpinorValue::basis(2)).unwrap();
        let a = dirac_sobolev_norm(&c, 2.0, DerivativeMethod::SpectralPeriodic).unwrap().value;
        assert!((a - lp_norm(&c, 2.0).unwrap().value).abs() < 1e-12);
        let kv = [std::f64::consts::PI, 0.0, -std::f64::consts::PI / 2.0];
        let u = SpinorValue::new([
            Complex64::new(0.3, 0.1),
            Complex64::new(0.0, 1.0),
            Complex64::new(-0.5, 0.0),
            Complex64::new(0.2, 0.2),
        ]);
        let w = sample_field(&g, &m, |x| {
            let ph = kv[0] * x[0] + kv[1] * x[1] + kv[2] * x[2];
            u.scale(Complex64::from_polar(1.0, ph))
        })
        .unwrap();
        let k2: f64 = kv.iter().map(|k| k * k).sum();
        let expect = ((1.0 + k2) * 64.0).sqrt() * u.norm();
        let got = dirac_sobolev_norm(&w, 2.0, DerivativeMethod::SpectralPeriodic).unwrap().value;
        assert!((got - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn besov_t_grid_self_convergence() {
        let f = bump(32, 4.0);
        let a = besov_norm(&f, -3.0, (1e-3, 1e2), 32).unwrap();
        let b = besov_norm(&f, -3.0, (1e-3, 1e2), 64).unwrap();
        assert!((a.value - b.value).abs() <= 0.05 * b.value);
        // r = 1 is the borderline: the maximum sits at the large-t end and warns
        assert!(!a.warnings.is_empty());
        let c = besov_norm(&f, -1.0, DEFAULT_T_RANGE, 32).unwrap();
        let t = c.discretization.argmax.unwrap();
        assert!(t > 1e-4 && t < 1e2);
    }

    #[test]
    fn besov_large_t_matches_point_mass_limit() {
        let f = bump(32, 4.0);
        let rep = besov_norm(&f, -3.0, (1.0, 1e4), 16).unwrap();
        // t^{3/2} P_t f(0) → (4π)^{-3/2} |∫ f| for a bump that does not cancel
        let tail = rep.discretization.tail_asymptote.unwrap();
        assert!(rep.value >= tail * 0.9 && rep.value <= tail * 1.2);
    }

    #[test]
    fn homogeneity() {
        let f = bump(16, 3.0);
        let c = Complex64::new(-1.7, 2.3);
        let s = c.norm();
        let g = f.scaled(c);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        assert!(rel(lp_norm(&g, 3.0).unwrap().value, s * lp_norm(&f, 3.0).unwrap().value) < 1e-12);
        let w = |h: &SpinorField| weak_lq(h, 2.5, WeakConvention::HomogeneousRoot).unwrap().value;
        assert!(rel(w(&g), s * w(&f)) < 1e-12);
        let b = |h: &SpinorField| besov_norm(h, -1.5, (1e-2, 10.0), 16).unwrap().value;
        assert!(rel(b(&g), s * b(&f)) < 1e-12);
        let r = |h: &SpinorField| lorentz_embedding_ratio(h, 2.0, 4.0).unwrap();
        assert!(rel(r(&g), r(&f)) < 1e-12);
    }

    #[test]
    fn report_serializes() {
        let f = ball_field(16);
        let json = weak_lq(&f, 3.0, WeakConvention::PaperLiteral).unwrap().to_json().unwrap();
        let back: NormReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.kind, NormKind::WeakLq);
        assert!(json.contains("paper_literal"));
    }

    fn arb_field() -> impl Strategy<Value = SpinorField> {
        prop::collection::vec(-1.0f64..1.0, 8 * 512).prop_map(|v| {
            let g = make_grid(1.0, 8).unwrap();
            let m = DomainMask::new(&g, MaskKind::FullBox);
            let vals = v
                .chunks(8)
                .map(|c| {
                    SpinorValue::new(std::array::from_fn(|i| Complex64::new(c[2 * i], c[2 * i + 1])))
                })
                .collect();
            SpinorField::from_values(g, m, vals).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn chebyshev_and_monotone(f in arb_field(), q in 1.0f64..6.0) {
            let w = weak_lq(&f, q, WeakConvention::HomogeneousRoot).unwrap().value;
            let l = lp_norm(&f, q).unwrap().value;
            prop_assert!(w <= l * (1.0 + 1e-12));
            let dist = distribution_function(&f);
            for pair in dist.windows(2) {
                prop_assert!(pair[0].0 > pair[1].0);
                prop_assert!(pair[0].1 <= pair[1].1);
            }
        }
    }
}
