//! Unit-sphere inversion `y = x/|x|²` of the Dirac equation: the transformed
//! matrices `β_k(y)`, the diagonalizing unitary `X(y)`, the connection term
//! `Y(y)`, the inverted potential term `Z(y)`, and numerical checks of each
//! identity in the reduction.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{alpha_dot_real, alphas, anticommutator, operator_norm, sigma_dot, Matrix4, SpinorValue};
use crate::dirac::{apply_dirac, DerivativeMethod};
use crate::error::{arg, domain, Result};
use crate::grid::{
    compensated_sum, invert_point, invert_resample, invert_resample_onto, norm3, sample_field, Coverage,
    DomainMask, GridSpec, MaskKind, SpinorField,
};
use crate::zero_mode::loss_yau_potential;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn unit(y: &[f64; 3]) -> Result<([f64; 3], f64)> {
    let r = norm3(y);
    if !(r > 0.0 && r.is_finite()) {
        return arg(format!("inversion frame needs a finite point y != 0, got {y:?}"));
    }
    Ok(([y[0] / r, y[1] / r, y[2] / r], r))
}

/// A potential `Q(x)` on the exterior of the unit ball.
#[derive(Clone)]
pub enum PotentialSpec {
    /// The potential carrying the explicit zero mode of [`crate::zero_mode`].
    LossYau,
    /// `(c/|x|) M`.
    CoulombLike { c: f64, m: Matrix4 },
    Custom {
        name: String,
        hermitian: bool,
        eval: Arc<dyn Fn(&[f64; 3]) -> Matrix4 + Send + Sync>,
    },
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::LossYau => write!(f, "LossYau"),
            PotentialSpec::CoulombLike { c, m } => write!(f, "CoulombLike {{ c: {c}, m: {m:?} }}"),
            PotentialSpec::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialSpec::CoulombLike { c: 0.0, m: Matrix4::identity() }
    }

    pub fn name(&self) -> String {
        match self {
            PotentialSpec::LossYau => "loss_yau".into(),
            PotentialSpec::CoulombLike { c, .. } => format!("coulomb_like(c={c})"),
            PotentialSpec::Custom { name, .. } => name.clone(),
        }
    }

    pub fn is_hermitian(&self) -> bool {
        match self {
            PotentialSpec::LossYau => true,
            PotentialSpec::CoulombLike { m, .. } => (*m - m.adjoint()).max_abs() <= 1e-14,
            PotentialSpec::Custom { hermitian, .. } => *hermitian,
        }
    }

    /// `Q(x)`; defined for `x != 0`, meaningful on `|x| ≥ 1`.
    pub fn eval(&self, x: &[f64; 3]) -> Matrix4 {
        match self {
            PotentialSpec::LossYau => loss_yau_potential(x),
            PotentialSpec::CoulombLike { c, m } => m.scale_real(c / norm3(x)),
            PotentialSpec::Custom { eval, .. } => eval(x),
        }
    }

    /// A bounded extension into the unit ball: singular kinds are continued
    /// constantly along rays, `Q(x/|x|)` for `|x| < 1`. The Loss–Yau potential
    /// is smooth and bounded everywhere and is used as is.
    pub fn eval_extended(&self, x: &[f64; 3]) -> Matrix4 {
        let r = norm3(x);
        match self {
            PotentialSpec::LossYau => loss_yau_potential(x),
            _ if r == 0.0 => self.eval(&[0.0, 0.0, 1.0]),
            _ if r < 1.0 => self.eval(&[x[0] / r, x[1] / r, x[2] / r]),
            _ => self.eval(x),
        }
    }

    /// `s·Q`.
    pub fn scaled(&self, s: f64) -> Self {
        let inner = self.clone();
        PotentialSpec::Custom {
            name: format!("{s}*{}", self.name()),
            hermitian: self.is_hermitian(),
            eval: Arc::new(move |x| inner.eval(x).scale_real(s)),
        }
    }
}

/// `β_k(y) = Σ_j α_j (δ_kj − 2 ω_k ω_j)`, `k ∈ {1,2,3}`.
pub fn beta_matrix(k: usize, y: &[f64; 3]) -> Result<Matrix4> {
    if !(1..=3).contains(&k) {
        return arg(format!("beta index must be 1, 2 or 3, got {k}"));
    }
    let (w, _) = unit(y)?;
    let a = alphas();
    let mut out = Matrix4::zero();
    for j in 0..3 {
        let d = if j == k - 1 { 1.0 } else { 0.0 };
        out += a[j].scale_real(d - 2.0 * w[k - 1] * w[j]);
    }
    Ok(out)
}

/// `X(y) = diag(X₂, X₂)` with `X₂ = [[iω₃, ω₂+iω₁], [−ω₂+iω₁, −iω₃]] = i σ·ω`.
pub fn x_matrix(y: &[f64; 3]) -> Result<Matrix4> {
    let (w, _) = unit(y)?;
    Ok(Matrix4::block_diagonal(sigma_dot(w).scale(I)))
}

/// `Y(y) = Σ_k α_k X⁻¹ (−i ∂_k X)`, using `∂_k ω_j = (δ_jk − ω_j ω_k)/|y|`.
pub fn y_matrix(y: &[f64; 3]) -> Result<Matrix4> {
    let (w, r) = unit(y)?;
    // X⁻¹ = X† = diag(−iσ·ω) and −i∂_k X = diag(σ·∂_kω)
    let x_inv = Matrix4::block_diagonal(sigma_dot(w).scale(-I));
    let a = alphas();
    let mut out = Matrix4::zero();
    for k in 0..3 {
        let dw: [f64; 3] = std::array::from_fn(|j| ((j == k) as u8 as f64 - w[j] * w[k]) / r);
        out += a[k] * x_inv * Matrix4::block_diagonal(sigma_dot(dw));
    }
    Ok(out)
}

/// `Y(y)` from central differences of [`x_matrix`] with the given step.
pub fn y_matrix_fd(y: &[f64; 3], step: f64) -> Result<Matrix4> {
    let x_inv = x_matrix(y)?.adjoint();
    let a = alphas();
    let mut out = Matrix4::zero();
    for k in 0..3 {
        let mut yp = *y;
        let mut ym = *y;
        yp[k] += step;
        ym[k] -= step;
        let d = (x_matrix(&yp)? - x_matrix(&ym)?).scale_real(0.5 / step);
        out += a[k] * x_inv * d.scale(-I);
    }
    Ok(out)
}

fn check_inside(y: &[f64; 3]) -> Result<f64> {
    let r = norm3(y);
    if !(r > 0.0 && r < 1.0) {
        return arg(format!("Z(y) needs 0 < |y| < 1 (Q is only given outside the unit ball), got |y| = {r}"));
    }
    Ok(r)
}

/// `X(y)⁻¹ Q(y/|y|²) X(y) / |y|²`.
fn conjugated_potential(y: &[f64; 3], q: &PotentialSpec) -> Result<Matrix4> {
    let r = check_inside(y)?;
    let x = x_matrix(y)?;
    let qt = q.eval(&invert_point(y));
    Ok((x.adjoint() * qt * x).scale_real(1.0 / (r * r)))
}

/// `Z(y) = Y(y) − |y|⁻² X(y)⁻¹ Q(y/|y|²) X(y)` for `0 < |y| < 1`.
pub fn z_matrix(y: &[f64; 3], q: &PotentialSpec) -> Result<Matrix4> {
    Ok(y_matrix(y)? - conjugated_potential(y, q)?)
}

/// `Z⁽¹⁾(y) = Z(y) − 2i|y|⁻² (α·y)`.
pub fn z1_matrix(y: &[f64; 3], q: &PotentialSpec) -> Result<Matrix4> {
    let r = check_inside(y)?;
    Ok(z_matrix(y, q)? - alpha_dot_real(*y).scale(I * (2.0 / (r * r))))
}

/// Summary of one identity checked over many sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub identity: String,
    pub samples: usize,
    pub max_error: f64,
    pub mean_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excluded_layer: Option<String>,
}

impl SweepReport {
    fn from_errors(identity: &str, errors: &[f64]) -> Self {
        SweepReport {
            identity: identity.into(),
            samples: errors.len(),
            max_error: errors.iter().copied().fold(0.0, f64::max),
            mean_error: compensated_sum(errors.iter().copied()) / errors.len().max(1) as f64,
            excluded_layer: None,
        }
    }
}

/// `max_k ‖X⁻¹β_kX + α_k‖`.
pub fn verify_diagonalization(y: &[f64; 3]) -> Result<f64> {
    let x = x_matrix(y)?;
    let x_inv = x.inverse().ok_or_else(|| crate::Error::Domain("X(y) is singular".into()))?;
    let a = alphas();
    let mut worst: f64 = 0.0;
    for k in 1..=3 {
        let m = x_inv * beta_matrix(k, y)? * x + a[k - 1];
        worst = worst.max(operator_norm(&m)?);
    }
    Ok(worst)
}

/// `max_{j,k} ‖{β_k, β_j} − 2δ_jk I‖`.
pub fn verify_beta_clifford(y: &[f64; 3]) -> Result<f64> {
    let b: Vec<Matrix4> = (1..=3).map(|k| beta_matrix(k, y)).collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        for k in 0..3 {
            let target = Matrix4::diagonal(Complex64::new(if j == k { 2.0 } else { 0.0 }, 0.0));
            worst = worst.max(operator_norm(&(anticommutator(&b[j], &b[k]) - target))?);
        }
    }
    Ok(worst)
}

/// `max_k ‖β_k − β_k†‖`.
pub fn beta_hermiticity(y: &[f64; 3]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 1..=3 {
        let b = beta_matrix(k, y)?;
        worst = worst.max((b - b.adjoint()).max_abs());
    }
    Ok(worst)
}

/// `count` seeded points with uniformly distributed directions and
/// log-uniform radii in `[r_min, r_max]`.
pub fn random_points(seed: u64, count: usize, r_min: f64, r_max: f64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = (r_min.ln() + rng.gen::<f64>() * (r_max / r_min).ln()).exp();
            let s = (1.0 - z * z).sqrt();
            [r * s * phi.cos(), r * s * phi.sin(), r * z]
        })
        .collect()
}

/// Pointwise algebra checks at `count` seeded random points `y ≠ 0`.
pub fn verify_algebra_sweep(seed: u64, count: usize) -> Result<Vec<SweepReport>> {
    if count == 0 {
        return arg("sweep needs at least one sample point");
    }
    let pts = random_points(seed, count, 1e-2, 1e2);
    let eval = |f: &(dyn Fn(&[f64; 3]) -> Result<f64> + Sync)| -> Result<Vec<f64>> {
        pts.par_iter().map(f).collect()
    };
    let unitarity = eval(&|y| {
        let x = x_matrix(y)?;
        operator_norm(&(x.adjoint() * x - Matrix4::identity()))
    })?;
    let diag = eval(&|y| verify_diagonalization(y))?;
    let cliff = eval(&|y| verify_beta_clifford(y))?;
    let herm = eval(&|y| beta_hermiticity(y))?;
    let homog = eval(&|y| {
        let base = y_matrix(y)?;
        let mut worst: f64 = 0.0;
        for lam in [0.5, 2.0, 10.0] {
            let scaled = y_matrix(&y.map(|c| c * lam))?;
            worst = worst.max(operator_norm(&(scaled - base.scale_real(1.0 / lam)))?);
        }
        Ok(worst)
    })?;
    let scale_inv = eval(&|y| {
        let y2 = y.map(|c| 2.0 * c);
        let mut worst = (x_matrix(&y2)? - x_matrix(y)?).max_abs();
        for k in 1..=3 {
            worst = worst.max((beta_matrix(k, &y2)? - beta_matrix(k, y)?).max_abs());
        }
        Ok(worst)
    })?;
    let fd = eval(&|y| {
        let exact = y_matrix(y)?;
        let approx = y_matrix_fd(y, 1e-5 * norm3(y))?;
        Ok(operator_norm(&(exact - approx))? / operator_norm(&exact)?)
    })?;
    Ok(vec![
        SweepReport::from_errors("x_unitarity", &unitarity),
        SweepReport::from_errors("diagonalization", &diag),
        SweepReport::from_errors("beta_clifford", &cliff),
        SweepReport::from_errors("beta_hermitian", &herm),
        SweepReport::from_errors("y_homogeneity", &homog),
        SweepReport::from_errors("frame_scale_invariance", &scale_inv),
        SweepReport::from_errors("y_closed_form_vs_fd", &fd),
    ])
}

/// `sup ‖Z(y)‖|y|` (and the same for `Z⁽¹⁾`) over `n_r` log-spaced radii in
/// `[r_min, r_max]` times `n_dir` quasi-uniform directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZBoundReport {
    pub potential: String,
    pub r_min: f64,
    pub r_max: f64,
    pub samples: usize,
    pub sup_z: f64,
    pub sup_z1: f64,
}

pub fn z_bound(q: &PotentialSpec, r_min: f64, r_max: f64, n_r: usize, n_dir: usize) -> Result<ZBoundReport> {
    if !(r_min > 0.0 && r_max < 1.0 && r_min < r_max) || n_r < 2 || n_dir == 0 {
        return arg(format!("z_bound needs 0 < r_min < r_max < 1, n_r >= 2, n_dir >= 1; got ({r_min}, {r_max}, {n_r}, {n_dir})"));
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let dirs: Vec<[f64; 3]> = (0..n_dir)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n_dir as f64;
            let s = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [s * phi.cos(), s * phi.sin(), z]
        })
        .collect();
    let pairs: Vec<(f64, f64)> = (0..n_r * n_dir)
        .into_par_iter()
        .map(|p| {
            let r = r_min * (r_max / r_min).powf((p / n_dir) as f64 / (n_r - 1) as f64);
            let y = dirs[p % n_dir].map(|c| c * r);
            let z = operator_norm(&z_matrix(&y, q)?)? * r;
            let z1 = operator_norm(&z1_matrix(&y, q)?)? * r;
            Ok((z, z1))
        })
        .collect::<Result<_>>()?;
    Ok(ZBoundReport {
        potential: q.name(),
        r_min,
        r_max,
        samples: pairs.len(),
        sup_z: pairs.iter().map(|p| p.0).fold(0.0, f64::max),
        sup_z1: pairs.iter().map(|p| p.1).fold(0.0, f64::max),
    })
}

/// `Ψ(y) = −X(y)⁻¹ ψ(y/|y|²)` on the punctured-ball image of `ψ`'s annulus.
pub fn transform_field(psi: &SpinorField, target: &GridSpec) -> Result<(SpinorField, Coverage)> {
    let (tilde, cov) = invert_resample(psi, target)?;
    Ok((apply_x_inverse(&tilde), cov))
}

fn apply_x_inverse(tilde: &SpinorField) -> SpinorField {
    tilde.map(|y, v| {
        let x_inv = x_matrix(&y).expect("cell centers avoid the origin").adjoint();
        -x_inv.apply(v)
    })
}

/// `Ψ` sampled directly from a closed-form `ψ`, with no interpolation.
pub fn transform_rule<F>(rule: F, target: &GridSpec, eps_in: f64) -> Result<SpinorField>
where
    F: Fn(&[f64; 3]) -> SpinorValue + Sync,
{
    let mask = DomainMask::new(target, MaskKind::PuncturedBall { eps_in });
    sample_field(target, &mask, |y| {
        let x_inv = x_matrix(y).expect("cell centers avoid the origin").adjoint();
        -x_inv.apply(&rule(&invert_point(y)))
    })
}

/// Result of a grid-level identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub relative_error: f64,
    pub compared_cells: usize,
    pub nominal_cells: usize,
    pub excluded_layer: String,
}

const LAYERS: usize = 3;

fn excluded_description(target: &GridSpec) -> String {
    format!(
        "{LAYERS} cells (width {:.4}) inside every mask edge, plus cells whose interpolation or derivative stencil is incomplete",
        LAYERS as f64 * target.spacing()
    )
}

fn l2_on(field: &SpinorField, mask: &DomainMask) -> f64 {
    let s = compensated_sum(
        field
            .values()
            .iter()
            .zip(mask.cells())
            .filter(|(_, &c)| c)
            .map(|(v, _)| v.norm_sqr()),
    );
    (s * field.grid().cell_volume()).sqrt()
}

fn relative_gap(a: &SpinorField, b: &SpinorField, mask: &DomainMask) -> Result<f64> {
    if mask.count() == 0 {
        return domain("comparison sub-mask is empty");
    }
    let denom = l2_on(a, mask);
    if denom == 0.0 {
        return domain("reference side vanishes on the comparison sub-mask");
    }
    let diff = SpinorField::from_values(
        *a.grid(),
        mask.clone(),
        a.values().iter().zip(b.values()).map(|(x, y)| *x - *y).collect(),
    )?;
    Ok(l2_on(&diff, mask) / denom)
}

/// Checks `M{(α·p)ψ}(y) = |y|² X(y) {(α·p)Ψ(y) + Y(y)Ψ(y)}` for a closed-form
/// `ψ` on `1 < |x| < R`.
///
/// Left side: `ψ` sampled on `exterior`, differentiated there and pulled back
/// by interpolation. Right side: `Ψ` sampled from the closed form on `ball`
/// and differentiated there. Errors are compared in `L²(dy)` on the eroded
/// punctured ball where both sides are available.
pub fn verify_transform_identity<F>(
    rule: F,
    r_outer: f64,
    exterior: &GridSpec,
    ball: &GridSpec,
    method: DerivativeMethod,
) -> Result<IdentityReport>
where
    F: Fn(&[f64; 3]) -> SpinorValue + Sync,
{
    if method == DerivativeMethod::SpectralPeriodic {
        return arg("the transform identity is checked with finite differences on masked grids");
    }
    if !(r_outer > 1.0) || exterior.half_width() < r_outer / 3f64.sqrt() {
        return arg(format!("need r_outer > 1 and an exterior box that reaches the annulus, got r_outer = {r_outer}"));
    }
    let eps_in = 1.0 / r_outer;
    let ext_mask = DomainMask::new(exterior, MaskKind::ExteriorAnnulus { r_outer });
    let psi = sample_field(exterior, &ext_mask, &rule)?;
    let dpsi = apply_dirac(&psi, method)?;
    let nominal = DomainMask::new(ball, MaskKind::PuncturedBall { eps_in });
    let (lhs, _) = invert_resample_onto(&dpsi, &nominal, ball)?;

    let big_psi = transform_rule(&rule, ball, eps_in)?;
    let d_big = apply_dirac(&big_psi, method)?;
    let rhs = d_big.map_indexed(|idx, y, v| {
        let x = x_matrix(&y).expect("nonzero");
        let yv = y_matrix(&y).expect("nonzero").apply(&big_psi.value(idx));
        x.apply(&(*v + yv)).scale_real(norm3(&y).powi(2))
    });

    let safe = nominal.eroded(ball, LAYERS).intersect(lhs.mask()).intersect(rhs.mask());
    Ok(IdentityReport {
        identity: "inverted_dirac_operator".into(),
        relative_error: relative_gap(&lhs, &rhs, &safe)?,
        compared_cells: safe.count(),
        nominal_cells: nominal.count(),
        excluded_layer: excluded_description(ball),
    })
}

/// `∫_{1<|x|<R} |ψ|^p dx` on `exterior` and `∫_{1/R<|y|<1} |ψ(y/|y|²)|^p |y|⁻⁶ dy`
/// on `ball`, both by midpoint quadrature of the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub p: f64,
    pub exterior_integral: f64,
    pub inverted_integral: f64,
    pub relative_gap: f64,
}

pub fn jacobian_check<F>(rule: F, p: f64, r_outer: f64, exterior: &GridSpec, ball: &GridSpec) -> Result<JacobianReport>
where
    F: Fn(&[f64; 3]) -> SpinorValue + Sync,
{
    if !(p >= 1.0) || !(r_outer > 1.0) {
        return arg(format!("jacobian check needs p >= 1 and r_outer > 1, got p = {p}, r_outer = {r_outer}"));
    }
    let ext_mask = DomainMask::new(exterior, MaskKind::ExteriorAnnulus { r_outer });
    let a = crate::grid::quadrature_terms(
        &SpinorField::zeros(*exterior, ext_mask.clone()),
        (0..exterior.len())
            .filter(|&i| ext_mask.is_active(i))
            .map(|i| rule(&exterior.point(i)).norm().powf(p)),
    )?;
    let ball_mask = DomainMask::new(ball, MaskKind::PuncturedBall { eps_in: 1.0 / r_outer });
    let b = crate::grid::quadrature_terms(
        &SpinorField::zeros(*ball, ball_mask.clone()),
        (0..ball.len()).filter(|&i| ball_mask.is_active(i)).map(|i| {
            let y = ball.point(i);
            rule(&invert_point(&y)).norm().powf(p) * norm3(&y).powi(-6)
        }),
    )?;
    Ok(JacobianReport {
        p,
        exterior_integral: a,
        inverted_integral: b,
        relative_gap: (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE),
    })
}

/// Strong and weak residuals of `[(α·p) + Z(y)]Ψ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakEquationReport {
    pub potential: String,
    /// `‖(α·p)Ψ + ZΨ‖₂ / ‖Ψ‖₂` on the safe sub-mask.
    pub strong_residual: f64,
    /// `|⟨(α·p)Ψ + ZΨ, Φ_i⟩| / (‖Ψ‖₂ ‖Φ_i‖₂)` for smooth bumps `Φ_i`.
    pub pairings: Vec<f64>,
    pub compared_cells: usize,
    pub excluded_layer: String,
}

/// Evaluates the inverted equation on `Ψ` (a punctured-ball field) with
/// fourth-order differences. Test spinors are `m` seeded bumps of radius 0.15
/// centered in `0.4 < |y| < 0.8`.
pub fn verify_weak_equation(big_psi: &SpinorField, q: &PotentialSpec, m: usize, seed: u64) -> Result<WeakEquationReport> {
    let g = *big_psi.grid();
    let d = apply_dirac(big_psi, DerivativeMethod::CenteredFd4)?;
    let safe = big_psi.mask().eroded(&g, LAYERS).intersect(d.mask());
    let psi_norm = l2_on(big_psi, &safe);
    if psi_norm == 0.0 {
        return arg("the transformed field vanishes on the comparison region");
    }
    let residual = d.map_indexed(|idx, y, v| {
        if norm3(&y) >= 1.0 {
            return SpinorValue::ZERO;
        }
        let z = z_matrix(&y, q).expect("inside the unit ball");
        *v + z.apply(&big_psi.value(idx))
    });
    let strong = l2_on(&residual, &safe) / psi_norm;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = random_points(rng.gen(), m, 0.4, 0.8);
    let rho = 0.15;
    let pairings = centers
        .iter()
        .map(|c| {
            let u = SpinorValue::new(std::array::from_fn(|_| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }));
            let mut dot = Complex64::default();
            let mut phi2 = 0.0;
            for idx in (0..g.len()).filter(|&i| safe.is_active(i)) {
                let y = g.point(idx);
                let s2 = ((y[0] - c[0]).powi(2) + (y[1] - c[1]).powi(2) + (y[2] - c[2]).powi(2)) / (rho * rho);
                if s2 >= 1.0 {
                    continue;
                }
                let phi = u.scale_real((-1.0 / (1.0 - s2)).exp());
                dot += residual.value(idx).inner(&phi);
                phi2 += phi.norm_sqr();
            }
            let vol = g.cell_volume();
            if phi2 == 0.0 {
                0.0
            } else {
                (dot * vol).norm() / (psi_norm * (phi2 * vol).sqrt())
            }
        })
        .collect();
    Ok(WeakEquationReport {
        potential: q.name(),
        strong_residual: strong,
        pairings,
        compared_cells: safe.count(),
        excluded_layer: excluded_description(&g),
    })
}
