//! Cell-centered grids, domain masks and sampled spinor fields.
//!
//! Cell centers sit at `x_i = -L + (i + 1/2) h` with `h = 2L/N` and `N` even, so
//! no center lies on a coordinate plane and none at the origin. Fields store one
//! value per cell in x-fastest order; inactive cells hold zero.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::SpinorValue;
use crate::error::{arg, domain, Error, Result};

/// Uniform cell-centered grid on the box `[-L, L]³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    half_width: f64,
    points_per_axis: usize,
    spacing: f64,
}

impl GridSpec {
    pub fn new(half_width: f64, points_per_axis: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return arg(format!("grid half-width must be positive, got {half_width}"));
        }
        if points_per_axis < 8 || points_per_axis % 2 != 0 {
            return arg(format!(
                "points per axis must be an even integer >= 8, got {points_per_axis}"
            ));
        }
        Ok(GridSpec {
            half_width,
            points_per_axis,
            spacing: 2.0 * half_width / points_per_axis as f64,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of the `i`-th center along any axis.
    pub fn center(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.points_per_axis * (j + self.points_per_axis * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.points_per_axis;
        (idx % n, (idx / n) % n, idx / (n * n))
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.coords(idx);
        [self.center(i), self.center(j), self.center(k)]
    }

    /// Fractional cell index of coordinate `x` (centers at integers).
    fn fractional_index(&self, x: f64) -> f64 {
        (x + self.half_width) / self.spacing - 0.5
    }
}

pub fn make_grid(half_width: f64, points_per_axis: usize) -> Result<GridSpec> {
    GridSpec::new(half_width, points_per_axis)
}

pub fn norm3(x: &[f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Which region of the box a mask selects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskKind {
    /// `|x| < 1`.
    UnitBall,
    /// `1 < |x| < r_outer`.
    ExteriorAnnulus { r_outer: f64 },
    FullBox,
    /// `eps_in < |x| < 1`.
    PuncturedBall { eps_in: f64 },
    /// Any other cell set, e.g. an eroded interior or an inversion coverage set.
    Custom,
}

impl MaskKind {
    pub fn contains(&self, x: &[f64; 3]) -> bool {
        let r = norm3(x);
        match *self {
            MaskKind::UnitBall => r < 1.0,
            MaskKind::ExteriorAnnulus { r_outer } => r > 1.0 && r < r_outer,
            MaskKind::FullBox | MaskKind::Custom => true,
            MaskKind::PuncturedBall { eps_in } => r > eps_in && r < 1.0,
        }
    }

    pub(crate) fn code(&self) -> (u8, f64) {
        match *self {
            MaskKind::UnitBall => (0, 0.0),
            MaskKind::ExteriorAnnulus { r_outer } => (1, r_outer),
            MaskKind::FullBox => (2, 0.0),
            MaskKind::PuncturedBall { eps_in } => (3, eps_in),
            MaskKind::Custom => (4, 0.0),
        }
    }

    pub(crate) fn from_code(code: u8, param: f64) -> Result<Self> {
        Ok(match code {
            0 => MaskKind::UnitBall,
            1 => MaskKind::ExteriorAnnulus { r_outer: param },
            2 => MaskKind::FullBox,
            3 => MaskKind::PuncturedBall { eps_in: param },
            4 => MaskKind::Custom,
            other => return Err(Error::Format(format!("unknown mask code {other}"))),
        })
    }
}

/// A boolean selection of grid cells. `cells` is authoritative; `kind`
/// records how the selection was made.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMask {
    kind: MaskKind,
    cells: Vec<bool>,
}

impl DomainMask {
    pub fn new(grid: &GridSpec, kind: MaskKind) -> Self {
        let cells = (0..grid.len())
            .into_par_iter()
            .map(|idx| kind.contains(&grid.point(idx)))
            .collect();
        DomainMask { kind, cells }
    }

    pub fn from_cells(grid: &GridSpec, kind: MaskKind, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.len() {
            return arg(format!(
                "mask has {} cells, grid has {}",
                cells.len(),
                grid.len()
            ));
        }
        Ok(DomainMask { kind, cells })
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        self.cells[idx]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn intersect(&self, other: &DomainMask) -> DomainMask {
        DomainMask {
            kind: MaskKind::Custom,
            cells: self.cells.iter().zip(&other.cells).map(|(a, b)| *a && *b).collect(),
        }
    }

    /// Drop every cell with an inactive cell (or the box edge) within `layers`
    /// cells along any axis combination (cube erosion).
    pub fn eroded(&self, grid: &GridSpec, layers: usize) -> DomainMask {
        let n = grid.n();
        let mut cur = self.cells.clone();
        for axis in 0..3 {
            let stride = [1, n, n * n][axis];
            let mut next = vec![false; cur.len()];
            for (idx, slot) in next.iter_mut().enumerate() {
                let c = [idx % n, (idx / n) % n, idx / (n * n)][axis];
                if c < layers || c + layers >= n {
                    continue;
                }
                *slot = (0..=2 * layers).all(|o| cur[idx + o * stride - layers * stride]);
            }
            cur = next;
        }
        DomainMask { kind: MaskKind::Custom, cells: cur }
    }

    /// Keep only cells whose centers satisfy `r_min < |x| < r_max`.
    pub fn restricted_to_shell(&self, grid: &GridSpec, r_min: f64, r_max: f64) -> DomainMask {
        let cells = self
            .cells
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                let r = norm3(&grid.point(idx));
                c && r > r_min && r < r_max
            })
            .collect();
        DomainMask { kind: MaskKind::Custom, cells }
    }
}

/// A `C⁴`-valued function sampled at the cell centers of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    grid: GridSpec,
    mask: DomainMask,
    values: Vec<SpinorValue>,
}

impl SpinorField {
    pub fn zeros(grid: GridSpec, mask: DomainMask) -> Self {
        let values = vec![SpinorValue::ZERO; grid.len()];
        SpinorField { grid, mask, values }
    }

    /// Build from raw values; inactive cells are zeroed.
    pub fn from_values(grid: GridSpec, mask: DomainMask, mut values: Vec<SpinorValue>) -> Result<Self> {
        if values.len() != grid.len() || mask.cells.len() != grid.len() {
            return arg("value or mask length does not match the grid");
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return arg(format!("non-finite value at cell {bad}"));
        }
        for (v, &a) in values.iter_mut().zip(&mask.cells) {
            if !a {
                *v = SpinorValue::ZERO;
            }
        }
        Ok(SpinorField { grid, mask, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn mask(&self) -> &DomainMask {
        &self.mask
    }

    pub fn values(&self) -> &[SpinorValue] {
        &self.values
    }

    pub fn value(&self, idx: usize) -> SpinorValue {
        self.values[idx]
    }

    /// Iterator over `(index, center, value)` for active cells.
    pub fn active(&self) -> impl Iterator<Item = (usize, [f64; 3], &SpinorValue)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(idx, _)| self.mask.cells[*idx])
            .map(|(idx, v)| (idx, self.grid.point(idx), v))
    }

    /// The same values seen through a (typically smaller) mask.
    pub fn restricted(&self, mask: &DomainMask) -> SpinorField {
        let mask = self.mask.intersect(mask);
        let values = self
            .values
            .iter()
            .zip(&mask.cells)
            .map(|(v, &a)| if a { *v } else { SpinorValue::ZERO })
            .collect();
        SpinorField { grid: self.grid, mask, values }
    }

    /// Pointwise map `(center, value) -> value` over active cells.
    pub fn map<F>(&self, f: F) -> SpinorField
    where
        F: Fn([f64; 3], &SpinorValue) -> SpinorValue + Sync,
    {
        let grid = self.grid;
        let values = self
            .values
            .par_iter()
            .enumerate()
            .map(|(idx, v)| {
                if self.mask.cells[idx] {
                    f(grid.point(idx), v)
                } else {
                    SpinorValue::ZERO
                }
            })
            .collect();
        SpinorField { grid, mask: self.mask.clone(), values }
    }

    /// Like [`SpinorField::map`] with the cell index passed as well.
    pub fn map_indexed<F>(&self, f: F) -> SpinorField
    where
        F: Fn(usize, [f64; 3], &SpinorValue) -> SpinorValue + Sync,
    {
        let grid = self.grid;
        let values = self
            .values
            .par_iter()
            .enumerate()
            .map(|(idx, v)| {
                if self.mask.cells[idx] {
                    f(idx, grid.point(idx), v)
                } else {
                    SpinorValue::ZERO
                }
            })
            .collect();
        SpinorField { grid, mask: self.mask.clone(), values }
    }

    pub fn scaled(&self, c: Complex64) -> SpinorField {
        self.map(|_, v| v.scale(c))
    }

    /// `self - other` on the intersection of both masks.
    pub fn difference(&self, other: &SpinorField) -> Result<SpinorField> {
        self.combine(other, |a, b| *a - *b)
    }

    pub fn sum(&self, other: &SpinorField) -> Result<SpinorField> {
        self.combine(other, |a, b| *a + *b)
    }

    fn combine<F>(&self, other: &SpinorField, f: F) -> Result<SpinorField>
    where
        F: Fn(&SpinorValue, &SpinorValue) -> SpinorValue + Sync,
    {
        if self.grid != other.grid {
            return arg("fields live on different grids");
        }
        let mask = self.mask.intersect(&other.mask);
        let values = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                if mask.cells[idx] {
                    f(&self.values[idx], &other.values[idx])
                } else {
                    SpinorValue::ZERO
                }
            })
            .collect();
        Ok(SpinorField { grid: self.grid, mask, values })
    }

    /// `|f|` at every cell (zero on inactive cells).
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(SpinorValue::norm).collect()
    }
}

/// Sample `rule` at every active cell center.
pub fn sample_field<F>(grid: &GridSpec, mask: &DomainMask, rule: F) -> Result<SpinorField>
where
    F: Fn(&[f64; 3]) -> SpinorValue + Sync,
{
    if mask.cells.len() != grid.len() {
        return arg("mask does not match grid");
    }
    let values: Vec<SpinorValue> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if mask.cells[idx] {
                rule(&grid.point(idx))
            } else {
                SpinorValue::ZERO
            }
        })
        .collect();
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        let (i, j, k) = grid.coords(bad);
        return Err(Error::Sampling {
            i,
            j,
            k,
            point: grid.point(bad),
            reason: "rule returned a non-finite value".into(),
        });
    }
    Ok(SpinorField { grid: *grid, mask: mask.clone(), values })
}

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Integrand for [`quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrand {
    /// `|f|^p`
    Power { p: f64 },
    /// `|f|^p |x|^w`
    WeightedPower { p: f64, w: f64 },
}

/// Midpoint rule `Σ integrand(x_i) h³` over active cells.
pub fn quadrature(field: &SpinorField, integrand: Integrand) -> Result<f64> {
    let (p, w) = match integrand {
        Integrand::Power { p } => (p, 0.0),
        Integrand::WeightedPower { p, w } => (p, w),
    };
    if !(p >= 1.0) || !w.is_finite() {
        return arg(format!("quadrature needs p >= 1 and finite weight, got p = {p}, w = {w}"));
    }
    let terms = field.active().map(|(_, x, v)| {
        let m = v.norm();
        let base = if m == 0.0 { 0.0 } else { m.powf(p) };
        if w == 0.0 {
            base
        } else {
            base * norm3(&x).powf(w)
        }
    });
    quadrature_terms(field, terms)
}

/// Midpoint sum of arbitrary per-cell terms over the active cells of `field`.
pub(crate) fn quadrature_terms<I: Iterator<Item = f64>>(field: &SpinorField, terms: I) -> Result<f64> {
    if field.mask.count() == 0 {
        return domain("quadrature over an empty mask");
    }
    Ok(compensated_sum(terms) * field.grid.cell_volume())
}

/// One logarithmic radial shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialBin {
    /// Geometric midpoint of the shell edges.
    pub radius: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub bins: Vec<RadialBin>,
}

/// Shell means and maxima of `|f|` in `n_bins` equal-width bins of `log r`
/// spanning the radial range of the active cells. Empty shells are omitted.
pub fn radial_profile(field: &SpinorField, n_bins: usize) -> Result<RadialProfile> {
    if n_bins < 4 {
        return arg(format!("radial profile needs at least 4 bins, got {n_bins}"));
    }
    let (mut r_lo, mut r_hi) = (f64::INFINITY, 0.0f64);
    for (_, x, _) in field.active() {
        let r = norm3(&x);
        r_lo = r_lo.min(r);
        r_hi = r_hi.max(r);
    }
    if !(r_hi > r_lo) {
        return domain("mask spans no radial range");
    }
    let (l0, l1) = (r_lo.ln(), r_hi.ln());
    let width = (l1 - l0) / n_bins as f64;
    let mut sums = vec![Vec::new(); n_bins];
    let mut maxes = vec![0.0f64; n_bins];
    for (_, x, v) in field.active() {
        let b = (((norm3(&x).ln() - l0) / width) as usize).min(n_bins - 1);
        let m = v.norm();
        sums[b].push(m);
        maxes[b] = maxes[b].max(m);
    }
    let bins: Vec<RadialBin> = (0..n_bins)
        .filter(|&b| !sums[b].is_empty())
        .map(|b| RadialBin {
            radius: (l0 + (b as f64 + 0.5) * width).exp(),
            mean: compensated_sum(sums[b].iter().copied()) / sums[b].len() as f64,
            max: maxes[b],
            count: sums[b].len(),
        })
        .collect();
    if bins.len() < 4 {
        return domain(format!("only {} nonempty radial bins (need 4)", bins.len()));
    }
    Ok(RadialProfile { bins })
}

/// Bookkeeping for cells dropped while resampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Cells selected by the nominal target mask.
    pub nominal: usize,
    /// Cells whose interpolation stencil was fully available.
    pub covered: usize,
    pub dropped: usize,
}

/// Trilinear interpolation of `field` at `x`. `None` if any of the eight
/// stencil cells is outside the box or inactive.
pub fn interpolate(field: &SpinorField, x: &[f64; 3]) -> Option<SpinorValue> {
    let g = &field.grid;
    let n = g.n() as isize;
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let u = g.fractional_index(x[a]);
        let i0 = u.floor();
        if !(i0 >= 0.0) || i0 as isize + 1 >= n {
            return None;
        }
        base[a] = i0 as usize;
        frac[a] = u - i0;
    }
    let mut acc = SpinorValue::ZERO;
    for corner in 0..8 {
        let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let idx = g.index(base[0] + o[0], base[1] + o[1], base[2] + o[2]);
        if !field.mask.cells[idx] {
            return None;
        }
        let wgt: f64 = (0..3)
            .map(|a| if o[a] == 1 { frac[a] } else { 1.0 - frac[a] })
            .product();
        acc += field.values[idx].scale_real(wgt);
    }
    Some(acc)
}

/// `x ↦ x/|x|²`.
#[inline]
pub fn invert_point(x: &[f64; 3]) -> [f64; 3] {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    [x[0] / r2, x[1] / r2, x[2] / r2]
}

/// Pull a field back through the unit-sphere inversion: the result at `y` is
/// the source interpolated at `y/|y|²`.
///
/// An exterior annulus `1 < |x| < R` maps to the punctured ball `1/R < |y| < 1`
/// and vice versa. Target cells whose stencil is incomplete are dropped and
/// counted in the returned [`Coverage`].
pub fn invert_resample(field: &SpinorField, target: &GridSpec) -> Result<(SpinorField, Coverage)> {
    let kind = match field.mask.kind {
        MaskKind::ExteriorAnnulus { r_outer } => MaskKind::PuncturedBall { eps_in: 1.0 / r_outer },
        MaskKind::PuncturedBall { eps_in } => MaskKind::ExteriorAnnulus { r_outer: 1.0 / eps_in },
        other => return arg(format!("inversion resampling needs an annulus or punctured ball source, got {other:?}")),
    };
    invert_resample_onto(field, &DomainMask::new(target, kind), target)
}

/// Like [`invert_resample`] with an explicit nominal target mask, for sources
/// whose mask is not one of the named kinds (e.g. a derivative's shrunken mask).
pub fn invert_resample_onto(
    field: &SpinorField,
    nominal: &DomainMask,
    target: &GridSpec,
) -> Result<(SpinorField, Coverage)> {
    if nominal.cells.len() != target.len() {
        return arg("nominal mask does not match the target grid");
    }
    let samples: Vec<Option<SpinorValue>> = (0..target.len())
        .into_par_iter()
        .map(|idx| {
            let y = target.point(idx);
            if nominal.cells[idx] && norm3(&y) > 0.0 {
                interpolate(field, &invert_point(&y))
            } else {
                None
            }
        })
        .collect();
    let cells: Vec<bool> = samples.iter().map(Option::is_some).collect();
    let values = samples.into_iter().map(|s| s.unwrap_or(SpinorValue::ZERO)).collect();
    let nominal_count = nominal.count();
    let covered = cells.iter().filter(|&&c| c).count();
    let out = SpinorField {
        grid: *target,
        mask: DomainMask { kind: nominal.kind, cells },
        values,
    };
    Ok((
        out,
        Coverage {
            nominal: nominal_count,
            covered,
            dropped: nominal_count - covered,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn e1(c: f64) -> SpinorValue {
        SpinorValue::basis(0).scale_real(c)
    }

    #[test]
    fn grid_arithmetic() {
        let g = make_grid(1.0, 8).unwrap();
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.center(0), -0.875);
        assert_eq!(make_grid(8.0, 64).unwrap().spacing(), 0.25);
        assert!(make_grid(1.0, 7).is_err());
        assert!(make_grid(1.0, 6).is_err());
        assert!(make_grid(0.0, 8).is_err());
        assert!(make_grid(-1.0, 8).is_err());
        let g = make_grid(2.0, 16).unwrap();
        assert!((0..g.len()).all(|idx| g.point(idx).iter().all(|c| c.abs() > 1e-12)));
    }

    #[test]
    fn sampling_rules() {
        let g = make_grid(1.0, 16).unwrap();
        let ball = DomainMask::new(&g, MaskKind::UnitBall);
        let f = sample_field(&g, &ball, |_| e1(1.0)).unwrap();
        assert!(f.active().all(|(_, _, v)| *v == e1(1.0)));

        let g = make_grid(8.0, 64).unwrap();
        let ann = DomainMask::new(&g, MaskKind::ExteriorAnnulus { r_outer: 8.0 });
        let f = sample_field(&g, &ann, |x| e1(norm3(x).powi(-2))).unwrap();
        // nearest center to (2, 0, 0)
        let (i, j) = (((2.0 + 8.0) / 0.25 - 0.5f64).round() as usize, 31usize);
        let idx = g.index(i, j, j);
        let x = g.point(idx);
        assert!((f.value(idx).norm() - 1.0 / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).abs() < 1e-15);
        assert!((f.value(idx).norm() - 0.25).abs() < 0.04);

        let g = make_grid(1.0, 16).unwrap();
        let punct = DomainMask::new(&g, MaskKind::PuncturedBall { eps_in: 2.0 * g.spacing() });
        assert!(sample_field(&g, &punct, |x| e1(1.0 / norm3(x))).is_ok());
        let full = DomainMask::new(&g, MaskKind::FullBox);
        let err = sample_field(&g, &full, |x| e1(if x[0] > 0.9 { f64::NAN } else { 1.0 }));
        assert!(matches!(err, Err(Error::Sampling { .. })));
    }

    #[test]
    fn quadrature_examples() {
        let g = make_grid(1.0, 16).unwrap();
        let full = DomainMask::new(&g, MaskKind::FullBox);
        let one = sample_field(&g, &full, |_| e1(1.0)).unwrap();
        let vol = quadrature(&one, Integrand::Power { p: 1.0 }).unwrap();
        assert!((vol - 8.0).abs() <= 8.0 * 1e-12);
        let zero = sample_field(&g, &full, |_| SpinorValue::ZERO).unwrap();
        assert_eq!(quadrature(&zero, Integrand::Power { p: 2.0 }).unwrap(), 0.0);
        assert!(quadrature(&one, Integrand::Power { p: 0.5 }).is_err());
        let empty = DomainMask::from_cells(&g, MaskKind::Custom, vec![false; g.len()]).unwrap();
        assert!(quadrature(&SpinorField::zeros(g, empty), Integrand::Power { p: 1.0 }).is_err());
    }

    #[test]
    fn ball_volume_converges() {
        let exact = 4.0 * PI / 3.0;
        let errs: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let g = make_grid(1.0, n).unwrap();
                let ball = DomainMask::new(&g, MaskKind::UnitBall);
                let f = sample_field(&g, &ball, |_| e1(1.0)).unwrap();
                (quadrature(&f, Integrand::Power { p: 1.0 }).unwrap() - exact).abs()
            })
            .collect();
        // O(h) envelope: the error at each resolution stays below C h.
        for (e, n) in errs.iter().zip([16.0, 32.0, 64.0]) {
            assert!(*e < 4.0 * (2.0 / n), "error {e} at N = {n}");
        }
        assert!(errs[2] < errs[0]);
    }

    #[test]
    fn radial_profiles() {
        let g = make_grid(8.0, 48).unwrap();
        let ann = DomainMask::new(&g, MaskKind::ExteriorAnnulus { r_outer: 8.0 });
        let c = sample_field(&g, &ann, |_| e1(2.0)).unwrap();
        let prof = radial_profile(&c, 12).unwrap();
        assert!(prof.bins.iter().all(|b| (b.mean - 2.0).abs() < 1e-12 && b.count > 0));
        assert!(prof.bins.windows(2).all(|w| w[0].radius < w[1].radius));
        let z = sample_field(&g, &ann, |_| SpinorValue::ZERO).unwrap();
        assert!(radial_profile(&z, 12).unwrap().bins.iter().all(|b| b.mean == 0.0));
        assert!(radial_profile(&c, 3).is_err());
    }

    #[test]
    fn erosion_shrinks() {
        let g = make_grid(1.0, 16).unwrap();
        let full = DomainMask::new(&g, MaskKind::FullBox);
        let e = full.eroded(&g, 2);
        assert_eq!(e.count(), 12usize.pow(3));
    }

    #[test]
    fn resample_constant_is_exact() {
        let src = make_grid(8.0, 48).unwrap();
        let ann = DomainMask::new(&src, MaskKind::ExteriorAnnulus { r_outer: 8.0 });
        let c = SpinorValue::new([Complex64::new(0.3, -0.2), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5), Complex64::new(-1.0, 0.0)]);
        let f = sample_field(&src, &ann, |_| c).unwrap();
        let tgt = make_grid(1.0, 32).unwrap();
        let (out, cov) = invert_resample(&f, &tgt).unwrap();
        assert!(cov.covered > 0 && cov.covered + cov.dropped == cov.nominal);
        assert!(out.active().all(|(_, _, v)| (*v - c).norm() < 1e-13));
        assert_eq!(out.mask().kind(), MaskKind::PuncturedBall { eps_in: 0.125 });
    }
}
