//! Pauli and Dirac matrices in the standard (chiral off-diagonal) representation.
//!
//! `α_j` is the 4×4 matrix with `σ_j` in both off-diagonal 2×2 blocks and zero
//! blocks on the diagonal. All higher modules build their matrix fields
//! (`β_k(y)`, `X(y)`, `Y(y)`, `Z(y)`, potentials) from these.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::{Complex, Matrix4 as NaMatrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense complex 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2(pub [[Complex64; 2]; 2]);

impl Matrix2 {
    pub const fn zero() -> Self {
        Matrix2([[ZERO; 2]; 2])
    }

    pub const fn identity() -> Self {
        Matrix2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Matrix2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|z| *z *= c);
        out
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }
}

impl Mul for Matrix2 {
    type Output = Matrix2;
    fn mul(self, rhs: Matrix2) -> Matrix2 {
        let mut out = Matrix2::zero();
        for r in 0..2 {
            for c in 0..2 {
                out.0[r][c] = self.0[r][0] * rhs.0[0][c] + self.0[r][1] * rhs.0[1][c];
            }
        }
        out
    }
}

impl Add for Matrix2 {
    type Output = Matrix2;
    fn add(mut self, rhs: Matrix2) -> Matrix2 {
        for r in 0..2 {
            for c in 0..2 {
                self.0[r][c] += rhs.0[r][c];
            }
        }
        self
    }
}

impl Sub for Matrix2 {
    type Output = Matrix2;
    fn sub(self, rhs: Matrix2) -> Matrix2 {
        self + rhs.scale(-ONE)
    }
}

/// Dense complex 4×4 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix4(pub [[Complex64; 4]; 4]);

impl Matrix4 {
    pub const fn zero() -> Self {
        Matrix4([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        Self::diagonal(ONE)
    }

    pub fn diagonal(c: Complex64) -> Self {
        let mut m = Self::zero();
        (0..4).for_each(|i| m.0[i][i] = c);
        m
    }

    /// Assemble from 2×2 blocks `[[upper_left, upper_right], [lower_left, lower_right]]`.
    pub fn from_blocks(blocks: [[Matrix2; 2]; 2]) -> Self {
        let mut m = Self::zero();
        for (br, row) in blocks.iter().enumerate() {
            for (bc, b) in row.iter().enumerate() {
                for r in 0..2 {
                    for c in 0..2 {
                        m.0[2 * br + r][2 * bc + c] = b.0[r][c];
                    }
                }
            }
        }
        m
    }

    /// The 2×2 block at block-row `br`, block-column `bc` (each 0 or 1).
    pub fn block(&self, br: usize, bc: usize) -> Matrix2 {
        let mut b = Matrix2::zero();
        for r in 0..2 {
            for c in 0..2 {
                b.0[r][c] = self.0[2 * br + r][2 * bc + c];
            }
        }
        b
    }

    pub fn block_diagonal(b: Matrix2) -> Self {
        Self::from_blocks([[b, Matrix2::zero()], [Matrix2::zero(), b]])
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero();
        for r in 0..4 {
            for c in 0..4 {
                out.0[r][c] = self.0[c][r].conj();
            }
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|z| *z *= c);
        out
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn apply(&self, v: &SpinorValue) -> SpinorValue {
        let mut out = [ZERO; 4];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.0[r];
            *o = row[0] * v.0[0] + row[1] * v.0[1] + row[2] * v.0[2] + row[3] * v.0[3];
        }
        SpinorValue(out)
    }

    /// General inverse; `None` when singular to working precision.
    pub fn inverse(&self) -> Option<Matrix4> {
        let m = self.to_nalgebra();
        m.try_inverse().map(|inv| Self::from_nalgebra(&inv))
    }

    fn to_nalgebra(self) -> NaMatrix4<Complex<f64>> {
        NaMatrix4::from_fn(|r, c| self.0[r][c])
    }

    fn from_nalgebra(m: &NaMatrix4<Complex<f64>>) -> Self {
        let mut out = Self::zero();
        for r in 0..4 {
            for c in 0..4 {
                out.0[r][c] = m[(r, c)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix4 {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.0[r][c]
    }
}

impl IndexMut<(usize, usize)> for Matrix4 {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.0[r][c]
    }
}

impl Mul for Matrix4 {
    type Output = Matrix4;
    fn mul(self, rhs: Matrix4) -> Matrix4 {
        let mut out = Matrix4::zero();
        for r in 0..4 {
            for c in 0..4 {
                let mut acc = ZERO;
                for k in 0..4 {
                    acc += self.0[r][k] * rhs.0[k][c];
                }
                out.0[r][c] = acc;
            }
        }
        out
    }
}

impl Add for Matrix4 {
    type Output = Matrix4;
    fn add(mut self, rhs: Matrix4) -> Matrix4 {
        self += rhs;
        self
    }
}

impl AddAssign for Matrix4 {
    fn add_assign(&mut self, rhs: Matrix4) {
        for r in 0..4 {
            for c in 0..4 {
                self.0[r][c] += rhs.0[r][c];
            }
        }
    }
}

impl Sub for Matrix4 {
    type Output = Matrix4;
    fn sub(self, rhs: Matrix4) -> Matrix4 {
        self + (-rhs)
    }
}

impl Neg for Matrix4 {
    type Output = Matrix4;
    fn neg(self) -> Matrix4 {
        self.scale_real(-1.0)
    }
}

/// A point value of a 4-spinor field.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpinorValue(pub [Complex64; 4]);

impl SpinorValue {
    pub const ZERO: SpinorValue = SpinorValue([ZERO; 4]);

    pub fn new(c: [Complex64; 4]) -> Self {
        SpinorValue(c)
    }

    /// The unit spinor with a one in component `i` (0-based).
    pub fn basis(i: usize) -> Self {
        let mut v = Self::ZERO;
        v.0[i] = ONE;
        v
    }

    /// `⟨z, w⟩ = Σ z_j conj(w_j)`.
    pub fn inner(&self, w: &SpinorValue) -> Complex64 {
        self.0.iter().zip(&w.0).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        SpinorValue(self.0.map(|z| z * c))
    }

    pub fn scale_real(&self, c: f64) -> Self {
        SpinorValue(self.0.map(|z| z * c))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Add for SpinorValue {
    type Output = SpinorValue;
    fn add(self, rhs: SpinorValue) -> SpinorValue {
        SpinorValue(std::array::from_fn(|i| self.0[i] + rhs.0[i]))
    }
}

impl AddAssign for SpinorValue {
    fn add_assign(&mut self, rhs: SpinorValue) {
        for i in 0..4 {
            self.0[i] += rhs.0[i];
        }
    }
}

impl Sub for SpinorValue {
    type Output = SpinorValue;
    fn sub(self, rhs: SpinorValue) -> SpinorValue {
        SpinorValue(std::array::from_fn(|i| self.0[i] - rhs.0[i]))
    }
}

impl Neg for SpinorValue {
    type Output = SpinorValue;
    fn neg(self) -> SpinorValue {
        self.scale_real(-1.0)
    }
}

fn check_index(j: usize) -> Result<()> {
    if (1..=3).contains(&j) {
        Ok(())
    } else {
        arg(format!("matrix index must be 1, 2 or 3, got {j}"))
    }
}

/// Pauli matrix `σ_j`, `j ∈ {1, 2, 3}`.
pub fn pauli(j: usize) -> Result<Matrix2> {
    check_index(j)?;
    Ok(match j {
        1 => Matrix2([[ZERO, ONE], [ONE, ZERO]]),
        2 => Matrix2([[ZERO, -I], [I, ZERO]]),
        _ => Matrix2([[ONE, ZERO], [ZERO, -ONE]]),
    })
}

/// Dirac matrix `α_j`, `j ∈ {1, 2, 3}`.
pub fn alpha(j: usize) -> Result<Matrix4> {
    let s = pauli(j)?;
    Ok(Matrix4::from_blocks([[Matrix2::zero(), s], [s, Matrix2::zero()]]))
}

/// `[σ_1, σ_2, σ_3]`.
pub fn paulis() -> [Matrix2; 3] {
    std::array::from_fn(|j| pauli(j + 1).expect("index in range"))
}

/// `[α_1, α_2, α_3]`.
pub fn alphas() -> [Matrix4; 3] {
    std::array::from_fn(|j| alpha(j + 1).expect("index in range"))
}

/// `α·v` for a real or complex 3-vector.
pub fn alpha_dot(v: [Complex64; 3]) -> Matrix4 {
    let a = alphas();
    a[0].scale(v[0]) + a[1].scale(v[1]) + a[2].scale(v[2])
}

pub fn alpha_dot_real(v: [f64; 3]) -> Matrix4 {
    alpha_dot(v.map(|c| Complex64::new(c, 0.0)))
}

/// `σ·v` for a real 3-vector.
pub fn sigma_dot(v: [f64; 3]) -> Matrix2 {
    let s = paulis();
    s[0].scale(v[0].into()) + s[1].scale(v[1].into()) + s[2].scale(v[2].into())
}

pub fn anticommutator(a: &Matrix4, b: &Matrix4) -> Matrix4 {
    *a * *b + *b * *a
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &Matrix4) -> Result<f64> {
    if !m.is_finite() {
        return arg("operator_norm of a matrix with non-finite entries");
    }
    let sv = m.to_nalgebra().singular_values();
    Ok(sv.iter().copied().fold(0.0, f64::max))
}

/// Worst entrywise deviation of `α_jα_k + α_kα_j` from `2δ_{jk} I₄` over all pairs.
pub fn clifford_residual() -> f64 {
    let a = alphas();
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        for k in 0..3 {
            let target = if j == k { Matrix4::diagonal((2.0).into()) } else { Matrix4::zero() };
            worst = worst.max((anticommutator(&a[j], &a[k]) - target).max_abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pauli_entries() {
        assert_eq!(pauli(1).unwrap(), Matrix2([[ZERO, ONE], [ONE, ZERO]]));
        assert_eq!(pauli(3).unwrap(), Matrix2([[ONE, ZERO], [ZERO, -ONE]]));
        assert_eq!(pauli(2).unwrap() * pauli(2).unwrap(), Matrix2::identity());
        assert!(pauli(0).is_err());
        assert!(pauli(4).is_err());
    }

    #[test]
    fn alpha_blocks_and_hermiticity() {
        let a1 = alpha(1).unwrap();
        assert_eq!(a1.block(0, 1), pauli(1).unwrap());
        assert_eq!(a1.block(1, 0), pauli(1).unwrap());
        assert_eq!(a1.block(0, 0), Matrix2::zero());
        for a in alphas() {
            assert_eq!((a - a.adjoint()).max_abs(), 0.0);
            assert!((a * a.adjoint() - Matrix4::identity()).max_abs() <= 1e-13);
        }
        assert_eq!(alpha(2).unwrap() * alpha(2).unwrap(), Matrix4::identity());
        assert!(alpha(7).is_err());
    }

    #[test]
    fn anticommutation_relations() {
        let a = alphas();
        assert_eq!(anticommutator(&a[0], &a[1]).max_abs(), 0.0);
        assert_eq!(anticommutator(&a[2], &a[2]), Matrix4::diagonal(c(2.0, 0.0)));
        let id = Matrix4::identity();
        assert_eq!(anticommutator(&id, &id), Matrix4::diagonal(c(2.0, 0.0)));
        assert!(clifford_residual() <= 1e-13);
    }

    #[test]
    fn operator_norm_examples() {
        assert!((operator_norm(&Matrix4::identity()).unwrap() - 1.0).abs() < 1e-12);
        assert!((operator_norm(&alpha(1).unwrap()).unwrap() - 1.0).abs() < 1e-12);
        assert!((operator_norm(&Matrix4::diagonal(c(2.0, 0.0))).unwrap() - 2.0).abs() < 1e-12);
        let mut bad = Matrix4::identity();
        bad[(1, 2)] = c(f64::NAN, 0.0);
        assert!(operator_norm(&bad).is_err());
    }

    #[test]
    fn block_roundtrip() {
        let s = paulis();
        let m = Matrix4::from_blocks([[s[0], s[1]], [s[2], Matrix2::identity()]]);
        assert_eq!(m.block(0, 0), s[0]);
        assert_eq!(m.block(0, 1), s[1]);
        assert_eq!(m.block(1, 0), s[2]);
        assert_eq!(m.block(1, 1), Matrix2::identity());
    }

    #[test]
    fn spinor_norm_is_definite() {
        assert_eq!(SpinorValue::ZERO.norm(), 0.0);
        let v = SpinorValue::new([c(3.0, 0.0), c(0.0, 4.0), ZERO, ZERO]);
        assert!((v.norm() - 5.0).abs() < 1e-15);
        assert!((v.inner(&v).re - 25.0).abs() < 1e-12);
    }

    fn arb_matrix() -> impl Strategy<Value = Matrix4> {
        proptest::collection::vec(-2.0f64..2.0, 32).prop_map(|v| {
            let mut m = Matrix4::zero();
            for r in 0..4 {
                for col in 0..4 {
                    let k = 2 * (4 * r + col);
                    m.0[r][col] = c(v[k], v[k + 1]);
                }
            }
            m
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn norm_submultiplicative_and_homogeneous(a in arb_matrix(), b in arb_matrix(), s in -5.0f64..5.0) {
            let na = operator_norm(&a).unwrap();
            let nb = operator_norm(&b).unwrap();
            let nab = operator_norm(&(a * b)).unwrap();
            prop_assert!(nab <= na * nb * (1.0 + 1e-10) + 1e-10);
            let ns = operator_norm(&a.scale_real(s)).unwrap();
            prop_assert!((ns - s.abs() * na).abs() <= 1e-10 * (1.0 + na * s.abs()));
        }
    }
}
