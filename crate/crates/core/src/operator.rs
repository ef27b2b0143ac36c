//! Matrix-free `H_t = α·p + tQ` on a box with antiperiodic boundary
//! conditions, and the preconditioned solvers used to find its smallest
//! singular values.
//!
//! Antiperiodic fields expand in `e^{ik·x}` with `k = (π/L)(m + 1/2)`, so the
//! free operator has no zero wavevector and its smallest singular value is
//! `(π/2L)√3`. Vectors are stored component-major: component `c` of cell
//! `idx` lives at `c·N³ + idx`. All reductions are sequential so results do
//! not depend on the thread count.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::clifford::Matrix4;
use crate::dirac::alpha_k_apply;
use crate::fft::{signed_mode, Fft3};
use crate::grid::GridSpec;
use crate::inversion::PotentialSpec;

pub(crate) type Vector = Vec<Complex64>;

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::default();
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

pub(crate) fn norm(a: &[Complex64]) -> f64 {
    dot(a, a).re.sqrt()
}

pub(crate) fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(u, v)| *u += a * v);
}

pub(crate) fn scale(y: &mut [Complex64], a: f64) {
    y.par_iter_mut().for_each(|u| *u *= a);
}

pub(crate) struct DiracOnBox {
    cells: usize,
    fft: Fft3,
    /// `e^{-iπ(x+y+z)/2L}` per cell.
    phase: Vec<Complex64>,
    kaxis: Vec<f64>,
    q: Vec<Matrix4>,
    q_adj: Vec<Matrix4>,
    q_max: f64,
}

impl DiracOnBox {
    pub fn new(grid: &GridSpec, potential: &PotentialSpec) -> Self {
        let n = grid.n();
        let l = grid.half_width();
        let cells = grid.len();
        let phase = (0..cells)
            .map(|idx| {
                let x = grid.point(idx);
                Complex64::from_polar(1.0, -std::f64::consts::PI * (x[0] + x[1] + x[2]) / (2.0 * l))
            })
            .collect();
        let kaxis = (0..n)
            .map(|i| std::f64::consts::PI / l * (signed_mode(i, n) as f64 + 0.5))
            .collect();
        let q: Vec<Matrix4> = (0..cells).into_par_iter().map(|i| potential.eval_extended(&grid.point(i))).collect();
        let q_adj = q.iter().map(|m| m.adjoint()).collect();
        let q_max = q
            .iter()
            .map(|m| crate::clifford::operator_norm(m).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        DiracOnBox { cells, fft: Fft3::new(n), phase, kaxis, q, q_adj, q_max }
    }

    pub fn len(&self) -> usize {
        4 * self.cells
    }

    /// `max_x ‖Q(x)‖` over the cells.
    pub fn q_sup(&self) -> f64 {
        self.q_max
    }

    /// `(π/2L)√3`, the smallest `|k|` on the shifted lattice.
    pub fn free_floor(&self) -> f64 {
        let k0 = self.kaxis.iter().map(|k| k.abs()).fold(f64::INFINITY, f64::min);
        k0 * 3f64.sqrt()
    }

    fn n(&self) -> usize {
        self.kaxis.len()
    }

    fn kvec(&self, idx: usize) -> [f64; 3] {
        let n = self.n();
        [self.kaxis[idx % n], self.kaxis[(idx / n) % n], self.kaxis[idx / (n * n)]]
    }

    fn to_fourier(&self, v: &[Complex64]) -> Vector {
        let mut out = v.to_vec();
        out.par_chunks_mut(self.cells).for_each(|c| {
            for (z, p) in c.iter_mut().zip(&self.phase) {
                *z *= p;
            }
            self.fft.forward(c);
        });
        out
    }

    fn from_fourier(&self, mut out: Vector) -> Vector {
        out.par_chunks_mut(self.cells).for_each(|c| {
            self.fft.inverse(c);
            for (z, p) in c.iter_mut().zip(&self.phase) {
                *z *= p.conj();
            }
        });
        out
    }

    /// `(α·p) v`.
    pub fn free(&self, v: &[Complex64]) -> Vector {
        let mut f = self.to_fourier(v);
        let m = self.cells;
        for idx in 0..m {
            let w = alpha_k_apply(self.kvec(idx), [f[idx], f[m + idx], f[2 * m + idx], f[3 * m + idx]]);
            for c in 0..4 {
                f[c * m + idx] = w[c];
            }
        }
        self.from_fourier(f)
    }

    fn add_potential(&self, out: &mut [Complex64], v: &[Complex64], t: f64, adjoint: bool) {
        if t == 0.0 {
            return;
        }
        let m = self.cells;
        let q = if adjoint { &self.q_adj } else { &self.q };
        for idx in 0..m {
            let qv = q[idx].0;
            for r in 0..4 {
                let mut acc = Complex64::default();
                for c in 0..4 {
                    acc += qv[r][c] * v[c * m + idx];
                }
                out[r * m + idx] += acc * t;
            }
        }
    }

    /// `H_t v`.
    pub fn apply(&self, v: &[Complex64], t: f64) -> Vector {
        let mut out = self.free(v);
        self.add_potential(&mut out, v, t, false);
        out
    }

    /// `H_t† v`.
    pub fn apply_adj(&self, v: &[Complex64], t: f64) -> Vector {
        let mut out = self.free(v);
        self.add_potential(&mut out, v, t, true);
        out
    }

    /// `(H_t†H_t + μ) v`.
    pub fn normal_shifted(&self, v: &[Complex64], t: f64, mu: f64) -> Vector {
        let mut out = self.apply_adj(&self.apply(v, t), t);
        axpy(&mut out, Complex64::new(mu, 0.0), v);
        out
    }

    /// `(|k|² + μ_p)⁻¹ v` in the shifted Fourier basis.
    pub fn precondition(&self, v: &[Complex64], mu_p: f64) -> Vector {
        let mut f = self.to_fourier(v);
        let m = self.cells;
        f.par_chunks_mut(m).for_each(|c| {
            for (idx, z) in c.iter_mut().enumerate() {
                let k = self.kvec(idx);
                *z /= k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + mu_p;
            }
        });
        self.from_fourier(f)
    }
}

/// Outcome of one preconditioned conjugate-gradient solve.
pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `(H†H + μ) x = b` by preconditioned conjugate gradients, starting
/// from the contents of `x`.
pub(crate) fn pcg(
    op: &DiracOnBox,
    t: f64,
    mu: f64,
    mu_p: f64,
    b: &[Complex64],
    x: &mut Vector,
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|z| *z = Complex64::default());
        return CgOutcome { iterations: 0, converged: true };
    }
    let ax = op.normal_shifted(x, t, mu);
    let mut r: Vector = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
    if norm(&r) <= tol * bnorm {
        return CgOutcome { iterations: 0, converged: true };
    }
    let mut z = op.precondition(&r, mu_p);
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    for it in 1..=max_iter {
        let ap = op.normal_shifted(&p, t, mu);
        let alpha = rz / dot(&p, &ap).re;
        axpy(x, Complex64::new(alpha, 0.0), &p);
        axpy(&mut r, Complex64::new(-alpha, 0.0), &ap);
        if norm(&r) <= tol * bnorm {
            return CgOutcome { iterations: it, converged: true };
        }
        z = op.precondition(&r, mu_p);
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, zi)| *pi = zi + *pi * beta);
    }
    CgOutcome { iterations: max_iter, converged: false }
}
