//! Three-dimensional FFTs on x-fastest cubic arrays, built from rustfft line
//! transforms. The pruned variants skip lines that are identically zero
//! (zero-padded input) or discarded (cropped output).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft3 {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.m.pow(3)
    }

    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            m,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward_pruned(data, self.m);
    }

    /// Unnormalized-then-scaled inverse: `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse_pruned(data, self.m);
    }

    /// Forward transform of data that vanishes outside `[0, support)³`.
    pub fn forward_pruned(&self, data: &mut [Complex64], support: usize) {
        let m = self.m;
        let fft = &*self.fwd;
        pass_axis(data, m, 0, support, support, fft);
        pass_axis(data, m, 1, m, support, fft);
        pass_axis(data, m, 2, m, m, fft);
    }

    /// Inverse transform, exact only on `[0, keep)³`; other entries are garbage.
    pub fn inverse_pruned(&self, data: &mut [Complex64], keep: usize) {
        let m = self.m;
        let fft = &*self.inv;
        pass_axis(data, m, 2, m, m, fft);
        pass_axis(data, m, 1, m, keep, fft);
        pass_axis(data, m, 0, keep, keep, fft);
        let scale = 1.0 / (m as f64).powi(3);
        data.iter_mut().for_each(|z| *z *= scale);
    }
}

/// Transform all lines along `axis` whose two other coordinates lie in
/// `[0, r1) × [0, r2)` (coordinates taken in increasing axis order).
fn pass_axis(data: &mut [Complex64], m: usize, axis: usize, r1: usize, r2: usize, fft: &dyn Fft<f64>) {
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    match axis {
        0 => {
            for k in 0..r2 {
                let start = m * m * k;
                fft.process_with_scratch(&mut data[start..start + m * r1], &mut scratch);
            }
        }
        1 => {
            let mut buf = vec![Complex64::default(); m * r1];
            for k in 0..r2 {
                let plane = &mut data[m * m * k..m * m * (k + 1)];
                for j in 0..m {
                    for i in 0..r1 {
                        buf[i * m + j] = plane[i + m * j];
                    }
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for j in 0..m {
                    for i in 0..r1 {
                        plane[i + m * j] = buf[i * m + j];
                    }
                }
            }
        }
        _ => {
            let mut buf = vec![Complex64::default(); m * r1];
            for j in 0..r2 {
                for k in 0..m {
                    let row = m * j + m * m * k;
                    for i in 0..r1 {
                        buf[i * m + k] = data[row + i];
                    }
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..m {
                    let row = m * j + m * m * k;
                    for i in 0..r1 {
                        data[row + i] = buf[i * m + k];
                    }
                }
            }
        }
    }
}

/// Signed integer frequency of DFT index `idx` on `m` points (`-m/2..m/2-1`).
#[inline]
pub(crate) fn signed_mode(idx: usize, m: usize) -> i64 {
    if idx < m / 2 {
        idx as i64
    } else {
        idx as i64 - m as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_data(len: usize, seed: u64) -> Vec<Complex64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn roundtrip() {
        let f = Fft3::new(8);
        let orig = rand_data(f.len(), 1);
        let mut d = orig.clone();
        f.forward(&mut d);
        f.inverse(&mut d);
        let err = d.iter().zip(&orig).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn matches_direct_dft() {
        let m = 6;
        let f = Fft3::new(m);
        let orig = rand_data(f.len(), 2);
        let mut d = orig.clone();
        f.forward(&mut d);
        let tau = std::f64::consts::TAU;
        for &(a, b, c) in &[(0usize, 0usize, 0usize), (1, 2, 3), (5, 0, 4)] {
            let mut acc = Complex64::default();
            for k in 0..m {
                for j in 0..m {
                    for i in 0..m {
                        let ph = -tau * ((a * i + b * j + c * k) as f64) / m as f64;
                        acc += orig[i + m * (j + m * k)] * Complex64::from_polar(1.0, ph);
                    }
                }
            }
            assert!((acc - d[a + m * (b + m * c)]).norm() < 1e-11);
        }
    }

    #[test]
    fn pruned_matches_full() {
        let m = 12;
        let s = 6;
        let f = Fft3::new(m);
        let mut orig = rand_data(f.len(), 3);
        for idx in 0..orig.len() {
            let (i, j, k) = (idx % m, (idx / m) % m, idx / (m * m));
            if i >= s || j >= s || k >= s {
                orig[idx] = Complex64::default();
            }
        }
        let mut full = orig.clone();
        f.forward(&mut full);
        let mut pruned = orig.clone();
        f.forward_pruned(&mut pruned, s);
        let err = full.iter().zip(&pruned).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        // multiply by something and invert both ways
        for (n, z) in full.iter_mut().enumerate() {
            *z *= (-(n as f64) * 1e-3).exp();
        }
        let mut a = full.clone();
        f.inverse(&mut a);
        let mut b = full;
        f.inverse_pruned(&mut b, s);
        for idx in 0..a.len() {
            let (i, j, k) = (idx % m, (idx / m) % m, idx / (m * m));
            if i < s && j < s && k < s {
                assert!((a[idx] - b[idx]).norm() < 1e-12);
            }
        }
    }
}
