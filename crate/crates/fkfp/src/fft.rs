//! Square 2D FFTs on row-major buffers and the centered-index shifts.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalized transform along the contiguous (second) index.
    pub fn rows(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.n * self.n);
        let plan = if inverse { &self.inv } else { &self.fwd };
        plan.process(data);
    }

    /// Unnormalized transform along the first index.
    pub fn cols(&self, data: &mut [Complex64], inverse: bool) {
        transpose(data, self.n);
        self.rows(data, inverse);
        transpose(data, self.n);
    }

    /// Unnormalized 2D transform: sign -1 forward, +1 inverse.
    pub fn both(&self, data: &mut [Complex64], inverse: bool) {
        self.rows(data, inverse);
        self.cols(data, inverse);
    }
}

pub fn transpose<T: Copy>(data: &mut [T], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Moves centered index k (frequency (k - n/2) * step) to FFT order and back.
/// For even n the two directions coincide.
pub fn shift2<T: Copy>(data: &mut [T], n: usize) {
    let h = n / 2;
    for i in 0..n {
        data[i * n..(i + 1) * n].rotate_left(h);
    }
    data.rotate_left(h * n);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_roundtrip() {
        let n = 16;
        let orig: Vec<Complex64> = (0..n * n).map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect();
        let mut d = orig.clone();
        let f = Fft2::new(n);
        f.both(&mut d, false);
        f.both(&mut d, true);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a / (n * n) as f64 - b).norm() < 1e-13);
        }
    }

    #[test]
    fn shift_is_involution_and_centers_origin() {
        let n = 8;
        let mut v: Vec<usize> = (0..n * n).collect();
        let idx0 = (n / 2) * n + n / 2;
        shift2(&mut v, n);
        assert_eq!(v[0], idx0);
        shift2(&mut v, n);
        assert!(v.iter().enumerate().all(|(k, &x)| k == x));
    }

    #[test]
    fn transform_of_delta_is_constant() {
        let n = 8;
        let mut d = vec![Complex64::new(0.0, 0.0); n * n];
        d[0] = Complex64::new(1.0, 0.0);
        Fft2::new(n).both(&mut d, false);
        assert!(d.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }
}
