use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on the torus `[-L/2, L/2)^dim`.
///
/// Cheap to clone: the FFT plans are shared behind an `Arc` and never mutated.
/// Transform scratch is allocated per call.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

struct GridInner {
    dim: usize,
    n: usize,
    side: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Grid {
    pub fn new(dim: usize, n: usize, side_length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n < 64 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 64, got {n}"
            )));
        }
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side length must be positive, got {side_length}"
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Grid {
            inner: Arc::new(GridInner { dim, n, side: side_length, forward, inverse }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn side_length(&self) -> f64 {
        self.inner.side
    }

    pub fn spacing(&self) -> f64 {
        self.inner.side / self.inner.n as f64
    }

    /// Total number of samples, `N^dim`.
    pub fn len(&self) -> usize {
        self.inner.n.pow(self.inner.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.inner.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.inner.side.powi(self.inner.dim as i32)
    }

    /// Coordinate of sample `j` along any axis.
    pub fn coord(&self, j: usize) -> f64 {
        -0.5 * self.inner.side + j as f64 * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.inner.n).map(|j| self.coord(j)).collect()
    }

    /// Index of the sample sitting at the origin along each axis.
    pub fn origin_index(&self) -> usize {
        self.inner.n / 2
    }

    /// Signed mode number of FFT slot `m` (Nyquist slot maps to `-N/2`).
    pub fn mode(&self, m: usize) -> i64 {
        let n = self.inner.n as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Wavenumber `2πm/L` of FFT slot `m`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * PI * self.mode(m) as f64 / self.inner.side
    }

    /// Largest resolved wavenumber `π/h`.
    pub fn nyquist(&self) -> f64 {
        PI / self.spacing()
    }

    /// Axis indices of flat index `idx` (x fastest).
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        let n = self.inner.n;
        if self.inner.dim == 1 {
            [idx, 0]
        } else {
            [idx % n, idx / n]
        }
    }

    pub fn flatten(&self, ix: usize, iy: usize) -> usize {
        if self.inner.dim == 1 {
            ix
        } else {
            iy * self.inner.n + ix
        }
    }

    /// Physical position of flat index `idx`; the unused second slot is 0 in 1D.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        let [ix, iy] = self.unflatten(idx);
        if self.inner.dim == 1 {
            [self.coord(ix), 0.0]
        } else {
            [self.coord(ix), self.coord(iy)]
        }
    }

    /// `|k|^2` of FFT-layout flat index `idx`.
    pub fn k_squared(&self, idx: usize) -> f64 {
        let [mx, my] = self.unflatten(idx);
        let kx = self.wavenumber(mx);
        if self.inner.dim == 1 {
            kx * kx
        } else {
            let ky = self.wavenumber(my);
            kx * kx + ky * ky
        }
    }

    /// Max-norm of the signed mode vector at FFT-layout flat index `idx`.
    pub fn mode_max_abs(&self, idx: usize) -> u64 {
        let [mx, my] = self.unflatten(idx);
        let a = self.mode(mx).unsigned_abs();
        if self.inner.dim == 1 {
            a
        } else {
            a.max(self.mode(my).unsigned_abs())
        }
    }

    /// Unnormalized forward DFT in place.
    pub fn fft_forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inner.forward);
    }

    /// Inverse DFT in place, normalized so that `inverse(forward(u)) == u`.
    pub fn fft_inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inner.inverse);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "buffer length does not match grid");
        let n = self.inner.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // Rows are contiguous, so one batched call covers every x-line.
        plan.process_with_scratch(data, &mut scratch);
        if self.inner.dim == 2 {
            let mut column = vec![Complex64::new(0.0, 0.0); n];
            for ix in 0..n {
                for iy in 0..n {
                    column[iy] = data[iy * n + ix];
                }
                plan.process_with_scratch(&mut column, &mut scratch);
                for iy in 0..n {
                    data[iy * n + ix] = column[iy];
                }
            }
        }
    }

    /// Same discretization (dimension, points, side length).
    pub fn same_as(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self == other
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.dim == other.inner.dim
            && self.inner.n == other.inner.n
            && self.inner.side.to_bits() == other.inner.side.to_bits()
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.inner.dim)
            .field("n", &self.inner.n)
            .field("side_length", &self.inner.side)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_layout() {
        let g = Grid::new(1, 64, 64.0).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.coord(0), -32.0);
        assert_eq!(g.coord(g.origin_index()), 0.0);
        assert_eq!(g.wavenumber(0), 0.0);
        assert!((g.wavenumber(1) - 2.0 * PI / 64.0).abs() < 1e-15);
        assert!((g.wavenumber(63) + 2.0 * PI / 64.0).abs() < 1e-15);
        assert_eq!(g.mode(32), -32);
    }

    #[test]
    fn two_dimensional_counts() {
        let g = Grid::new(2, 128, 32.0).unwrap();
        assert_eq!(g.len(), 16384);
        assert_eq!(g.spacing(), 0.25);
        let idx = g.flatten(3, 5);
        assert_eq!(g.unflatten(idx), [3, 5]);
        assert_eq!(g.position(idx), [g.coord(3), g.coord(5)]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Grid::new(1, 100, 64.0).is_err());
        assert!(Grid::new(3, 64, 64.0).is_err());
        assert!(Grid::new(1, 32, 64.0).is_err());
        assert!(Grid::new(1, 64, 0.0).is_err());
    }

    #[test]
    fn transform_round_trip_2d() {
        let g = Grid::new(2, 64, 10.0).unwrap();
        let orig: Vec<Complex64> =
            (0..g.len()).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64).cos())).collect();
        let mut buf = orig.clone();
        g.fft_forward(&mut buf);
        g.fft_inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
