use num_complex::Complex64;

use super::Grid;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Samples of a function on a [`Grid`], row-major with x fastest.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
    is_real: bool,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Field { grid: grid.clone(), values: vec![ZERO; grid.len()], is_real: true }
    }

    pub fn from_values(grid: &Grid, values: Vec<Complex64>, is_real: bool) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(format!("sample {i} is not finite")));
        }
        Ok(Field { grid: grid.clone(), values, is_real })
    }

    pub fn from_real(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        Self::from_values(grid, values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(), true)
    }

    /// Samples a real function of position; `x` has length `grid.dim()`.
    pub fn from_fn_real(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.position(i);
                Complex64::new(f(&p[..dim]), 0.0)
            })
            .collect();
        Field { grid: grid.clone(), values, is_real: true }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.position(i);
                f(&p[..dim])
            })
            .collect();
        Field { grid: grid.clone(), values, is_real: false }
    }

    /// Builds a field from Fourier coefficients in FFT layout.
    pub fn from_spectrum(grid: &Grid, mut spectrum: Vec<Complex64>, is_real: bool) -> Self {
        grid.fft_inverse(&mut spectrum);
        let mut f = Field { grid: grid.clone(), values: spectrum, is_real };
        if is_real {
            f.drop_imaginary();
        }
        f
    }

    pub(crate) fn from_parts(grid: &Grid, values: Vec<Complex64>, is_real: bool) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid: grid.clone(), values, is_real }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_real(&self) -> bool {
        self.is_real
    }

    pub fn set_real_hint(&mut self, is_real: bool) {
        self.is_real = is_real;
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    /// Zeroes imaginary parts and marks the field real.
    pub fn drop_imaginary(&mut self) {
        for v in &mut self.values {
            v.im = 0.0;
        }
        self.is_real = true;
    }

    /// Pointwise modulus `|u|`.
    pub fn modulus(&self) -> Field {
        let values = self.values.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect();
        Field { grid: self.grid.clone(), values, is_real: true }
    }

    pub fn scaled(&self, c: f64) -> Field {
        let values = self.values.iter().map(|v| v * c).collect();
        Field { grid: self.grid.clone(), values, is_real: self.is_real }
    }

    pub fn scaled_complex(&self, c: Complex64) -> Field {
        let values = self.values.iter().map(|v| v * c).collect();
        Field { grid: self.grid.clone(), values, is_real: self.is_real && c.im == 0.0 }
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b * c).collect();
        Ok(Field { grid: self.grid.clone(), values, is_real: self.is_real && other.is_real })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    /// Pointwise product with a real sampled function.
    pub fn mul_real(&self, weights: &[f64]) -> Field {
        assert_eq!(weights.len(), self.values.len());
        let values = self.values.iter().zip(weights).map(|(a, w)| a * *w).collect();
        Field { grid: self.grid.clone(), values, is_real: self.is_real }
    }

    pub(crate) fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `∫|u|^2` by the periodic rectangle rule.
    pub fn mass(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// `∫|u|^q`.
    pub fn lp_norm_pow(&self, q: f64) -> f64 {
        let sum: f64 = if q == 2.0 {
            self.values.iter().map(|v| v.norm_sqr()).sum()
        } else {
            self.values.iter().map(|v| v.norm().powf(q)).sum()
        };
        sum * self.grid.cell_volume()
    }

    pub fn lp_norm(&self, q: f64) -> Result<f64> {
        if !(q >= 1.0) {
            return Err(Error::param(format!("L^q norm needs q >= 1, got {q}")));
        }
        Ok(self.lp_norm_pow(q).powf(1.0 / q))
    }

    /// `∫ u conj(v)`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        self.check_grid(other)?;
        let sum: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(sum * self.grid.cell_volume())
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Largest imaginary part relative to the largest modulus.
    pub fn imaginary_ratio(&self) -> f64 {
        let max = self.max_modulus();
        if max == 0.0 {
            return 0.0;
        }
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max) / max
    }

    /// Unnormalized DFT of the samples, FFT layout.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut buf = self.values.clone();
        self.grid.fft_forward(&mut buf);
        buf
    }

    /// Share of spectral energy in the top octave (`|m|_inf > N/4`).
    pub fn top_octave_fraction(&self) -> f64 {
        top_octave_fraction_of(&self.grid, &self.spectrum())
    }

    /// `∫_{|x|>L/4} |u|^2 / mass(u)`.
    pub fn boundary_tail_fraction(&self) -> f64 {
        let total: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let r = 0.25 * self.grid.side_length();
        let dim = self.grid.dim();
        let tail: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let p = self.grid.position(*i);
                p[..dim].iter().map(|x| x * x).sum::<f64>().sqrt() > r
            })
            .map(|(_, v)| v.norm_sqr())
            .sum();
        tail / total
    }

    /// Flat index of the largest `|u|`; ties go to the smallest index.
    pub fn argmax_modulus(&self) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, v) in self.values.iter().enumerate() {
            let m = v.norm_sqr();
            if m > best_val {
                best_val = m;
                best = i;
            }
        }
        best
    }
}

pub(crate) fn top_octave_fraction_of(grid: &Grid, spectrum: &[Complex64]) -> f64 {
    let cut = (grid.n() / 4) as u64;
    let mut total = 0.0;
    let mut top = 0.0;
    for (i, c) in spectrum.iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        if grid.mode_max_abs(i) > cut {
            top += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        top / total
    }
}

/// Mass of `u`.
pub fn mass(u: &Field) -> f64 {
    u.mass()
}

/// `(∫|u|^q)^{1/q}`.
pub fn lp_norm(u: &Field, q: f64) -> Result<f64> {
    u.lp_norm(q)
}

/// `∫ u conj(v)`.
pub fn inner(u: &Field, v: &Field) -> Result<Complex64> {
    u.inner(v)
}
