use num_complex::Complex64;

use super::{Field, Grid};
use crate::error::{Error, Result};

/// Fourier symbol `|k|^{2s}` of `(-Δ)^s` on a grid, in FFT layout.
///
/// The Nyquist slot uses the magnitude of its positive counterpart, which is
/// what `|k|` gives anyway since `|-N/2| = N/2`.
#[derive(Clone, Debug)]
pub struct FracMultiplier {
    grid: Grid,
    s: f64,
    symbol: Vec<f64>,
}

impl FracMultiplier {
    /// `s` in `(0, 1]`; `s = 1` is the classical Laplacian.
    pub fn new(grid: &Grid, s: f64) -> Result<Self> {
        check_order(s)?;
        let symbol = (0..grid.len()).map(|i| grid.k_squared(i).powf(s)).collect();
        Ok(FracMultiplier { grid: grid.clone(), s, symbol })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.grid().same_as(&self.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `(-Δ)^s u`.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let mut spec = u.spectrum();
        for (c, w) in spec.iter_mut().zip(&self.symbol) {
            *c *= *w;
        }
        Ok(Field::from_spectrum(&self.grid, spec, u.is_real()))
    }

    /// `(-Δ)^s u` from an already transformed `u`.
    pub(crate) fn apply_spectrum(&self, spectrum: &[Complex64], is_real: bool) -> Field {
        let spec = spectrum.iter().zip(&self.symbol).map(|(c, w)| c * *w).collect();
        Field::from_spectrum(&self.grid, spec, is_real)
    }

    /// `‖(-Δ)^{s/2} u‖^2`.
    pub fn quadratic_form(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        Ok(self.quadratic_form_spectrum(&u.spectrum()))
    }

    pub(crate) fn quadratic_form_spectrum(&self, spectrum: &[Complex64]) -> f64 {
        let sum: f64 = spectrum.iter().zip(&self.symbol).map(|(c, w)| c.norm_sqr() * w).sum();
        sum * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// `(I + τ(-Δ)^s)^{-1} u`.
    pub fn resolvent(&self, u: &Field, tau: f64) -> Result<Field> {
        self.check(u)?;
        if !(tau > 0.0) {
            return Err(Error::param(format!("resolvent step must be positive, got {tau}")));
        }
        let mut spec = u.spectrum();
        for (c, w) in spec.iter_mut().zip(&self.symbol) {
            *c /= 1.0 + tau * w;
        }
        Ok(Field::from_spectrum(&self.grid, spec, u.is_real()))
    }
}

fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("fractional order s must lie in (0, 1], got {s}")))
    }
}

/// `(-Δ)^s u` with the Fourier-multiplier definition.
pub fn frac_laplacian(u: &Field, s: f64) -> Result<Field> {
    FracMultiplier::new(u.grid(), s)?.apply(u)
}

/// `‖(-Δ)^{s/2} u‖^2_{L^2}`, i.e. `∫|k|^{2s}|û|^2`.
pub fn half_frac_norm_sq(u: &Field, s: f64) -> Result<f64> {
    FracMultiplier::new(u.grid(), s)?.quadratic_form(u)
}

/// `(I + τ(-Δ)^s)^{-1} u` by Fourier division.
pub fn resolvent_apply(u: &Field, s: f64, tau: f64) -> Result<Field> {
    FracMultiplier::new(u.grid(), s)?.resolvent(u, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn plane_wave(g: &Grid, m: i64) -> Field {
        let k = 2.0 * PI * m as f64 / g.side_length();
        let norm = g.side_length().sqrt();
        Field::from_fn(g, |x| Complex64::new(0.0, k * x[0]).exp() / norm)
    }

    #[test]
    fn plane_wave_is_eigenfunction() {
        let g = Grid::new(1, 64, 64.0).unwrap();
        let k: f64 = 2.0 * PI * 5.0 / 64.0;
        let u = plane_wave(&g, 5);
        let lu = frac_laplacian(&u, 0.3).unwrap();
        let expect = k.powf(0.6);
        for (a, b) in lu.values().iter().zip(u.values()) {
            assert!((a - b * expect).norm() < 1e-14);
        }
        let q = half_frac_norm_sq(&u, 0.3).unwrap();
        assert!((q - expect).abs() < 1e-13);
    }

    #[test]
    fn constant_is_annihilated() {
        let g = Grid::new(2, 64, 5.0).unwrap();
        let u = Field::from_fn_real(&g, |_| 2.5);
        let lu = frac_laplacian(&u, 0.7).unwrap();
        assert!(lu.max_modulus() < 1e-12);
        assert_eq!(half_frac_norm_sq(&Field::zeros(&g), 0.5).unwrap(), 0.0);
        let r = resolvent_apply(&u, 0.7, 3.0).unwrap();
        assert!(r.sub(&u).unwrap().max_modulus() < 1e-13);
    }

    #[test]
    fn rejects_bad_order() {
        let g = Grid::new(1, 64, 5.0).unwrap();
        let u = Field::zeros(&g);
        assert!(frac_laplacian(&u, 0.0).is_err());
        assert!(frac_laplacian(&u, 1.2).is_err());
        assert!(frac_laplacian(&u, 1.0).is_ok());
        assert!(resolvent_apply(&u, 0.5, 0.0).is_err());
    }

    #[test]
    fn resolvent_scales_single_mode_and_inverts() {
        let g = Grid::new(1, 128, 16.0).unwrap();
        let u = plane_wave(&g, 7);
        let k: f64 = 2.0 * PI * 7.0 / 16.0;
        let tau = 0.8;
        let r = resolvent_apply(&u, 0.4, tau).unwrap();
        let factor = 1.0 / (1.0 + tau * k.powf(0.8));
        for (a, b) in r.values().iter().zip(u.values()) {
            assert!((a - b * factor).norm() < 1e-14);
        }
        let v = Field::from_fn_real(&g, |x| (-(x[0] - 1.0).powi(2)).exp() + 0.2 * (x[0] * 0.4).cos());
        let rv = resolvent_apply(&v, 0.4, tau).unwrap();
        let back = rv.axpy(tau, &frac_laplacian(&rv, 0.4).unwrap()).unwrap();
        let err = back.sub(&v).unwrap().mass().sqrt() / v.mass().sqrt();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn classical_limit_matches_second_difference() {
        // s = 1 against the centered stencil: the discrepancy must fall like h^2.
        let mut errs = vec![];
        for &n in &[64usize, 128, 256] {
            let g = Grid::new(1, n, 2.0 * PI).unwrap();
            let k0 = 3.0;
            let u = Field::from_fn_real(&g, |x| (k0 * x[0]).sin());
            let spectral = frac_laplacian(&u, 1.0).unwrap();
            let h = g.spacing();
            let vals = u.real_parts();
            let mut err: f64 = 0.0;
            for j in 0..n {
                let fd = -(vals[(j + 1) % n] - 2.0 * vals[j] + vals[(j + n - 1) % n]) / (h * h);
                err = err.max((fd - spectral.values()[j].re).abs());
                assert!((spectral.values()[j].re - k0 * k0 * vals[j]).abs() < 1e-10);
            }
            errs.push(err);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
        }
    }
}
