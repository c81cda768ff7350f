use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Field, FracMultiplier, Grid};

/// Parts of `E(u) = ½‖(-Δ)^{s/2}u‖² + ½∫V|u|² - (α+2)^{-1}‖u‖^{α+2}_{α+2}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub nonlinear: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(kinetic: f64, potential: f64, nonlinear: f64) -> Self {
        EnergyBreakdown { kinetic, potential, nonlinear, total: kinetic + potential - nonlinear }
    }

    /// Magnitude of the largest term, the natural scale for rounding slack.
    pub fn scale(&self) -> f64 {
        self.kinetic.abs().max(self.potential.abs()).max(self.nonlinear.abs()).max(self.total.abs())
    }
}

/// Energy-subcritical upper bound `s* = 4s/(d-2s)` (infinite when `d <= 2s`).
pub fn sobolev_critical_exponent(dim: usize, s: f64) -> f64 {
    let d = dim as f64;
    if d > 2.0 * s {
        4.0 * s / (d - 2.0 * s)
    } else {
        f64::INFINITY
    }
}

/// Mass-critical exponent `4s/d`.
pub fn mass_critical_exponent(dim: usize, s: f64) -> f64 {
    4.0 * s / dim as f64
}

/// Checks `s ∈ (0,1)` and `0 < α < s*`.
pub fn check_exponent(dim: usize, s: f64, alpha: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::param(format!("fractional order s must lie in (0, 1), got {s}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::param(format!("nonlinearity exponent alpha must be positive, got {alpha}")));
    }
    let sup = sobolev_critical_exponent(dim, s);
    if alpha >= sup {
        return Err(Error::param(format!(
            "alpha = {alpha} >= 4s/(d-2s) = {sup}: exponent must stay below s* (energy-subcritical range)"
        )));
    }
    Ok(())
}

/// Energy functional bound to one grid, order `s`, exponent `α` and optional
/// potential, so repeated evaluations reuse the multiplier symbol.
#[derive(Clone, Debug)]
pub struct EnergyFunctional {
    mult: FracMultiplier,
    potential: Option<Vec<f64>>,
    alpha: f64,
    coupling: f64,
}

impl EnergyFunctional {
    pub fn new(grid: &Grid, s: f64, alpha: f64, potential: Option<&Field>) -> Result<Self> {
        check_exponent(grid.dim(), s, alpha)?;
        Self::build(grid, s, alpha, 1.0, potential)
    }

    /// Quadratic part only (`½‖(-Δ)^{s/2}u‖² + ½∫V|u|²`), used for the spectral bottom.
    pub fn linear(grid: &Grid, s: f64, potential: Option<&Field>) -> Result<Self> {
        Self::build(grid, s, 1.0, 0.0, potential)
    }

    fn build(grid: &Grid, s: f64, alpha: f64, coupling: f64, potential: Option<&Field>) -> Result<Self> {
        let mult = FracMultiplier::new(grid, s)?;
        let potential = match potential {
            Some(v) => {
                if !v.grid().same_as(grid) {
                    return Err(Error::GridMismatch);
                }
                if v.imaginary_ratio() > 1e-12 {
                    return Err(Error::param("potential must be real-valued"));
                }
                let vals = v.real_parts();
                if vals.iter().all(|x| *x == 0.0) {
                    None
                } else {
                    Some(vals)
                }
            }
            None => None,
        };
        Ok(EnergyFunctional { mult, potential, alpha, coupling })
    }

    pub fn grid(&self) -> &Grid {
        self.mult.grid()
    }

    pub fn order(&self) -> f64 {
        self.mult.order()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn multiplier(&self) -> &FracMultiplier {
        &self.mult
    }

    pub fn potential(&self) -> Option<&[f64]> {
        self.potential.as_deref()
    }

    pub fn has_nonlinearity(&self) -> bool {
        self.coupling != 0.0
    }

    pub fn evaluate(&self, u: &Field) -> Result<EnergyBreakdown> {
        if !u.grid().same_as(self.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(self.evaluate_with_spectrum(u, &u.spectrum()))
    }

    pub(crate) fn evaluate_with_spectrum(&self, u: &Field, spectrum: &[Complex64]) -> EnergyBreakdown {
        let kinetic = 0.5 * self.mult.quadratic_form_spectrum(spectrum);
        let potential = self.potential_part(u);
        let nonlinear = if self.coupling != 0.0 {
            self.coupling * u.lp_norm_pow(self.alpha + 2.0) / (self.alpha + 2.0)
        } else {
            0.0
        };
        EnergyBreakdown::new(kinetic, potential, nonlinear)
    }

    /// `½∫V|u|²`.
    pub fn potential_part(&self, u: &Field) -> f64 {
        match &self.potential {
            Some(v) => {
                let sum: f64 = u.values().iter().zip(v).map(|(a, w)| a.norm_sqr() * w).sum();
                0.5 * sum * u.grid().cell_volume()
            }
            None => 0.0,
        }
    }

    /// `L²` gradient `(-Δ)^s u + V u - |u|^α u` of the discrete energy.
    pub fn gradient(&self, u: &Field) -> Result<Field> {
        if !u.grid().same_as(self.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(self.gradient_with_spectrum(u, &u.spectrum()))
    }

    pub(crate) fn gradient_with_spectrum(&self, u: &Field, spectrum: &[Complex64]) -> Field {
        let mut g = self.mult.apply_spectrum(spectrum, u.is_real());
        let vals = g.values_mut();
        if let Some(v) = &self.potential {
            for ((o, a), w) in vals.iter_mut().zip(u.values()).zip(v) {
                *o += a * *w;
            }
        }
        if self.coupling != 0.0 {
            let half_alpha = 0.5 * self.alpha;
            for (o, a) in vals.iter_mut().zip(u.values()) {
                *o -= a * (self.coupling * a.norm_sqr().powf(half_alpha));
            }
        }
        g
    }
}

/// `E(u)` with the three parts reported separately. Pass `None` for `V ≡ 0`.
pub fn energy(u: &Field, potential: Option<&Field>, s: f64, alpha: f64) -> Result<EnergyBreakdown> {
    EnergyFunctional::new(u.grid(), s, alpha, potential)?.evaluate(u)
}

/// Central finite-difference check of the discrete gradient along the given
/// directions; returns the worst relative mismatch.
pub fn gradient_fd_check(functional: &EnergyFunctional, u: &Field, directions: &[Field], step: f64) -> Result<f64> {
    let g = functional.gradient(u)?;
    let mut worst: f64 = 0.0;
    for v in directions {
        let plus = functional.evaluate(&u.axpy(step, v)?)?.total;
        let minus = functional.evaluate(&u.axpy(-step, v)?)?.total;
        let fd = (plus - minus) / (2.0 * step);
        let analytic = g.inner(v)?.re;
        let scale = analytic.abs().max(fd.abs()).max(1e-300);
        worst = worst.max((fd - analytic).abs() / scale);
    }
    Ok(worst)
}
