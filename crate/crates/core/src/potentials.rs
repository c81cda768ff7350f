//! Periodic potentials with a power-law well, hypothesis checks and the
//! bottom of the spectrum of `(-Δ)^s + V`.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{linear_fit, EnergyFunctional};
use crate::solvers::{flow_from, SolverConfig};
use crate::spectral::{Field, Grid};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    Zero,
    /// `κ (Σ sin²(π(x_i - x0_i)) / π²)^{p/2}`.
    PeriodicPower,
    /// `V ≡ value`.
    Constant,
    /// Values read from a field file.
    Samples,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub kappa: f64,
    pub p: f64,
    /// Well location inside the unit cell.
    pub x0: Vec<f64>,
    /// Must equal `N / L` when given.
    pub cells_per_period: Option<usize>,
    pub value: f64,
    pub path: Option<PathBuf>,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec {
            kind: PotentialKind::Zero,
            kappa: 1.0,
            p: 2.0,
            x0: Vec::new(),
            cells_per_period: None,
            value: 0.0,
            path: None,
        }
    }
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialSpec::default()
    }

    pub fn periodic_power(kappa: f64, p: f64, x0: &[f64]) -> Self {
        PotentialSpec { kind: PotentialKind::PeriodicPower, kappa, p, x0: x0.to_vec(), ..Default::default() }
    }

    pub fn constant(value: f64) -> Self {
        PotentialSpec { kind: PotentialKind::Constant, value, ..Default::default() }
    }

    /// Checks the well hypotheses for dimension `dim` and order `s`.
    pub fn validate(&self, dim: usize, s: f64) -> Result<()> {
        if self.kind != PotentialKind::PeriodicPower {
            if self.kind == PotentialKind::Samples && self.path.is_none() {
                return Err(Error::Config("potential.kind = \"samples\" needs potential.path".into()));
            }
            if self.kind == PotentialKind::Constant && !self.value.is_finite() {
                return Err(Error::Config("potential.value must be finite".into()));
            }
            return Ok(());
        }
        let bound = dim as f64 + 4.0 * s;
        if !(self.p > 0.0 && self.p < bound) {
            return Err(Error::Config(format!(
                "potential.p = {} violates 0 < p < d + 4s = {bound} (well exponent hypothesis)",
                self.p
            )));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("potential.kappa must be positive, got {}", self.kappa)));
        }
        let x0 = self.x0_or_origin(dim);
        if x0.len() != dim || x0.iter().any(|c| !(0.0..1.0).contains(c)) {
            return Err(Error::Config(format!("potential.x0 must have {dim} components in [0, 1), got {:?}", self.x0)));
        }
        Ok(())
    }

    fn x0_or_origin(&self, dim: usize) -> Vec<f64> {
        if self.x0.is_empty() {
            vec![0.0; dim]
        } else {
            self.x0.clone()
        }
    }
}

/// A sampled potential together with the snapped well location.
#[derive(Clone, Debug)]
pub struct PotentialField {
    pub spec: PotentialSpec,
    pub field: Field,
    /// Well location after snapping to the grid, in `[0, 1)^d`.
    pub x0: Vec<f64>,
    pub snap_distance: f64,
}

impl PotentialField {
    pub fn is_zero(&self) -> bool {
        self.field.values().iter().all(|v| v.re == 0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.field.values().iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }

    /// Value at a position (nearest sample).
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let g = self.field.grid();
        let idx: Vec<usize> = x
            .iter()
            .map(|xi| {
                let j = ((xi + 0.5 * g.side_length()) / g.spacing()).round() as i64;
                j.rem_euclid(g.n() as i64) as usize
            })
            .collect();
        let flat = if g.dim() == 1 { idx[0] } else { g.flatten(idx[0], idx[1]) };
        self.field.values()[flat].re
    }

    /// Well points `x0 + z` that lie in the box.
    pub fn wells(&self) -> Vec<Vec<f64>> {
        if self.spec.kind != PotentialKind::PeriodicPower {
            return Vec::new();
        }
        let g = self.field.grid();
        let half = 0.5 * g.side_length();
        let per_axis: Vec<Vec<f64>> = self
            .x0
            .iter()
            .map(|c| {
                let lo = (-half - c).ceil() as i64;
                let hi = (half - c).ceil() as i64;
                (lo..hi).map(|z| c + z as f64).filter(|x| *x >= -half && *x < half).collect()
            })
            .collect();
        if g.dim() == 1 {
            per_axis[0].iter().map(|x| vec![*x]).collect()
        } else {
            let mut out = Vec::new();
            for y in &per_axis[1] {
                for x in &per_axis[0] {
                    out.push(vec![*x, *y]);
                }
            }
            out
        }
    }

    /// The well closest to the origin.
    pub fn central_well(&self) -> Option<Vec<f64>> {
        self.wells().into_iter().min_by(|a, b| {
            let da: f64 = a.iter().map(|v| v * v).sum();
            let db: f64 = b.iter().map(|v| v * v).sum();
            da.total_cmp(&db)
        })
    }
}

/// Integer number of grid cells per unit period.
fn cells_per_period(grid: &Grid) -> Result<usize> {
    let side = grid.side_length();
    let periods = side.round();
    if (side - periods).abs() > 1e-9 * side || periods < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "side length {side} is not an integer multiple of the unit period"
        )));
    }
    let periods = periods as usize;
    if grid.n() % periods != 0 {
        return Err(Error::InvalidParameter(format!(
            "N = {} is not divisible by the {periods} periods in the box; cells per period must be an integer",
            grid.n()
        )));
    }
    Ok(grid.n() / periods)
}

/// Samples `V` on the grid. The well is snapped to the nearest grid point so
/// that `min V = 0` holds exactly on the lattice `x0 + ℤ^d`.
pub fn sample_potential(spec: &PotentialSpec, grid: &Grid) -> Result<PotentialField> {
    let dim = grid.dim();
    match spec.kind {
        PotentialKind::Zero => Ok(PotentialField {
            spec: spec.clone(),
            field: Field::zeros(grid),
            x0: vec![0.0; dim],
            snap_distance: 0.0,
        }),
        PotentialKind::Constant => Ok(PotentialField {
            spec: spec.clone(),
            field: Field::from_fn_real(grid, |_| spec.value),
            x0: vec![0.0; dim],
            snap_distance: 0.0,
        }),
        PotentialKind::Samples => {
            let path = spec.path.as_ref().ok_or_else(|| Error::Config("samples potential needs a path".into()))?;
            let f = crate::io::read_field(path)?;
            if !f.grid().same_as(grid) {
                return Err(Error::GridMismatch);
            }
            if f.imaginary_ratio() > 1e-12 {
                return Err(Error::param("potential samples must be real"));
            }
            let mut f = f;
            f.drop_imaginary();
            Ok(PotentialField { spec: spec.clone(), field: f, x0: vec![0.0; dim], snap_distance: 0.0 })
        }
        PotentialKind::PeriodicPower => {
            // The bound p < d + 4s needs the order and is checked by callers.
            if !(spec.p > 0.0 && spec.kappa > 0.0 && spec.kappa.is_finite()) {
                return Err(Error::param(format!("need p > 0 and kappa > 0, got p = {}, kappa = {}", spec.p, spec.kappa)));
            }
            let m = cells_per_period(grid)?;
            if let Some(c) = spec.cells_per_period {
                if c != m {
                    return Err(Error::InvalidParameter(format!("cells_per_period = {c} but the grid has N/L = {m}")));
                }
            }
            let x0 = spec.x0_or_origin(dim);
            if x0.len() != dim || x0.iter().any(|c| !(0.0..1.0).contains(c)) {
                return Err(Error::param(format!("x0 must have {dim} components in [0, 1), got {x0:?}")));
            }
            let h = grid.spacing();
            let half = 0.5 * grid.side_length();
            // Phase of grid index 0 inside the unit cell, in cells.
            let base = (-half).rem_euclid(1.0) / h;
            let mut snapped = Vec::with_capacity(dim);
            let mut well_cell = Vec::with_capacity(dim);
            let mut snap2 = 0.0;
            for c in &x0 {
                // Grid points inside the unit cell sit at (base + j) h mod 1.
                let j = ((c / h - base).round() as i64).rem_euclid(m as i64);
                let pos = ((base + j as f64) * h).rem_euclid(1.0);
                let mut d = (pos - c).abs();
                d = d.min(1.0 - d);
                snap2 += d * d;
                snapped.push(pos);
                well_cell.push(j);
            }
            // Grid index i sits (i - j) cells from the well along each axis, modulo the period.
            let offset0: Vec<i64> = well_cell.iter().map(|j| -*j).collect();
            let kappa = spec.kappa;
            let half_p = 0.5 * spec.p;
            let mm = m as i64;
            let n = grid.n();
            let values: Vec<f64> = (0..grid.len())
                .map(|i| {
                    let mut rest = i;
                    let mut sum = 0.0;
                    for off in offset0.iter().take(dim) {
                        let j = (rest % n) as i64;
                        rest /= n;
                        // Exact cell offset from the nearest well, in [-m/2, m/2).
                        let mut t = (j + off).rem_euclid(mm);
                        if t >= (mm + 1) / 2 {
                            t -= mm;
                        }
                        let sn = (PI * t as f64 / m as f64).sin();
                        sum += sn * sn / (PI * PI);
                    }
                    if sum == 0.0 {
                        0.0
                    } else {
                        kappa * sum.powf(half_p)
                    }
                })
                .collect();
            Ok(PotentialField {
                spec: spec.clone(),
                field: Field::from_real(grid, values)?,
                x0: snapped,
                snap_distance: snap2.sqrt(),
            })
        }
    }
}

/// Fitted local exponent and prefactor of `V` near the well.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WellFit {
    pub p_hat: f64,
    pub kappa_hat: f64,
    pub radii: usize,
}

/// Log-log fit of `V` against `|x - x0|` over `[2h, 0.1]`.
pub fn validate_v3(spec: &PotentialSpec, grid: &Grid) -> Result<WellFit> {
    if spec.kind != PotentialKind::PeriodicPower {
        return Err(Error::param("well fit needs a periodic_power potential"));
    }
    let pf = sample_potential(spec, grid)?;
    let g = grid;
    let h = g.spacing();
    let well = pf.central_well().ok_or_else(|| Error::param("no well inside the box"))?;
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for (i, v) in pf.field.values().iter().enumerate() {
        let p = g.position(i);
        let r = p[..g.dim()].iter().zip(&well).map(|(x, c)| (x - c) * (x - c)).sum::<f64>().sqrt();
        if r >= 2.0 * h * (1.0 - 1e-9) && r <= 0.1 {
            pairs.push((r, v.re));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-9 * b.0);
    if pairs.len() < 8 {
        return Err(Error::Fit(format!(
            "only {} distinct radii in [2h, 0.1]; refine the grid (h = {h})",
            pairs.len()
        )));
    }
    let xs: Vec<f64> = pairs.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, v)| v.ln()).collect();
    let (slope, intercept, _) = linear_fit(&xs, &ys)?;
    Ok(WellFit { p_hat: slope, kappa_hat: intercept.exp(), radii: pairs.len() })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralBottomReport {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub eigenfield: Field,
}

/// `inf σ((-Δ)^s + V)` by the linear normalized flow from the constant state.
pub fn spectral_bottom(v: &Field, s: f64, cfg: &SolverConfig) -> Result<SpectralBottomReport> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::param(format!("fractional order s must lie in (0, 1), got {s}")));
    }
    let grid = v.grid();
    let functional = EnergyFunctional::linear(grid, s, Some(v))?;
    let start = Field::from_fn_real(grid, |_| 1.0);
    let cfg = SolverConfig { gradient_checks: false, ..cfg.clone() };
    let (phi, rep) = flow_from(&functional, &start, 1.0, &cfg)?;
    Ok(SpectralBottomReport {
        value: 2.0 * rep.energy.total / phi.mass(),
        residual: rep.residual,
        iterations: rep.iterations,
        converged: rep.converged,
        eigenfield: phi,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GapCheck {
    pub holds: bool,
    pub min_v: f64,
    pub bottom: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub converged: bool,
}

/// `min V < inf σ((-Δ)^s + V)`, strict by more than the eigen-residual
/// (at least `1e-8`).
pub fn validate_v2(v: &Field, s: f64, cfg: &SolverConfig) -> Result<GapCheck> {
    let rep = spectral_bottom(v, s, cfg)?;
    let min_v = v.values().iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    let tolerance = rep.residual.max(1e-8);
    let margin = rep.value - min_v;
    Ok(GapCheck { holds: margin > tolerance, min_v, bottom: rep.value, margin, tolerance, converged: rep.converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_vanishes_exactly_on_lattice() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let pf = sample_potential(&PotentialSpec::periodic_power(1.0, 2.0, &[0.3]), &g).unwrap();
        let zeros: Vec<f64> = (0..g.len()).filter(|i| pf.field.values()[*i].re == 0.0).map(|i| g.coord(i)).collect();
        assert_eq!(zeros.len(), 8);
        for z in &zeros {
            let frac = (z - pf.x0[0]).rem_euclid(1.0);
            assert!(frac < 1e-12 || 1.0 - frac < 1e-12, "{z}");
        }
        assert!(pf.snap_distance <= 0.5 * g.spacing() + 1e-15);
        assert!(pf.field.values().iter().all(|v| v.re >= 0.0));
    }

    #[test]
    fn lattice_periodicity_is_exact() {
        let g = Grid::new(1, 512, 16.0).unwrap();
        let pf = sample_potential(&PotentialSpec::periodic_power(2.0, 1.3, &[0.71]), &g).unwrap();
        let m = 32;
        let v = pf.field.real_parts();
        for j in 0..g.n() - m {
            assert_eq!(v[j], v[j + m]);
        }
    }

    #[test]
    fn taylor_behavior_near_well() {
        let g = Grid::new(1, 1024, 4.0).unwrap();
        let pf = sample_potential(&PotentialSpec::periodic_power(1.0, 2.0, &[0.0]), &g).unwrap();
        for i in 0..g.len() {
            let x = g.coord(i);
            if x != 0.0 && x.abs() <= 0.05 {
                let ratio = pf.field.values()[i].re / (x * x);
                assert!((ratio - 1.0).abs() < 0.01, "{x}: {ratio}");
            }
        }
    }

    #[test]
    fn rejects_incompatible_box() {
        let g = Grid::new(1, 256, 10.5).unwrap();
        assert!(sample_potential(&PotentialSpec::periodic_power(1.0, 2.0, &[0.0]), &g).is_err());
        let g = Grid::new(1, 256, 3.0).unwrap();
        assert!(sample_potential(&PotentialSpec::periodic_power(1.0, 2.0, &[0.0]), &g).is_err());
    }

    #[test]
    fn well_in_two_dims() {
        let g = Grid::new(2, 128, 4.0).unwrap();
        let pf = sample_potential(&PotentialSpec::periodic_power(1.0, 1.0, &[0.25, 0.5]), &g).unwrap();
        let zeros = pf.field.values().iter().filter(|v| v.re == 0.0).count();
        assert_eq!(zeros, 16);
        assert_eq!(pf.wells().len(), 16);
    }
}
