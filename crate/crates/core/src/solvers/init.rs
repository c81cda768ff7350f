//! Initial guesses and random smooth test fields.

use rand::Rng;

use super::config::InitSpec;
use crate::error::{Error, Result};
use crate::spectral::{resample_affine, Field, Grid};

/// `exp(-|x - c|² / (2 w²))`.
pub fn gaussian(grid: &Grid, width: f64, center: &[f64]) -> Field {
    let c = [center.first().copied().unwrap_or(0.0), center.get(1).copied().unwrap_or(0.0)];
    let w2 = 2.0 * width * width;
    Field::from_fn_real(grid, |x| {
        let r2: f64 = x.iter().zip(&c).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum();
        (-r2 / w2).exp()
    })
}

/// Rescales `u` to mass `a`.
pub fn with_mass(u: &Field, a: f64) -> Result<Field> {
    let m = u.mass();
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Degenerate(format!("cannot normalize a field of mass {m}")));
    }
    Ok(u.scaled((a / m).sqrt()))
}

/// Moves a field onto `grid` in physical coordinates (same `x`, new sampling).
pub fn transfer(u: &Field, grid: &Grid) -> Result<Field> {
    if u.grid().same_as(grid) {
        return Ok(u.clone());
    }
    let zero = vec![0.0; grid.dim()];
    resample_affine(u, grid, 1.0, &zero)
}

pub fn initial_field(grid: &Grid, init: &InitSpec) -> Result<Field> {
    match init {
        InitSpec::Gaussian { width, center } => Ok(gaussian(grid, *width, center)),
        InitSpec::File { path } => {
            let u = crate::io::read_field(path)?;
            if u.grid().dim() != grid.dim() {
                return Err(Error::GridMismatch);
            }
            transfer(&u, grid)
        }
        InitSpec::LatticeMultistart { .. } => Ok(gaussian(grid, 1.0, &[])),
    }
}

/// Sum of one to three Gaussian bumps with random centers in the middle half
/// of the box, log-uniform widths and amplitudes in `[0.5, 1.5]`, optionally
/// with random signs.
pub fn random_smooth_field(grid: &Grid, rng: &mut impl Rng, signed: bool) -> Field {
    let side = grid.side_length();
    let w_lo = (8.0 * grid.spacing()).max(side / 200.0);
    let w_hi = (side / 16.0).max(w_lo * 1.01);
    let count = rng.gen_range(1..=3);
    let mut out = Field::zeros(grid);
    for _ in 0..count {
        let center: Vec<f64> = (0..grid.dim()).map(|_| rng.gen_range(-0.25 * side..0.25 * side)).collect();
        let width = (rng.gen_range(w_lo.ln()..w_hi.ln())).exp();
        let mut amp = rng.gen_range(0.5..1.5);
        if signed && rng.gen_bool(0.5) {
            amp = -amp;
        }
        let bump = gaussian(grid, width, &center);
        out = out.axpy(amp, &bump).expect("same grid");
    }
    out
}
