//! Periodic-torus discretization: grids, sampled fields, the Fourier
//! multiplier `(-Δ)^s`, quadrature, and Fourier-interpolated dilations and
//! shifts.

mod field;
mod grid;
mod multiplier;
mod resample;

pub use field::{inner, lp_norm, mass, Field};
pub(crate) use field::top_octave_fraction_of;
pub use grid::Grid;
pub use multiplier::{frac_laplacian, half_frac_norm_sq, resolvent_apply, FracMultiplier};
pub use resample::{dilate, resample_affine, shift, stretch_loss_fraction, ALIASING_TOLERANCE};

/// Builds a grid, rejecting unsupported shapes.
pub fn make_grid(dim: usize, n: usize, side_length: f64) -> crate::Result<Grid> {
    Grid::new(dim, n, side_length)
}
