//! Evaluation of the trigonometric interpolant of a field at affinely mapped
//! points. Dilations, sub-grid shifts and cross-grid transfers all reduce to
//! evaluating `P(offset + scale * x_j)` on an arithmetic progression, which a
//! chirp-z (Bluestein) transform does in `O(N log N)` per line.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Field, Grid};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Spectral energy fraction above which stretching is refused.
pub const ALIASING_TOLERANCE: f64 = 1e-8;

/// Precomputed chirp-z evaluator for one axis.
struct LineResampler {
    n_src: usize,
    n_out: usize,
    side_src: f64,
    /// `offset + L_src/2 - scale * L_out/2`: source-frame position of output sample 0.
    start: f64,
    /// `scale * h_out`: source-frame step between output samples.
    step: f64,
    m: usize,
    kernel_hat: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    src_forward: Arc<dyn Fft<f64>>,
}

fn phase(x: f64) -> Complex64 {
    // exp(i*pi*x) with x reduced mod 2 first.
    let r = x - 2.0 * (x / 2.0).floor();
    Complex64::from_polar(1.0, PI * r)
}

impl LineResampler {
    fn new(src: &Grid, out: &Grid, scale: f64, offset: f64) -> Self {
        let n_src = src.n();
        let n_out = out.n();
        let side_src = src.side_length();
        let start = offset + 0.5 * side_src - scale * 0.5 * out.side_length();
        let step = scale * out.spacing();
        let m = (2 * n_src + n_out + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let src_forward = planner.plan_fft_forward(n_src);
        // rho = 2*pi*step/L_src; kernel g_t = exp(-i rho t^2 / 2) for t in [-n_src, n_out).
        let r = step / side_src;
        let mut kernel = vec![ZERO; m];
        for t in -(n_src as i64)..(n_out as i64) {
            let tt = (t * t) as f64;
            kernel[t.rem_euclid(m as i64) as usize] = phase(-r * tt);
        }
        let mut scratch = vec![ZERO; forward.get_inplace_scratch_len()];
        forward.process_with_scratch(&mut kernel, &mut scratch);
        LineResampler {
            n_src,
            n_out,
            side_src,
            start,
            step,
            m,
            kernel_hat: kernel,
            forward,
            inverse,
            src_forward,
        }
    }

    /// Evaluates the interpolant of `line` (physical samples) at the output points.
    fn apply(&self, line: &[Complex64], out: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let n = self.n_src;
        let mut coeffs = line.to_vec();
        let need = self
            .src_forward
            .get_inplace_scratch_len()
            .max(self.forward.get_inplace_scratch_len())
            .max(self.inverse.get_inplace_scratch_len());
        if scratch.len() < need {
            scratch.resize(need, ZERO);
        }
        self.src_forward.process_with_scratch(&mut coeffs, scratch);
        let inv_n = 1.0 / n as f64;
        let half = n / 2;
        let r = self.step / self.side_src;
        // q = m + N/2 runs over 0..=N; the Nyquist coefficient is split between q = 0 and q = N.
        let mut buf = vec![ZERO; self.m];
        for q in 0..=n {
            let slot = (q + half) % n;
            let mut c = coeffs[slot] * inv_n;
            if q == 0 || q == n {
                c *= 0.5;
            }
            let mode = q as f64 - half as f64;
            let shift = phase(2.0 * mode * self.start / self.side_src);
            let chirp = phase(r * (q * q) as f64);
            buf[q] = c * shift * chirp;
        }
        self.forward.process_with_scratch(&mut buf, scratch);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inverse.process_with_scratch(&mut buf, scratch);
        let inv_m = 1.0 / self.m as f64;
        for (j, o) in out.iter_mut().enumerate().take(self.n_out) {
            let jj = j as f64;
            // exp(-i rho (N/2) j) * exp(i rho j^2 / 2)
            let post = phase(-r * (n as f64) * jj) * phase(r * jj * jj);
            *o = buf[j] * inv_m * post;
        }
    }
}

/// Samples `v(x) = P_u(offset + scale * x)` on `target`, where `P_u` is the
/// periodic trigonometric interpolant of `u`. Points that leave the source
/// torus see its periodic extension.
pub fn resample_affine(u: &Field, target: &Grid, scale: f64, offset: &[f64]) -> Result<Field> {
    let src = u.grid();
    let dim = src.dim();
    if target.dim() != dim {
        return Err(Error::GridMismatch);
    }
    if offset.len() != dim {
        return Err(Error::param(format!("offset needs {dim} components, got {}", offset.len())));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::param(format!("scale must be positive, got {scale}")));
    }
    let n_src = src.n();
    let n_out = target.n();
    let mut scratch = Vec::new();
    let values = if dim == 1 {
        let rs = LineResampler::new(src, target, scale, offset[0]);
        let mut out = vec![ZERO; n_out];
        rs.apply(u.values(), &mut out, &mut scratch);
        out
    } else {
        // x-lines first: n_src rows of length n_out.
        let rx = LineResampler::new(src, target, scale, offset[0]);
        let mut stage = vec![ZERO; n_src * n_out];
        for iy in 0..n_src {
            let row = &u.values()[iy * n_src..(iy + 1) * n_src];
            rx.apply(row, &mut stage[iy * n_out..(iy + 1) * n_out], &mut scratch);
        }
        let ry = LineResampler::new(src, target, scale, offset[1]);
        let mut out = vec![ZERO; n_out * n_out];
        let mut column = vec![ZERO; n_src];
        let mut col_out = vec![ZERO; n_out];
        for ix in 0..n_out {
            for iy in 0..n_src {
                column[iy] = stage[iy * n_out + ix];
            }
            ry.apply(&column, &mut col_out, &mut scratch);
            for (iy, v) in col_out.iter().enumerate() {
                out[iy * n_out + ix] = *v;
            }
        }
        out
    };
    let mut f = Field::from_parts(target, values, u.is_real());
    if u.is_real() {
        f.drop_imaginary();
    }
    Ok(f)
}

/// Share of spectral energy that a stretch by `lambda > 1` would push past Nyquist.
pub fn stretch_loss_fraction(u: &Field, lambda: f64) -> f64 {
    if lambda <= 1.0 {
        return 0.0;
    }
    let g = u.grid();
    let spec = u.spectrum();
    let limit = (g.n() / 2) as f64 / lambda;
    let mut total = 0.0;
    let mut lost = 0.0;
    for (i, c) in spec.iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        if g.mode_max_abs(i) as f64 > limit {
            lost += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        lost / total
    }
}

/// Mass-preserving dilation `λ^{d/2} u(λx)` by Fourier interpolation.
///
/// For `λ > 1` points whose preimage leaves the source box are set to zero,
/// so the result holds one copy of `u` rather than several periodic images.
/// Refuses (rather than aliasing silently) when `λ > 1` would push more than
/// [`ALIASING_TOLERANCE`] of the spectral energy past the Nyquist mode.
pub fn dilate(u: &Field, lambda: f64) -> Result<Field> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::param(format!("dilation factor must be positive, got {lambda}")));
    }
    if lambda == 1.0 {
        return Ok(u.clone());
    }
    let loss = stretch_loss_fraction(u, lambda);
    if loss > ALIASING_TOLERANCE {
        return Err(Error::Aliasing(format!(
            "dilation by {lambda} moves {loss:.3e} of the spectral energy beyond Nyquist"
        )));
    }
    let dim = u.grid().dim();
    let zero = vec![0.0; dim];
    let mut out = resample_affine(u, u.grid(), lambda, &zero)?;
    if lambda > 1.0 {
        let g = u.grid().clone();
        let half = 0.5 * g.side_length();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            let p = g.position(i);
            if p[..dim].iter().any(|x| lambda * x < -half || lambda * x >= half) {
                *v = ZERO;
            }
        }
    }
    Ok(out.scaled(lambda.powf(0.5 * dim as f64)))
}

/// Circular translation `u(x - offset)` by a Fourier phase factor.
///
/// The Nyquist mode gets the symmetric factor `cos(k_N * offset)` so real
/// fields stay real.
pub fn shift(u: &Field, offset: &[f64]) -> Result<Field> {
    let g = u.grid();
    let dim = g.dim();
    if offset.len() != dim {
        return Err(Error::param(format!("offset needs {dim} components, got {}", offset.len())));
    }
    if offset.iter().all(|o| *o == 0.0) {
        return Ok(u.clone());
    }
    let n = g.n();
    let axis_factor = |o: f64| -> Vec<Complex64> {
        (0..n)
            .map(|m| {
                let k = g.wavenumber(m);
                if m == n / 2 {
                    Complex64::new((k * o).cos(), 0.0)
                } else {
                    Complex64::from_polar(1.0, -k * o)
                }
            })
            .collect()
    };
    let fx = axis_factor(offset[0]);
    let mut spec = u.spectrum();
    if dim == 1 {
        for (c, f) in spec.iter_mut().zip(&fx) {
            *c *= f;
        }
    } else {
        let fy = axis_factor(offset[1]);
        for (i, c) in spec.iter_mut().enumerate() {
            *c *= fx[i % n] * fy[i / n];
        }
    }
    Ok(Field::from_spectrum(g, spec, u.is_real()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::half_frac_norm_sq;

    fn gaussian(g: &Grid, c: f64) -> Field {
        Field::from_fn_real(g, |x| (-(x.iter().map(|v| (v - c) * (v - c)).sum::<f64>()) / 2.0).exp())
    }

    #[test]
    fn identity_resample() {
        let g = Grid::new(1, 128, 20.0).unwrap();
        let u = Field::from_fn(&g, |x| {
            Complex64::new((-x[0] * x[0] / 3.0).exp(), (x[0] * 0.9).sin() * (-x[0] * x[0] / 8.0).exp())
        });
        let v = resample_affine(&u, &g, 1.0, &[0.0]).unwrap();
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn lambda_one_is_identity() {
        let g = Grid::new(1, 64, 20.0).unwrap();
        let u = gaussian(&g, 0.0);
        let v = dilate(&u, 1.0).unwrap();
        assert_eq!(u.values(), v.values());
    }

    #[test]
    fn dilation_matches_analytic_samples() {
        let g = Grid::new(1, 512, 64.0).unwrap();
        let side = g.side_length();
        let u = gaussian(&g, 0.0);
        for &lam in &[0.5, 0.8, 1.7, 2.0] {
            let v = dilate(&u, lam).unwrap();
            let exact = Field::from_fn_real(&g, |x| {
                let y = lam * x[0];
                if y.abs() <= 0.5 * side {
                    lam.sqrt() * (-y * y / 2.0).exp()
                } else {
                    0.0
                }
            });
            let err = v.sub(&exact).unwrap().max_modulus();
            assert!(err < 1e-10, "lambda {lam}: {err}");
            assert!((v.mass() - u.mass()).abs() < 1e-6 * u.mass());
        }
    }

    #[test]
    fn dilation_scales_kinetic_norm() {
        // The |k|^{2s} cusp makes the lattice sum converge slowly in dk, hence the wide box.
        let g = Grid::new(2, 256, 64.0).unwrap();
        let u = Field::from_fn_real(&g, |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1]) / 2.0).exp() * (1.0 + 0.3 * x[0]));
        let s = 0.6;
        let base = half_frac_norm_sq(&u, s).unwrap();
        for &lam in &[0.8, 1.5, 2.0] {
            let v = dilate(&u, lam).unwrap();
            let got = half_frac_norm_sq(&v, s).unwrap();
            let want = lam.powf(2.0 * s) * base;
            assert!(((got - want) / want).abs() < 1e-4, "lambda {lam}: {got} vs {want}");
            assert!(((v.mass() - u.mass()) / u.mass()).abs() < 1e-6);
        }
    }

    #[test]
    fn stretching_a_rough_field_is_refused() {
        let g = Grid::new(1, 64, 8.0).unwrap();
        let u = Field::from_fn_real(&g, |x| (-x[0] * x[0] * 16.0).exp());
        assert!(matches!(dilate(&u, 4.0), Err(Error::Aliasing(_))));
    }

    #[test]
    fn cross_grid_transfer() {
        let coarse = Grid::new(1, 256, 30.0).unwrap();
        let fine = Grid::new(1, 1024, 10.0).unwrap();
        let u = gaussian(&coarse, 1.0);
        let v = resample_affine(&u, &fine, 2.0, &[0.5]).unwrap();
        let exact = Field::from_fn_real(&fine, |x| (-(0.5 + 2.0 * x[0] - 1.0).powi(2) / 2.0).exp());
        assert!(v.sub(&exact).unwrap().max_modulus() < 1e-10);
    }

    #[test]
    fn shift_by_one_cell_rotates_samples() {
        let g = Grid::new(1, 64, 16.0).unwrap();
        let u = Field::from_fn_real(&g, |x| (-(x[0] - 0.3).powi(2)).exp() + 0.1 * (x[0] * PI / 8.0).sin());
        let v = shift(&u, &[g.spacing()]).unwrap();
        let n = g.n();
        for j in 0..n {
            assert!((v.values()[j] - u.values()[(j + n - 1) % n]).norm() < 1e-12);
        }
        assert!(v.is_real());
    }

    #[test]
    fn shift_2d_matches_analytic() {
        let g = Grid::new(2, 64, 16.0).unwrap();
        let u = gaussian(&g, 0.0);
        let v = shift(&u, &[0.37, -1.2]).unwrap();
        let exact = Field::from_fn_real(&g, |x| (-((x[0] - 0.37).powi(2) + (x[1] + 1.2).powi(2)) / 2.0).exp());
        assert!(v.sub(&exact).unwrap().max_modulus() < 1e-10);
        assert!((v.mass() - u.mass()).abs() < 1e-12 * u.mass());
    }
}
