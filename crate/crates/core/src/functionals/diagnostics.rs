//! Lévy concentration function, tail-decay fits and the discrete symmetric
//! decreasing rearrangement.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Field;

/// Minimum number of radius bins a decay fit accepts.
pub const MIN_FIT_SAMPLES: usize = 8;

/// `M(R) = max_y ∫_{B(y,R)} |u|²` over grid centers `y`.
pub fn concentration_function(u: &Field, radius: f64) -> Result<f64> {
    let g = u.grid();
    let half = 0.5 * g.side_length();
    if !(radius > 0.0 && radius < half) {
        return Err(Error::param(format!("radius must lie in (0, L/2) = (0, {half}), got {radius}")));
    }
    let n = g.n();
    let h = g.spacing();
    let r2 = radius * radius;
    // Ball indicator indexed by periodic offset.
    let ball: Vec<Complex64> = (0..g.len())
        .map(|i| {
            let mut d2 = 0.0;
            let mut rest = i;
            for _ in 0..g.dim() {
                let j = rest % n;
                rest /= n;
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                d2 += (m * h) * (m * h);
            }
            Complex64::new(if d2 <= r2 { 1.0 } else { 0.0 }, 0.0)
        })
        .collect();
    let mut density: Vec<Complex64> = u.values().iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect();
    let mut kernel = ball;
    g.fft_forward(&mut density);
    g.fft_forward(&mut kernel);
    for (a, b) in density.iter_mut().zip(&kernel) {
        *a *= b;
    }
    g.fft_inverse(&mut density);
    let best = density.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max) * g.cell_volume();
    Ok(best.clamp(0.0, u.mass()))
}

/// Power-law fit `|Q(x)| ≈ prefactor·|x|^exponent` over a radius window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub window: [f64; 2],
    pub samples: usize,
    /// Slopes over the inner and outer halves of the window.
    pub slope_inner: f64,
    pub slope_outer: f64,
    /// False when the local slope changes by more than 20% across the window.
    pub power_law: bool,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope, intercept and coefficient of determination of a straight-line fit.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Fit(format!("need at least two paired samples, got {} and {}", xs.len(), ys.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite sample in fit".into()));
    }
    let (slope, intercept) = least_squares(xs, ys);
    if !slope.is_finite() {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((slope, intercept, r2))
}

/// Least-squares slope of `log|Q|` against `log|x|` on `[r_lo, r_hi]`, one
/// sample per radius bin of width `h` (the angular maximum in 2D).
pub fn decay_fit(q: &Field, window: [f64; 2]) -> Result<DecayFit> {
    let g = q.grid();
    let [r_lo, r_hi] = window;
    if !(r_lo > 0.0 && r_hi > r_lo) {
        return Err(Error::param(format!("decay window must satisfy 0 < r_lo < r_hi, got [{r_lo}, {r_hi}]")));
    }
    if r_hi >= 0.5 * g.side_length() {
        return Err(Error::param(format!("decay window upper end {r_hi} must stay below L/2")));
    }
    let h = g.spacing();
    let dim = g.dim();
    let first = (r_lo / h).ceil() as usize;
    let last = (r_hi / h).floor() as usize;
    let nbins = (last + 1).saturating_sub(first);
    if nbins < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!("decay window holds {nbins} radius bins, need {MIN_FIT_SAMPLES}")));
    }
    let mut best = vec![(0.0f64, 0.0f64); nbins];
    for (i, v) in q.values().iter().enumerate() {
        let p = g.position(i);
        let r = p[..dim].iter().map(|x| x * x).sum::<f64>().sqrt();
        // Bin b covers [b h - h/2, b h + h/2).
        let b = (r / h + 0.5).floor() as usize;
        if b < first || b > last {
            continue;
        }
        let slot = &mut best[b - first];
        let m = v.norm();
        if m > slot.0 {
            *slot = (m, r);
        }
    }
    let floor = 1e-13 * q.max_modulus();
    let mut xs = Vec::with_capacity(nbins);
    let mut ys = Vec::with_capacity(nbins);
    for (m, r) in &best {
        if *m <= 10.0 * floor {
            return Err(Error::Fit(format!(
                "|Q| = {m:.3e} at r = {r:.3} is within a decade of the rounding floor; shrink the window"
            )));
        }
        xs.push(r.ln());
        ys.push(m.ln());
    }
    let (exponent, intercept, _) = linear_fit(&xs, &ys)?;
    let mid = xs.len() / 2;
    let (slope_inner, _, _) = linear_fit(&xs[..mid], &ys[..mid])?;
    let (slope_outer, _, _) = linear_fit(&xs[mid..], &ys[mid..])?;
    let power_law = (slope_outer - slope_inner).abs() <= 0.2 * exponent.abs();
    Ok(DecayFit {
        exponent,
        prefactor: intercept.exp(),
        window,
        samples: xs.len(),
        slope_inner,
        slope_outer,
        power_law,
    })
}

/// Discrete symmetric decreasing rearrangement: the values of `|u|` sorted in
/// decreasing order, laid onto cells ordered by distance from the origin
/// (ties by flat index).
pub fn rearrange_decreasing(u: &Field) -> Field {
    let g = u.grid();
    let n = g.n() as i64;
    let origin = g.origin_index() as i64;
    let mut mags: Vec<f64> = u.values().iter().map(|v| v.norm()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    // Squared distances in units of h are integers, so the ordering is exact.
    let mut cells: Vec<(i64, usize)> = (0..g.len())
        .map(|i| {
            let mut rest = i as i64;
            let mut d2 = 0;
            for _ in 0..g.dim() {
                let j = rest % n - origin;
                rest /= n;
                d2 += j * j;
            }
            (d2, i)
        })
        .collect();
    cells.sort_unstable();
    let mut values = vec![Complex64::new(0.0, 0.0); g.len()];
    for ((_, cell), m) in cells.iter().zip(mags) {
        values[*cell] = Complex64::new(m, 0.0);
    }
    Field::from_parts(g, values, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;

    fn bump(g: &Grid, c: f64, w: f64, amp: f64) -> Field {
        Field::from_fn_real(g, |x| amp * (-(x[0] - c).powi(2) / (2.0 * w * w)).exp())
    }

    #[test]
    fn concentration_limits() {
        let g = Grid::new(1, 512, 64.0).unwrap();
        let u = bump(&g, 3.0, 0.5, 1.0);
        let m = u.mass();
        assert!(concentration_function(&u, 31.9).unwrap() > m * (1.0 - 1e-12));
        assert!(concentration_function(&u, 2.0).unwrap() >= 0.99 * m);
        assert!(concentration_function(&u, 32.0).is_err());
        assert!(concentration_function(&u, 0.0).is_err());
    }

    #[test]
    fn concentration_sees_two_lumps() {
        let g = Grid::new(1, 512, 64.0).unwrap();
        let a = bump(&g, -16.0, 0.5, 1.0);
        let b = bump(&g, 16.0, 0.5, 1.0);
        let u = a.axpy(1.0, &b).unwrap();
        let m = u.mass();
        let c = concentration_function(&u, 8.0).unwrap();
        assert!((c - 0.5 * m).abs() < 1e-6 * m, "{c} vs {}", 0.5 * m);
    }

    #[test]
    fn concentration_in_two_dims() {
        let g = Grid::new(2, 64, 16.0).unwrap();
        let u = Field::from_fn_real(&g, |x| (-(x[0] - 2.0).powi(2) - (x[1] + 1.0).powi(2)).exp());
        let c = concentration_function(&u, 2.5).unwrap();
        assert!(c > 0.999 * u.mass() && c <= u.mass());
    }

    #[test]
    fn linear_fit_is_exact_on_lines() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -1.5 * x + 0.25).collect();
        let (m, c, r2) = linear_fit(&xs, &ys).unwrap();
        assert!((m + 1.5).abs() < 1e-12 && (c - 0.25).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn decay_of_lorentzian() {
        let g = Grid::new(1, 4096, 256.0).unwrap();
        let q = Field::from_fn_real(&g, |x| 2.0 / (1.0 + x[0] * x[0]));
        let fit = decay_fit(&q, [10.0, 50.0]).unwrap();
        assert!((fit.exponent + 2.0).abs() < 0.1, "{}", fit.exponent);
        assert!(fit.power_law);
        assert!(decay_fit(&q, [10.0, 10.2]).is_err());
        assert!(decay_fit(&q, [10.0, 128.0]).is_err());
    }

    #[test]
    fn gaussian_is_flagged() {
        let g = Grid::new(1, 1024, 64.0).unwrap();
        let q = bump(&g, 0.0, 1.0, 1.0);
        let fit = decay_fit(&q, [1.0, 6.0]).unwrap();
        assert!(!fit.power_law);
        assert!(fit.slope_outer < fit.slope_inner);
    }

    #[test]
    fn rearrangement_preserves_values() {
        let g = Grid::new(2, 64, 10.0).unwrap();
        let u = Field::from_fn_real(&g, |x| (x[0] * 1.3).sin() * (-(x[1] - 1.0).powi(2)).exp());
        let r = rearrange_decreasing(&u);
        let mut a: Vec<f64> = u.values().iter().map(|v| v.norm()).collect();
        let mut b: Vec<f64> = r.real_parts();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        let origin = g.flatten(g.origin_index(), g.origin_index());
        assert_eq!(r.values()[origin].re, u.max_modulus());
    }
}
