//! Sweeps `a ↗ a*` at the mass-critical exponent with a periodic potential:
//! blow-up observables, rescaled profiles and scaling-law fits.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::MassSpec;
use crate::functionals::{concentration_function, decay_fit, linear_fit, mass_critical_exponent, EnergyFunctional};
use crate::potentials::{sample_potential, spectral_bottom, PotentialField, PotentialKind, PotentialSpec};
use crate::solvers::{flow_from, petviashvili, start_fields, transfer, with_mass, InitSpec, SolveReport, SolverConfig};
use crate::spectral::{resample_affine, shift, Field, FracMultiplier, Grid, ALIASING_TOLERANCE};

/// Spectral fraction in the top octave above which a sweep grid is refined.
pub const RESOLUTION_TARGET: f64 = 1e-12;
/// Number of trailing records used by the exponent fits.
pub const FIT_RECORDS: usize = 5;
/// Largest tail correction accepted in the moment of `λ0`, relative.
pub const MAX_TAIL_CORRECTION: f64 = 0.1;
/// Share of the mass within half a cell of the peak below which a record
/// counts as spread over the torus.
pub const CONCENTRATED_SHARE: f64 = 0.5;

/// Grid schedule for a sweep: every record starts on `N` points over a box
/// of side `L` and doubles `N` (up to `max_n`) until the minimizer is
/// resolved. `L` stays fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPolicy {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub max_n: usize,
    /// Side and points of the comparison window for rescaled profiles.
    pub window_l: f64,
    pub window_n: usize,
    /// Grid for the critical ground state `Q`.
    pub reference_n: usize,
    pub reference_l: f64,
}

impl GridPolicy {
    pub fn for_dim(dim: usize) -> Self {
        if dim == 1 {
            GridPolicy { n: 8192, l: 64.0, max_n: 65536, window_l: 64.0, window_n: 2048, reference_n: 131072, reference_l: 4096.0 }
        } else {
            GridPolicy { n: 256, l: 16.0, max_n: 1024, window_l: 16.0, window_n: 256, reference_n: 1024, reference_l: 128.0 }
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, n) in [("N", self.n), ("max_n", self.max_n), ("window_n", self.window_n), ("reference_n", self.reference_n)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::Config(format!("sweep.grid.{name} must be an even number of at least 4, got {n}")));
            }
        }
        if self.max_n < self.n {
            return Err(Error::Config(format!("sweep.grid.max_n = {} is below N = {}", self.max_n, self.n)));
        }
        for (name, l) in [("L", self.l), ("window_l", self.window_l), ("reference_l", self.reference_l)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("sweep.grid.{name} must be positive, got {l}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dim: usize,
    pub s: f64,
    /// Must be a periodic power well (or a constant, as a control).
    pub potential: PotentialSpec,
    /// Explicit masses; when absent, `a = a*(1 - 2^{-j})` for `j` in `j_range`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<MassSpec>>,
    pub j_range: [u32; 2],
    pub solver: SolverConfig,
    pub grid: GridPolicy,
    /// Worker threads; results do not depend on it.
    #[serde(skip)]
    pub threads: usize,
}

impl SweepConfig {
    pub fn new(dim: usize, s: f64, potential: PotentialSpec) -> Self {
        SweepConfig {
            dim,
            s,
            potential,
            masses: None,
            j_range: [2, 10],
            solver: SolverConfig { init: InitSpec::LatticeMultistart { count: 1 }, ..Default::default() },
            grid: GridPolicy::for_dim(dim),
            threads: 1,
        }
    }

    pub fn alpha(&self) -> f64 {
        mass_critical_exponent(self.dim, self.s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dim == 1 || self.dim == 2) {
            return Err(Error::Config(format!("sweep.d must be 1 or 2, got {}", self.dim)));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!("sweep.s must lie in (0, 1), got {}", self.s)));
        }
        match self.potential.kind {
            PotentialKind::PeriodicPower | PotentialKind::Constant => {}
            other => {
                return Err(Error::Config(format!(
                    "sweeps need a periodic_power (or constant) potential, got {other:?}"
                )))
            }
        }
        self.potential.validate(self.dim, self.s)?;
        if self.j_range[0] == 0 || self.j_range[1] < self.j_range[0] || self.j_range[1] > 40 {
            return Err(Error::Config(format!("sweep.j_range must satisfy 1 <= j_min <= j_max <= 40, got {:?}", self.j_range)));
        }
        self.solver.validate()?;
        self.grid.validate()
    }

    /// Masses to probe, strictly increasing and below `a_star`.
    pub fn schedule(&self, a_star: f64) -> Result<Vec<f64>> {
        let masses: Vec<f64> = match &self.masses {
            Some(m) => m.iter().map(|m| m.resolve(a_star)).collect(),
            None => (self.j_range[0]..=self.j_range[1]).map(|j| a_star * (1.0 - 0.5f64.powi(j as i32))).collect(),
        };
        if masses.is_empty() {
            return Err(Error::Config("sweep mass schedule is empty".into()));
        }
        if masses.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sweep masses must be strictly increasing".into()));
        }
        if let Some(bad) = masses.iter().find(|a| !(**a > 0.0 && **a < a_star)) {
            return Err(Error::Config(format!("sweep mass {bad} lies outside (0, a*) with a* = {a_star}")));
        }
        Ok(masses)
    }
}

/// Critical ground state and its mass `a* = ‖Q‖²`.
#[derive(Clone, Debug)]
pub struct CriticalProfile {
    pub q: Field,
    pub a_star: f64,
    pub report: SolveReport,
}

pub fn critical_profile(grid: &Grid, s: f64, cfg: &SolverConfig) -> Result<CriticalProfile> {
    let alpha = mass_critical_exponent(grid.dim(), s);
    let (q, report) = petviashvili(grid, s, alpha, cfg)?;
    if !report.converged {
        return Err(Error::Fit(format!(
            "critical ground state did not converge (residual {:.3e}): {}",
            report.residual, report.stop_reason
        )));
    }
    let a_star = q.mass();
    Ok(CriticalProfile { q, a_star, report })
}

/// `β_a = 1 - (a/a*)^{2s/d}`.
pub fn beta(a: f64, a_star: f64, dim: usize, s: f64) -> f64 {
    1.0 - (a / a_star).powf(2.0 * s / dim as f64)
}

/// `∫|x|^p Q0²` with `Q0 = Q/‖Q‖`, split into grid quadrature over
/// `|x| <= L/8` and a fitted power-law tail beyond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub value: f64,
    pub quadrature: f64,
    pub tail: f64,
    pub radius: f64,
    pub decay_exponent: f64,
}

pub fn moment(q: &Field, p: f64, s: f64) -> Result<Moment> {
    let g = q.grid();
    let dim = g.dim();
    let bound = dim as f64 + 4.0 * s;
    if !(p > 0.0 && p < bound) {
        return Err(Error::param(format!("moment order p = {p} must lie in (0, d + 4s = {bound})")));
    }
    let q0 = q.scaled(1.0 / q.mass().sqrt());
    let radius = g.side_length() / 8.0;
    let mut quad = 0.0;
    for (i, v) in q0.values().iter().enumerate() {
        let x = g.position(i);
        let r = x[..dim].iter().map(|c| c * c).sum::<f64>().sqrt();
        if r <= radius {
            quad += r.powf(p) * v.norm_sqr();
        }
    }
    quad *= g.cell_volume();
    let fit = decay_fit(&q0, [0.5 * radius, radius])?;
    let power = p + dim as f64 + 2.0 * fit.exponent;
    if power >= 0.0 {
        return Err(Error::Fit(format!(
            "fitted decay exponent {} leaves |x|^{p} Q0² non-integrable",
            fit.exponent
        )));
    }
    let sphere = if dim == 1 { 2.0 } else { 2.0 * PI };
    let tail = fit.prefactor.powi(2) * sphere * radius.powf(power) / (-power);
    let value = quad + tail;
    if tail > MAX_TAIL_CORRECTION * value {
        return Err(Error::UnderResolved {
            message: format!(
                "moment tail beyond |x| = {radius} is {:.1}% of the total; enlarge L",
                100.0 * tail / value
            ),
            required_n: 2 * g.n(),
        });
    }
    Ok(Moment { value, quadrature: quad, tail, radius, decay_exponent: fit.exponent })
}

/// `λ0 = ((κp/d) ∫|x|^p Q0²)^{1/(2s+p)}`.
pub fn lambda0(kappa: f64, p: f64, dim: usize, s: f64, q: &Field) -> Result<f64> {
    if q.grid().dim() != dim {
        return Err(Error::GridMismatch);
    }
    if !(kappa > 0.0) {
        return Err(Error::param(format!("kappa must be positive, got {kappa}")));
    }
    let m = moment(q, p, s)?;
    Ok((kappa * p / dim as f64 * m.value).powf(1.0 / (2.0 * s + p)))
}

/// A field shifted so its density peak sits at the origin, with the peak
/// split as `y = x_a + z_a`, `x_a ∈ [0,1)^d`, `z_a ∈ ℤ^d`.
#[derive(Clone, Debug)]
pub struct Recentered {
    pub field: Field,
    pub peak: Vec<f64>,
    pub x_a: Vec<f64>,
    pub z_a: Vec<i64>,
}

pub fn recenter_and_split(u: &Field) -> Result<Recentered> {
    let g = u.grid();
    let dim = g.dim();
    let dens: Vec<f64> = u.values().iter().map(|v| v.norm_sqr()).collect();
    let max = dens.iter().cloned().fold(0.0, f64::max);
    let min = dens.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || max - min <= 1e-14 * max {
        return Err(Error::Degenerate("flat field has no density peak".into()));
    }
    let top = u.argmax_modulus();
    let [ix, iy] = g.unflatten(top);
    let n = g.n();
    let at = |jx: usize, jy: usize| dens[if dim == 1 { jx } else { g.flatten(jx, jy) }];
    let refine = |m: f64, c: f64, p: f64| {
        let den = m - 2.0 * c + p;
        if den < 0.0 {
            (0.5 * (m - p) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let h = g.spacing();
    let mut peak = vec![g.coord(ix) + h * refine(at((ix + n - 1) % n, iy), at(ix, iy), at((ix + 1) % n, iy))];
    if dim == 2 {
        peak.push(g.coord(iy) + h * refine(at(ix, (iy + n - 1) % n), at(ix, iy), at(ix, (iy + 1) % n)));
    }
    let z_a: Vec<i64> = peak.iter().map(|y| y.floor() as i64).collect();
    let x_a: Vec<f64> = peak.iter().zip(&z_a).map(|(y, z)| (y - *z as f64).clamp(0.0, 1.0 - f64::EPSILON)).collect();
    let back: Vec<f64> = peak.iter().map(|y| -y).collect();
    let field = shift(u, &back)?;
    Ok(Recentered { field, peak, x_a, z_a })
}

/// Points on `window` needed so that compressing `u` by `scale` keeps all but
/// `ALIASING_TOLERANCE` of its spectrum below Nyquist.
fn window_points(u: &Field, scale: f64, window: &Grid) -> Option<usize> {
    let g = u.grid();
    let spec = u.spectrum();
    let dk = 2.0 * PI / g.side_length();
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    let mut by_k: Vec<(f64, f64)> = spec.iter().enumerate().map(|(i, c)| (g.mode_max_abs(i) as f64 * dk * scale, c.norm_sqr())).collect();
    let nyq = window.nyquist();
    let lost: f64 = by_k.iter().filter(|(k, _)| *k > nyq).map(|(_, e)| e).sum();
    if lost <= ALIASING_TOLERANCE * total {
        return None;
    }
    by_k.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut acc = 0.0;
    let mut k_cut = nyq;
    for (k, e) in by_k {
        acc += e;
        if acc > ALIASING_TOLERANCE * total {
            k_cut = k;
            break;
        }
    }
    let need = (k_cut * window.side_length() / PI).ceil() as usize;
    Some(need.next_power_of_two().max(2 * window.n()))
}

/// `w(x) = β^{d/(2(2s+p))} u(β^{1/(2s+p)} x)` sampled on `window`; `u` must
/// already be recentered.
pub fn rescaled_profile(u: &Field, beta: f64, p: f64, s: f64, window: &Grid) -> Result<Field> {
    let g = u.grid();
    let dim = g.dim();
    if window.dim() != dim {
        return Err(Error::GridMismatch);
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param(format!("beta must lie in (0, 1], got {beta}")));
    }
    if !(p > 0.0) {
        return Err(Error::param(format!("p must be positive, got {p}")));
    }
    let scale = beta.powf(1.0 / (2.0 * s + p));
    if scale * window.side_length() > g.side_length() * (1.0 + 1e-12) {
        return Err(Error::param(format!(
            "comparison window of side {} maps onto {:.4}, beyond the box side {}",
            window.side_length(),
            scale * window.side_length(),
            g.side_length()
        )));
    }
    if let Some(required_n) = window_points(u, scale, window) {
        return Err(Error::UnderResolved {
            message: format!("rescaled profile is not resolved on a window of {} points", window.n()),
            required_n,
        });
    }
    let w = resample_affine(u, window, scale, &vec![0.0; dim])?;
    Ok(w.scaled(beta.powf(dim as f64 / (2.0 * (2.0 * s + p)))))
}

/// `λ^{d/2} Q(λx)` sampled on `grid`.
pub fn dilated_profile(q: &Field, lambda: f64, grid: &Grid) -> Result<Field> {
    let dim = grid.dim();
    let f = resample_affine(q, grid, lambda, &vec![0.0; dim])?;
    Ok(f.scaled(lambda.powf(0.5 * dim as f64)))
}

/// L² and H^s distances between two fields on the same grid.
pub fn profile_distances(w: &Field, target: &Field, s: f64) -> Result<(f64, f64)> {
    let diff = w.sub(target)?;
    let l2 = diff.mass();
    let kin = FracMultiplier::new(w.grid(), s)?.quadratic_form(&diff)?;
    Ok((l2.sqrt(), (l2 + kin).sqrt()))
}

/// `λ` minimizing `‖w - λ^{d/2}Q(λ·)‖` by golden-section search on `[lo, hi]`.
pub fn fit_profile_scale(w: &Field, q: &Field, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::param(format!("bracket [{lo}, {hi}] is not a positive interval")));
    }
    let cost = |lambda: f64| -> Result<f64> {
        let t = dilated_profile(q, lambda, w.grid())?;
        Ok(w.sub(&t)?.mass().sqrt())
    };
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (cost(c)?, cost(d)?);
    while b - a > 1e-6 * (a + b) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = cost(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = cost(d)?;
        }
    }
    let best = 0.5 * (a + b);
    Ok((best, cost(best)?))
}

/// One row of a sweep. `kinetic` and `nonlinear` are the energy terms
/// `½‖(-Δ)^{s/2}u‖²` and `‖u‖^{α+2}_{α+2}/(α+2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub a: f64,
    pub beta_a: f64,
    pub eps_a: f64,
    pub energy: f64,
    pub kinetic: f64,
    pub potential_integral: f64,
    pub nonlinear: f64,
    pub x_a: Vec<f64>,
    pub z_a: Vec<i64>,
    pub profile_l2_dist: f64,
    pub profile_hs_dist: f64,
    pub grid_n: usize,
    pub grid_l: f64,
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
    pub stop_reason: String,
    /// Share of the mass within half a cell of the peak. A spread state is
    /// the torus image of vanishing and has no whole-space counterpart.
    pub concentration: f64,
    /// Energy of a lower torus state spread over the box, set aside in
    /// favour of this concentrated state (see the selection rule).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread_energy: Option<f64>,
}

impl SweepRecord {
    pub fn concentrated(&self) -> bool {
        self.concentration >= CONCENTRATED_SHARE
    }
}

/// CSV text with the fixed column order.
pub fn records_to_csv(records: &[SweepRecord]) -> Result<String> {
    let dim = records.first().map_or(1, |r| r.x_a.len());
    let mut header: Vec<String> = ["a", "beta_a", "eps_a", "energy", "kinetic", "potential_integral", "nonlinear"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let axes = ["x", "y"];
    header.extend((0..dim).map(|i| format!("x_a_{}", axes[i])));
    header.extend((0..dim).map(|i| format!("z_a_{}", axes[i])));
    header.extend(["profile_l2_dist", "profile_hs_dist", "grid_N", "grid_L", "converged"].iter().map(|s| s.to_string()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_error)?;
    for r in records {
        let mut row: Vec<String> = [r.a, r.beta_a, r.eps_a, r.energy, r.kinetic, r.potential_integral, r.nonlinear]
            .iter()
            .map(|v| format!("{v:e}"))
            .collect();
        row.extend(r.x_a.iter().map(|v| format!("{v:e}")));
        row.extend(r.z_a.iter().map(|v| v.to_string()));
        row.push(format!("{:e}", r.profile_l2_dist));
        row.push(format!("{:e}", r.profile_hs_dist));
        row.push(r.grid_n.to_string());
        row.push(format!("{:e}", r.grid_l));
        row.push(r.converged.to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Converged, concentrated records; spread states are not minimizers of the
/// whole-space problem and stay out of the fits.
fn trailing_converged(records: &[SweepRecord]) -> Result<Vec<&SweepRecord>> {
    let mut ok: Vec<&SweepRecord> = records.iter().filter(|r| r.converged && r.concentrated()).collect();
    ok.sort_by(|a, b| a.a.total_cmp(&b.a));
    if ok.len() < FIT_RECORDS {
        return Err(Error::Fit(format!("need {FIT_RECORDS} converged concentrated records, have {}", ok.len())));
    }
    Ok(ok.split_off(ok.len() - FIT_RECORDS))
}

/// Least squares of `log(I(a)/a)` on `log β_a` over the last five converged
/// records (assumes `min V = 0`).
pub fn fit_energy_exponent(records: &[SweepRecord]) -> Result<EnergyFit> {
    let used = trailing_converged(records)?;
    let ratios: Vec<f64> = used.iter().map(|r| r.energy / r.a).collect();
    if ratios.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("I(a)/a must be positive to fit a power law".into()));
    }
    if ratios.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Fit(format!("I(a)/a is not decreasing along the schedule: {ratios:?}")));
    }
    let xs: Vec<f64> = used.iter().map(|r| r.beta_a.ln()).collect();
    let ys: Vec<f64> = ratios.iter().map(|v| v.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys)?;
    Ok(EnergyFit { slope, intercept, r2 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Slope of `log(‖u‖^{α+2}_{α+2} / a^{α/2+1})` on `log β_a`.
    pub nonlinear_slope: f64,
    /// `max (‖(-Δ)^{s/2}u‖²/a) β^{-slope}` over the fitted records.
    pub c3: f64,
    /// `min (‖u‖^{α+2}_{α+2}/a^{α/2+1}) β^{-slope}` over the fitted records.
    pub c4: f64,
    pub lower_bound_holds: bool,
}

/// Slope of `log(‖(-Δ)^{s/2}u_a‖²/a)` on `log β_a`, plus the matching lower
/// bound on the nonlinear term.
pub fn fit_kinetic_exponent(records: &[SweepRecord], dim: usize, s: f64) -> Result<KineticFit> {
    let used = trailing_converged(records)?;
    let alpha = mass_critical_exponent(dim, s);
    let xs: Vec<f64> = used.iter().map(|r| r.beta_a.ln()).collect();
    let kin: Vec<f64> = used.iter().map(|r| 2.0 * r.kinetic / r.a).collect();
    let nl: Vec<f64> = used.iter().map(|r| (alpha + 2.0) * r.nonlinear / r.a.powf(0.5 * alpha + 1.0)).collect();
    if kin.iter().chain(&nl).any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("kinetic and nonlinear terms must be positive".into()));
    }
    if kin.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Fit(format!("kinetic norm is not increasing along the schedule: {kin:?}")));
    }
    let (slope, intercept, r2) = linear_fit(&xs, &kin.iter().map(|v| v.ln()).collect::<Vec<_>>())?;
    let (nonlinear_slope, _, _) = linear_fit(&xs, &nl.iter().map(|v| v.ln()).collect::<Vec<_>>())?;
    let c3 = used.iter().zip(&kin).map(|(r, k)| k * r.beta_a.powf(-slope)).fold(0.0, f64::max);
    let c4 = used.iter().zip(&nl).map(|(r, v)| v * r.beta_a.powf(-slope)).fold(f64::INFINITY, f64::min);
    Ok(KineticFit { slope, intercept, r2, nonlinear_slope, c3, c4, lower_bound_holds: c4 > 0.0 && c4.is_finite() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLimit {
    /// Extrapolated `lim I(a)/a`; should be `½ min V`.
    pub limit_estimate: f64,
    /// `max (I(a)/a - ½min V) β^{-q}` over all records but the last, `q = p/(2s+p)`.
    pub c2: f64,
    pub last_excess: f64,
    pub bound: f64,
    pub positive: bool,
    pub decreasing: bool,
    pub within_bound: bool,
    pub passes: bool,
}

/// Absolute slack allowed when checking that `I(a)/a` does not increase.
pub const RATIO_SLACK: f64 = 1e-6;

/// Whole-space `I(a)/a` for a record: the record energy on the concentrated
/// branch, the vanishing level `½ inf σ` for spread records. `None` when a
/// spread record cannot be placed because `inf σ` is unknown.
pub fn whole_space_level(r: &SweepRecord, inf_sigma: Option<f64>) -> Option<f64> {
    if r.concentrated() {
        Some(r.energy / r.a)
    } else {
        inf_sigma.map(|sigma| 0.5 * sigma)
    }
}

/// Checks that `I(a)/a` decreases to `½ min V` from above no slower than
/// `C₂ β^{p/(2s+p)}`, with `C₂` taken from the earlier records. Spread
/// records count at the vanishing level, see [`whole_space_level`].
pub fn critical_energy_limit(records: &[SweepRecord], min_v: f64, p: f64, s: f64, inf_sigma: Option<f64>) -> Result<EnergyLimit> {
    let mut ok: Vec<(&SweepRecord, f64)> =
        records.iter().filter(|r| r.converged).filter_map(|r| whole_space_level(r, inf_sigma).map(|e| (r, e))).collect();
    ok.sort_by(|a, b| a.0.a.total_cmp(&b.0.a));
    if ok.len() < 2 {
        return Err(Error::Fit(format!("need at least two converged records, have {}", ok.len())));
    }
    let q = p / (2.0 * s + p);
    let excess: Vec<f64> = ok.iter().map(|(_, e)| e - 0.5 * min_v).collect();
    let ok: Vec<&SweepRecord> = ok.into_iter().map(|(r, _)| r).collect();
    let positive = excess.iter().all(|e| *e > 0.0);
    let decreasing = excess.windows(2).all(|w| w[1] <= w[0] + RATIO_SLACK) && excess[excess.len() - 1] < excess[0] - RATIO_SLACK;
    let k = ok.len();
    let c2 = ok[..k - 1].iter().zip(&excess).map(|(r, e)| e / r.beta_a.powf(q)).fold(0.0, f64::max);
    let last_excess = excess[k - 1];
    let bound = 2.0 * c2 * ok[k - 1].beta_a.powf(q);
    let within_bound = last_excess <= bound;
    // Fixed-exponent fit over all records for the extrapolation.
    let log_c = ok.iter().zip(&excess).filter(|(_, e)| **e > 0.0).map(|(r, e)| e.ln() - q * r.beta_a.ln()).collect::<Vec<_>>();
    let c_fit = if log_c.is_empty() { 0.0 } else { (log_c.iter().sum::<f64>() / log_c.len() as f64).exp() };
    let limit_estimate = 0.5 * min_v + last_excess - c_fit * ok[k - 1].beta_a.powf(q);
    Ok(EnergyLimit {
        limit_estimate,
        c2,
        last_excess,
        bound,
        positive,
        decreasing,
        within_bound,
        passes: positive && decreasing && within_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub a: f64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub a_star: f64,
    pub alpha: f64,
    pub lambda0_predicted: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0_fitted: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_kinetic: Option<f64>,
    pub expected_slope_energy: f64,
    pub expected_slope_kinetic: f64,
    /// `λ0^{2s}(d/4s + d/2p)`, the predicted limit of `β^{-p/(2s+p)} I(a)/a`.
    pub predicted_energy_constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_fit: Option<EnergyFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinetic_fit: Option<KineticFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_limit: Option<EnergyLimit>,
    pub profile_dists: Vec<f64>,
    /// Periodic distance from `x_a` of the last record to the well.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_a_distance: Option<f64>,
    pub eps_decreasing: bool,
    pub well: Vec<f64>,
    /// Spectral bottom of `(-Δ)^s + V` on the base grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inf_sigma: Option<f64>,
    /// Smallest probed mass from which every record is concentrated with
    /// `I(a) < (a/2) inf σ`. An empirical stand-in for the existence
    /// threshold, not a bound on it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_a_lower: Option<f64>,
    pub partial: bool,
    pub failures: Vec<SweepFailure>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub summary: SweepSummary,
    pub profile: CriticalProfile,
    /// Rescaled profile of the last record on the comparison window.
    pub last_profile: Option<Field>,
}

/// Everything a record needs that is shared across the schedule.
struct Shared<'a> {
    cfg: &'a SweepConfig,
    profile: &'a CriticalProfile,
    lambda0: f64,
    target: Field,
    window: Grid,
    inf_sigma: Option<f64>,
}

fn periodic_distance(x: &[f64], x0: &[f64]) -> f64 {
    x.iter()
        .zip(x0)
        .map(|(a, b)| {
            let d = (a - b).rem_euclid(1.0);
            d.min(1.0 - d).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

fn needs_refinement(u: &Field, report: &SolveReport, a: f64, s: f64) -> bool {
    let k_nyq = u.grid().nyquist();
    u.top_octave_fraction() > RESOLUTION_TARGET || 2.0 * report.energy.kinetic > 0.25 * a * k_nyq.powf(2.0 * s)
}

struct Candidate {
    u: Field,
    report: SolveReport,
    concentration: f64,
}

/// Whole-space selection among flow results. Mass spreading over the torus
/// is the box image of vanishing, whose whole-space level is `(a/2) inf σ`;
/// the box lowers it by a term of order `a²/L`. A converged concentrated
/// state below that level is therefore preferred to any spread state. Also
/// returns the energy of a lower spread state set aside this way.
fn select_candidate(mut runs: Vec<Candidate>, vanishing_level: Option<f64>) -> (Candidate, Option<f64>) {
    let rank = |c: &Candidate| (if c.report.converged { 0 } else if !c.report.diverged { 1 } else { 2 }, c.report.energy.total);
    let concentrated = |c: &Candidate| c.report.converged && c.concentration >= CONCENTRATED_SHARE;
    let overall = (0..runs.len()).min_by(|&i, &j| rank(&runs[i]).partial_cmp(&rank(&runs[j])).expect("finite energies")).expect("at least one start");
    let focused = (0..runs.len())
        .filter(|&i| concentrated(&runs[i]))
        .min_by(|&i, &j| runs[i].report.energy.total.total_cmp(&runs[j].report.energy.total));
    match (focused, vanishing_level) {
        (Some(i), Some(level)) if runs[i].report.energy.total < level => {
            let e = runs[i].report.energy.total;
            let set_aside = runs
                .iter()
                .filter(|c| c.report.converged && !concentrated(c) && c.report.energy.total < e)
                .map(|c| c.report.energy.total)
                .reduce(f64::min);
            (runs.swap_remove(i), set_aside)
        }
        _ => (runs.swap_remove(overall), None),
    }
}

fn solve_record(sh: &Shared, a: f64) -> Result<(SweepRecord, Field)> {
    let cfg = sh.cfg;
    let dim = cfg.dim;
    let s = cfg.s;
    let alpha = cfg.alpha();
    let a_star = sh.profile.a_star;
    let p = cfg.potential.p;
    let beta_a = beta(a, a_star, dim, s);
    let scale = sh.lambda0 * beta_a.powf(-1.0 / (2.0 * s + p));
    let mut n = cfg.grid.n;
    let mut carried: Option<Field> = None;
    let mut spread_energy = None;
    let (u, report, concentration) = loop {
        let grid = Grid::new(dim, n, cfg.grid.l)?;
        let pot: PotentialField = sample_potential(&cfg.potential, &grid)?;
        let functional = EnergyFunctional::new(&grid, s, alpha, Some(&pot.field))?;
        let starts = match carried.take() {
            Some(prev) => vec![("refined".to_string(), transfer(&prev, &grid)?)],
            None => {
                let well = pot.central_well().unwrap_or_else(|| vec![0.0; dim]);
                let offset: Vec<f64> = well.iter().map(|c| -scale * c).collect();
                let warm = resample_affine(&sh.profile.q, &grid, scale, &offset)?;
                let warm = with_mass(&warm.modulus(), a)?;
                if warm.top_octave_fraction() > RESOLUTION_TARGET && 2 * n <= cfg.grid.max_n {
                    n *= 2;
                    continue;
                }
                let mut starts = vec![("asymptotic profile".to_string(), warm)];
                if matches!(cfg.solver.init, InitSpec::LatticeMultistart { .. }) {
                    starts.extend(start_fields(&grid, Some(&pot), &cfg.solver)?);
                }
                starts
            }
        };
        let mut runs = Vec::with_capacity(starts.len());
        for (_, init) in &starts {
            let (u, report) = flow_from(&functional, init, a, &cfg.solver)?;
            let concentration = concentration_function(&u, 0.5)? / u.mass();
            runs.push(Candidate { u, report, concentration });
        }
        if runs.iter().all(|c| c.report.diverged) {
            return Err(Error::Fit(format!("every start collapsed at a = {a}")));
        }
        let (best, spread) = select_candidate(runs, sh.inf_sigma.map(|sigma| 0.5 * a * sigma));
        spread_energy = spread_energy.or(spread);
        if needs_refinement(&best.u, &best.report, a, s) && 2 * n <= cfg.grid.max_n {
            n *= 2;
            carried = Some(best.u);
            continue;
        }
        break (best.u, best.report, best.concentration);
    };
    let rec = recenter_and_split(&u)?;
    let w = rescaled_profile(&rec.field, beta_a, p, s, &sh.window)?;
    let (l2, hs) = profile_distances(&w, &sh.target, s)?;
    let e = report.energy;
    let record = SweepRecord {
        a,
        beta_a,
        eps_a: (2.0 * e.kinetic).powf(-0.5 / s),
        energy: e.total,
        kinetic: e.kinetic,
        potential_integral: 2.0 * e.potential,
        nonlinear: e.nonlinear,
        x_a: rec.x_a,
        z_a: rec.z_a,
        profile_l2_dist: l2,
        profile_hs_dist: hs,
        grid_n: report.grid_n,
        grid_l: report.grid_l,
        converged: report.converged,
        residual: report.residual,
        iterations: report.iterations,
        stop_reason: report.stop_reason,
        concentration,
        spread_energy: spread_energy.filter(|_| concentration >= CONCENTRATED_SHARE),
    };
    Ok((record, w))
}

/// Runs the sweep. Records are independent and may be computed on
/// `cfg.threads` workers; the output is ordered by `a` either way.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let dim = cfg.dim;
    let s = cfg.s;
    let p = cfg.potential.p;
    let reference = Grid::new(dim, cfg.grid.reference_n, cfg.grid.reference_l)?;
    let q_cfg = SolverConfig { tol_grad: cfg.solver.tol_grad.min(1e-10), ..cfg.solver.clone() };
    let profile = critical_profile(&reference, s, &q_cfg)?;
    let masses = cfg.schedule(profile.a_star)?;
    let lambda0 = if cfg.potential.kind == PotentialKind::PeriodicPower {
        lambda0(cfg.potential.kappa, p, dim, s, &profile.q)?
    } else {
        // A constant potential has no well; compare against Q itself.
        1.0
    };
    let window = Grid::new(dim, cfg.grid.window_n, cfg.grid.window_l)?;
    let target = dilated_profile(&profile.q, lambda0, &window)?;
    let mut sigma_notes = Vec::new();
    let base = sample_potential(&cfg.potential, &Grid::new(dim, cfg.grid.n, cfg.grid.l)?)?;
    let inf_sigma = match spectral_bottom(&base.field, s, &SolverConfig { tol_grad: 1e-10, ..Default::default() }) {
        Ok(b) if b.converged => Some(b.value),
        Ok(b) => {
            sigma_notes.push(format!("spectral bottom did not converge (residual {:.3e})", b.residual));
            None
        }
        Err(e) => {
            sigma_notes.push(format!("spectral bottom: {e}"));
            None
        }
    };
    let shared = Shared { cfg, profile: &profile, lambda0, target, window, inf_sigma };

    let slots: Vec<Mutex<Option<Result<(SweepRecord, Field)>>>> = masses.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.threads.clamp(1, masses.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= masses.len() {
                    break;
                }
                let out = solve_record(&shared, masses[i]);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut last_profile = None;
    for (a, slot) in masses.iter().zip(slots) {
        match slot.into_inner().expect("slot lock").expect("every slot filled") {
            Ok((r, w)) => {
                records.push(r);
                last_profile = Some(w);
            }
            Err(e) => failures.push(SweepFailure { a: *a, message: e.to_string() }),
        }
    }
    let mut notes = sigma_notes;
    let energy_fit = fit_energy_exponent(&records).map_err(|e| notes.push(format!("energy fit: {e}"))).ok();
    let kinetic_fit = fit_kinetic_exponent(&records, dim, s).map_err(|e| notes.push(format!("kinetic fit: {e}"))).ok();
    let min_v = match cfg.potential.kind {
        PotentialKind::Constant => cfg.potential.value,
        _ => 0.0,
    };
    let energy_limit = critical_energy_limit(&records, min_v, p, s, inf_sigma).map_err(|e| notes.push(format!("energy limit: {e}"))).ok();
    let lambda0_fitted = match &last_profile {
        Some(w) => match fit_profile_scale(w, &profile.q, 0.5 * lambda0, 2.0 * lambda0) {
            Ok((l, _)) => Some(l),
            Err(e) => {
                notes.push(format!("profile fit: {e}"));
                None
            }
        },
        None => None,
    };
    let empirical_a_lower = inf_sigma.and_then(|sigma| {
        let below = |r: &SweepRecord| r.converged && r.concentrated() && r.energy < 0.5 * r.a * sigma;
        let tail = records.iter().rev().take_while(|r| below(r)).count();
        (tail > 0).then(|| records[records.len() - tail].a)
    });
    let spread = records.iter().filter(|r| r.converged && !r.concentrated()).count();
    if spread > 0 {
        notes.push(format!("{spread} records are spread over the torus (no whole-space minimizer); fits skip them"));
    }
    let well = base.x0;
    let x_a_distance = records.last().map(|r| periodic_distance(&r.x_a, &well));
    let eps_decreasing = records.windows(2).all(|w| w[1].eps_a < w[0].eps_a);
    if records.iter().any(|r| !r.converged) {
        notes.push("some records did not converge; fits use converged records only".into());
    }
    let summary = SweepSummary {
        a_star: profile.a_star,
        alpha: cfg.alpha(),
        lambda0_predicted: lambda0,
        lambda0_fitted,
        slope_energy: energy_fit.map(|f| f.slope),
        slope_kinetic: kinetic_fit.map(|f| f.slope),
        expected_slope_energy: p / (2.0 * s + p),
        expected_slope_kinetic: -2.0 * s / (2.0 * s + p),
        predicted_energy_constant: lambda0.powf(2.0 * s) * (dim as f64 / (4.0 * s) + dim as f64 / (2.0 * p)),
        energy_fit,
        kinetic_fit,
        energy_limit,
        profile_dists: records.iter().map(|r| r.profile_l2_dist).collect(),
        x_a_distance,
        eps_decreasing,
        well,
        inf_sigma,
        empirical_a_lower,
        partial: !failures.is_empty(),
        failures,
        notes,
    };
    Ok(SweepOutcome { records, summary, profile, last_profile })
}
