//! Normalized gradient flow for `I(a) = inf { E(u) : ‖u‖² = a }`.
//!
//! Steps follow the semi-implicit preconditioner `(c + (-Δ)^s)^{-1}` with
//! `c ≈ |μ|`, projected onto the tangent space of the mass sphere in the
//! preconditioned metric, with conjugate directions and a line search that
//! never raises the energy. The result is renormalized and taken in modulus.

use std::collections::VecDeque;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{SolveReport, SolverConfig};
use super::init::{initial_field, random_smooth_field, with_mass};
use crate::error::{Error, Result};
use crate::functionals::{gradient_fd_check, EnergyBreakdown, EnergyFunctional};
use crate::spectral::{top_octave_fraction_of, Field, Grid};

/// Relative slack allowed on the per-step energy decrease.
pub const MONOTONE_SLACK: f64 = 1e-12;
const STALL_WINDOW: usize = 50;
const DT_CEILING: f64 = 64.0;
const DT_FLOOR: f64 = 1e-12;
const MAX_SECANT: usize = 6;
const CURVATURE: f64 = 0.1;

/// Constrained residual `‖∇E(u) - μ u‖ / ‖u‖` and `μ = ⟨∇E(u), u⟩ / ‖u‖²`.
pub fn constrained_residual(functional: &EnergyFunctional, u: &Field) -> Result<(f64, f64)> {
    let g = functional.gradient(u)?;
    Ok(residual_of(&g, u))
}

fn residual_of(g: &Field, u: &Field) -> (f64, f64) {
    let m = u.mass();
    let mu = g.inner(u).expect("same grid").re / m;
    let r = g.axpy(-mu, u).expect("same grid");
    ((r.mass() / m).sqrt(), mu)
}

/// Applies `(c + (-Δ)^s)^{-1}`.
fn precondition(functional: &EnergyFunctional, v: &Field, c: f64) -> Field {
    functional.multiplier().resolvent(v, 1.0 / c).expect("same grid").scaled(1.0 / c)
}

fn re_inner(a: &Field, b: &Field) -> f64 {
    a.inner(b).expect("same grid").re
}

/// Retraction onto the sphere of mass `a`, keeping the modulus.
fn retract(u: &Field, tau: f64, d: &Field, a: f64) -> Result<Field> {
    let v = u.axpy(tau, d)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("flow step overflowed".into()));
    }
    with_mass(&v.modulus(), a)
}

struct Point {
    u: Field,
    spec: Vec<Complex64>,
    energy: EnergyBreakdown,
}

impl Point {
    fn new(functional: &EnergyFunctional, u: Field) -> Self {
        let spec = u.spectrum();
        let energy = functional.evaluate_with_spectrum(&u, &spec);
        Point { u, spec, energy }
    }
}

fn smooth_directions(grid: &Grid, a: f64, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d1ec);
    (0..5)
        .map(|_| {
            let v = random_smooth_field(grid, &mut rng, true);
            with_mass(&v, a).expect("nonzero bump")
        })
        .collect()
}

/// Runs the flow from `init` (taken in modulus and rescaled to mass `a`).
pub fn flow_from(functional: &EnergyFunctional, init: &Field, a: f64, cfg: &SolverConfig) -> Result<(Field, SolveReport)> {
    cfg.validate()?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param(format!("mass a must be positive, got {a}")));
    }
    let grid = functional.grid().clone();
    if !init.grid().same_as(&grid) {
        return Err(Error::GridMismatch);
    }
    let mut cur = Point::new(functional, with_mass(&init.modulus(), a)?);
    let mut tau = cfg.dt;
    let tau_max = DT_CEILING * cfg.dt;
    let tau_min = DT_FLOOR * cfg.dt;
    let mut history: VecDeque<(f64, f64)> = VecDeque::with_capacity(STALL_WINDOW + 1);
    let directions = if cfg.gradient_checks { smooth_directions(&grid, a, cfg.rng_seed) } else { Vec::new() };
    let mut fd_worst: Option<f64> = None;
    let mut fd_check = |u: &Field| -> Result<()> {
        if !directions.is_empty() {
            let w = gradient_fd_check(functional, u, &directions, 1e-5)?;
            fd_worst = Some(fd_worst.map_or(w, |v: f64| v.max(w)));
        }
        Ok(())
    };
    let mut iterations = 0;
    let mut diverged = false;
    let mut stop_reason = String::from("iteration limit");
    let (mut residual, mut mu);
    let mut shift = 0.0;
    // Without a potential, mass spreading to the torus scale has no
    // whole-space meaning (the constant state wins on a torus).
    let translation_invariant = functional.potential().is_none() && functional.has_nonlinearity();
    // Previous search direction and the matching `⟨z, r⟩` for conjugacy.
    let mut prev: Option<(Field, Field, f64)> = None;
    let mut grad_cache: Option<Field> = None;
    loop {
        let grad = grad_cache.take().unwrap_or_else(|| functional.gradient_with_spectrum(&cur.u, &cur.spec));
        (residual, mu) = residual_of(&grad, &cur.u);
        let top = top_octave_fraction_of(&grid, &cur.spec);
        if !(cur.energy.total.is_finite() && residual.is_finite()) {
            return Err(Error::NonFinite(format!("flow produced non-finite energy at step {iterations}")));
        }
        if cur.energy.total < cfg.energy_floor || top > cfg.top_octave_limit {
            diverged = true;
            stop_reason = format!(
                "collapse detected: energy {:.3e}, top-octave fraction {top:.3e}",
                cur.energy.total
            );
            break;
        }
        if residual <= cfg.tol_grad {
            stop_reason = "residual below tol_grad".into();
            break;
        }
        if translation_invariant {
            let tail = cur.u.boundary_tail_fraction();
            if tail > cfg.vanishing_tail {
                stop_reason = format!("vanishing: {tail:.3e} of the mass lies beyond L/4, no whole-space minimizer in reach");
                break;
            }
        }
        if iterations >= cfg.max_iter {
            break;
        }
        if iterations == 0 || iterations == 20 {
            fd_check(&cur.u)?;
        }
        history.push_back((cur.energy.total, residual));
        if history.len() > STALL_WINDOW {
            let (e_old, r_old) = history.pop_front().expect("non-empty");
            let change = (e_old - cur.energy.total).abs() / cur.energy.scale().max(f64::MIN_POSITIVE);
            if change <= cfg.tol_energy && residual > 0.99 * r_old {
                stop_reason = format!("energy stalled (relative change {change:.2e} over {STALL_WINDOW} steps)");
                break;
            }
        }

        // Preconditioner (c + (-Δ)^s) with c tracking |μ|; kept fixed while μ drifts little.
        let target = mu.abs().max(1e-8);
        if shift == 0.0 || (target / shift - 1.0).abs() > 0.1 {
            shift = target;
            prev = None;
        }
        let r = grad.axpy(-mu, &cur.u)?;
        let pg = precondition(functional, &grad, shift);
        let pu = precondition(functional, &cur.u, shift);
        let z = pg.axpy(-re_inner(&pg, &cur.u) / re_inner(&pu, &cur.u), &pu)?;
        let zr = re_inner(&z, &r);
        let mut d = z.scaled(-1.0);
        if let Some((d_old, r_old, zr_old)) = prev.take() {
            let beta = (re_inner(&z, &r.sub(&r_old)?) / zr_old).max(0.0);
            if beta > 0.0 {
                let d_old = d_old.axpy(-re_inner(&d_old, &cur.u) / a, &cur.u)?;
                let cand = d.axpy(beta, &d_old)?;
                if re_inner(&cand, &r) < 0.0 {
                    d = cand;
                }
            }
        }
        let slope0 = re_inner(&d, &r);
        let mut searches = 0;

        // Secant search for a zero of the directional derivative. A point is
        // taken once the slope has dropped to half without raising the energy;
        // past the energy's rounding floor only the slope can still tell.
        let mut lo = (0.0, slope0);
        let mut fallback: Option<(Point, Field, f64, f64)> = None;
        let mut t = tau;
        let accepted = loop {
            let trial = Point::new(functional, retract(&cur.u, t, &d, a)?);
            let slack = MONOTONE_SLACK * cur.energy.scale().max(trial.energy.scale());
            if trial.energy.total > cur.energy.total + slack {
                t *= 0.5;
                if t < tau_min {
                    break fallback.map(|(p, g, step, _)| (p, g, step));
                }
                continue;
            }
            let g_t = functional.gradient_with_spectrum(&trial.u, &trial.spec);
            let (_, mu_t) = residual_of(&g_t, &trial.u);
            let slope_t = re_inner(&d, &g_t.axpy(-mu_t, &trial.u)?);
            if slope_t.abs() <= CURVATURE * slope0.abs() || searches >= MAX_SECANT {
                break Some((trial, g_t, t));
            }
            searches += 1;
            // Keep the nearest point to the derivative zero as a fallback.
            if fallback.as_ref().map_or(true, |f| slope_t.abs() < f.3.abs()) {
                fallback = Some((trial, g_t, t, slope_t));
            }
            let next = if slope_t < 0.0 {
                let r = lo.1 - slope_t;
                let step = if r < 0.0 { t + (t - lo.0) * slope_t / r } else { 4.0 * t };
                lo = (t, slope_t);
                step.clamp(1.1 * t, 4.0 * t)
            } else {
                t - (t - lo.0) * slope_t / (slope_t - lo.1)
            };
            t = next.clamp(tau_min, tau_max);
        };
        let Some((next, g_next, step)) = accepted else {
            fd_check(&cur.u)?;
            let Point { u, energy, .. } = cur;
            return Ok(finish(functional, u, energy, FinishState {
                iterations,
                residual,
                mu,
                diverged: false,
                converged: false,
                stop_reason: "step size underflow while enforcing energy decrease".into(),
                fd_worst,
            }));
        };
        tau = step.clamp(tau_min, tau_max);
        prev = Some((d, r, zr));
        cur = next;
        grad_cache = Some(g_next);
        iterations += 1;
    }
    let Point { u, energy, .. } = cur;
    fd_check(&u)?;
    let converged = !diverged && residual <= cfg.tol_grad;
    Ok(finish(functional, u, energy, FinishState { iterations, residual, mu, diverged, converged, stop_reason, fd_worst }))
}

struct FinishState {
    iterations: usize,
    residual: f64,
    mu: f64,
    diverged: bool,
    converged: bool,
    stop_reason: String,
    fd_worst: Option<f64>,
}

fn finish(functional: &EnergyFunctional, u: Field, energy: EnergyBreakdown, st: FinishState) -> (Field, SolveReport) {
    let grid = functional.grid();
    let report = SolveReport {
        converged: st.converged,
        diverged: st.diverged,
        iterations: st.iterations,
        residual: st.residual,
        energy,
        mass: u.mass(),
        boundary_tail_fraction: u.boundary_tail_fraction(),
        top_octave_fraction: u.top_octave_fraction(),
        multiplier: Some(st.mu),
        stop_reason: st.stop_reason,
        grid_n: grid.n(),
        grid_l: grid.side_length(),
        gradient_check: st.fd_worst,
    };
    (u, report)
}

/// Minimizes `E` on the sphere `‖u‖² = a` from `cfg.init`.
pub fn normalized_gradient_flow(
    grid: &Grid,
    s: f64,
    alpha: f64,
    potential: Option<&Field>,
    a: f64,
    cfg: &SolverConfig,
) -> Result<(Field, SolveReport)> {
    let functional = EnergyFunctional::new(grid, s, alpha, potential)?;
    let init = initial_field(grid, &cfg.init)?;
    flow_from(&functional, &init, a, cfg)
}
