//! Several flow runs from different starts; keeps the lowest converged energy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{InitSpec, SolveReport, SolverConfig};
use super::flow::flow_from;
use super::init::{gaussian, initial_field};
use crate::error::Result;
use crate::functionals::EnergyFunctional;
use crate::potentials::PotentialField;
use crate::spectral::{Field, Grid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub label: String,
    pub energy: f64,
    pub converged: bool,
    pub diverged: bool,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct MultistartResult {
    pub field: Field,
    pub report: SolveReport,
    pub starts: Vec<StartRecord>,
    /// True when every start collapsed.
    pub all_diverged: bool,
}

/// Start set: the configured initial guess (or a Gaussian on the central
/// well), plus `count` random single-bump starts when the init asks for a
/// multistart.
///
/// On a box holding a whole number of periods every well is an exact grid
/// translate of the central one, so a single well start covers them all.
pub fn start_fields(grid: &Grid, potential: Option<&PotentialField>, cfg: &SolverConfig) -> Result<Vec<(String, Field)>> {
    let mut starts = Vec::new();
    let width = match &cfg.init {
        InitSpec::Gaussian { width, .. } => *width,
        _ => 1.0,
    };
    let well = potential.and_then(|p| p.central_well());
    match (&cfg.init, &well) {
        (InitSpec::LatticeMultistart { .. }, Some(w)) => {
            starts.push((format!("well {w:?}"), gaussian(grid, width, w)));
        }
        (InitSpec::LatticeMultistart { .. }, None) => {
            starts.push(("gaussian at origin".into(), gaussian(grid, width, &[])));
        }
        (init, _) => starts.push(("configured init".into(), initial_field(grid, init)?)),
    }
    if let InitSpec::LatticeMultistart { count } = cfg.init {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let reach = (0.5 * grid.side_length()).min(4.0);
        for k in 0..count {
            let center: Vec<f64> = (0..grid.dim()).map(|_| rng.gen_range(-reach..reach)).collect();
            let w = width * rng.gen_range(0.5..2.0);
            starts.push((format!("random start {k}"), gaussian(grid, w, &center)));
        }
    }
    Ok(starts)
}

/// Runs the flow from every start and keeps the lowest converged energy
/// (falling back to the lowest non-divergent one).
pub fn multistart_minimize(
    grid: &Grid,
    s: f64,
    alpha: f64,
    potential: Option<&PotentialField>,
    a: f64,
    cfg: &SolverConfig,
) -> Result<MultistartResult> {
    let functional = EnergyFunctional::new(grid, s, alpha, potential.map(|p| &p.field))?;
    let starts = start_fields(grid, potential, cfg)?;
    minimize_from_starts(&functional, &starts, a, cfg)
}

pub fn minimize_from_starts(
    functional: &EnergyFunctional,
    starts: &[(String, Field)],
    a: f64,
    cfg: &SolverConfig,
) -> Result<MultistartResult> {
    let mut records = Vec::with_capacity(starts.len());
    let mut best: Option<(Field, SolveReport)> = None;
    let rank = |r: &SolveReport| (if r.converged { 0 } else if !r.diverged { 1 } else { 2 }, r.energy.total);
    for (label, init) in starts {
        let (u, rep) = flow_from(functional, init, a, cfg)?;
        records.push(StartRecord {
            label: label.clone(),
            energy: rep.energy.total,
            converged: rep.converged,
            diverged: rep.diverged,
            residual: rep.residual,
        });
        let better = match &best {
            None => true,
            Some((_, b)) => {
                let (ca, ea) = rank(&rep);
                let (cb, eb) = rank(b);
                ca < cb || (ca == cb && ea < eb)
            }
        };
        if better {
            best = Some((u, rep));
        }
    }
    let (field, report) = best.expect("at least one start");
    let all_diverged = records.iter().all(|r| r.diverged);
    Ok(MultistartResult { field, report, starts: records, all_diverged })
}
