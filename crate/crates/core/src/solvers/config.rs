use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::EnergyBreakdown;

/// Initial guess for a solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    Gaussian {
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    File {
        path: PathBuf,
    },
    /// One Gaussian per inequivalent potential well plus `count` random smooth starts.
    LatticeMultistart {
        count: usize,
    },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Gaussian { width: 1.0, center: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Initial flow step; the step adapts between `dt/1e12` and `64 dt`.
    pub dt: f64,
    pub tol_grad: f64,
    /// Relative energy change over 50 steps below which a stalled run stops.
    pub tol_energy: f64,
    pub max_iter: usize,
    /// Defaults to `(α+1)/α` when absent.
    pub petviashvili_gamma: Option<f64>,
    pub init: InitSpec,
    pub rng_seed: u64,
    /// Energy below which a flow is declared divergent.
    pub energy_floor: f64,
    /// Top-octave spectral fraction above which a flow is declared divergent.
    pub top_octave_limit: f64,
    /// Without a potential, stop once this share of the mass lies beyond `L/4`.
    pub vanishing_tail: f64,
    /// Run finite-difference gradient checks at three checkpoints.
    pub gradient_checks: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 0.5,
            tol_grad: 1e-8,
            tol_energy: 1e-10,
            max_iter: 200_000,
            petviashvili_gamma: None,
            init: InitSpec::default(),
            rng_seed: 0,
            energy_floor: -1e6,
            top_octave_limit: 1e-3,
            vanishing_tail: 0.02,
            gradient_checks: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("solver.dt must be positive, got {}", self.dt)));
        }
        if !(self.tol_grad > 0.0) || !(self.tol_energy > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("solver.max_iter must be at least 1".into()));
        }
        if let Some(g) = self.petviashvili_gamma {
            if !(g > 1.0) {
                return Err(Error::Config(format!("solver.petviashvili_gamma must exceed 1, got {g}")));
            }
        }
        if !(self.vanishing_tail > 0.0) {
            return Err(Error::Config("solver.vanishing_tail must be positive".into()));
        }
        if !(self.top_octave_limit > 0.0) {
            return Err(Error::Config("solver.top_octave_limit must be positive".into()));
        }
        match &self.init {
            InitSpec::Gaussian { width, .. } if !(*width > 0.0) => {
                Err(Error::Config(format!("solver.init.width must be positive, got {width}")))
            }
            _ => Ok(()),
        }
    }

    pub fn gamma_for(&self, alpha: f64) -> f64 {
        self.petviashvili_gamma.unwrap_or((alpha + 1.0) / alpha)
    }
}

/// Outcome of a solver run. `energy` is the converged `I(a)` estimate for
/// mass-constrained runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub energy: EnergyBreakdown,
    pub mass: f64,
    pub boundary_tail_fraction: f64,
    pub top_octave_fraction: f64,
    /// Lagrange multiplier estimate (mass-constrained runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<f64>,
    pub stop_reason: String,
    pub grid_n: usize,
    pub grid_l: f64,
    /// Worst relative finite-difference gradient mismatch, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_check: Option<f64>,
}
