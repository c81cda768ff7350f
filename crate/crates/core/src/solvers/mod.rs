//! Ground-state and constrained-minimizer solvers, plus trial-state
//! constructions that certify upper bounds or unboundedness of the energy.

mod config;
mod flow;
mod init;
mod multistart;
mod petviashvili;
mod witness;

pub use config::{InitSpec, SolveReport, SolverConfig};
pub use flow::{constrained_residual, flow_from, normalized_gradient_flow, MONOTONE_SLACK};
pub use init::{gaussian, initial_field, random_smooth_field, transfer, with_mass};
pub use multistart::{minimize_from_starts, multistart_minimize, start_fields, MultistartResult, StartRecord};
pub use petviashvili::{center_peak, ground_state_residual, petviashvili, petviashvili_from};
pub use witness::{
    cutoff, test_function, test_function_energy, unboundedness_witness, BranchReport, Verdict, WitnessReport,
    WITNESS_SCALES,
};
