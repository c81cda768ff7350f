//! Ground states and mass-constrained energy minimizers for the fractional
//! nonlinear Schrödinger equation `(-Δ)^s u + V u = |u|^α u` on a periodic
//! torus, with numerical checks of the associated sharp inequalities,
//! identities and blow-up scaling laws.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod blowup;
pub mod cli;
pub mod functionals;
pub mod io;
pub mod potentials;
pub mod solvers;
pub mod spectral;

pub use error::{Error, Result};
