//! Desk-scale simulator for dilute polymeric fluids: the incompressible
//! Navier-Stokes equations coupled to a configuration-space Fokker-Planck
//! equation for Hookean-type bead-spring chains with centre-of-mass
//! diffusion. Time stepping is the cut-off implicit-Euler scheme; every run
//! carries entropy, mass and energy-budget audits alongside the solution.

pub mod cli;
pub mod config;
pub mod coupled;
pub mod diagnostics;
pub mod entropy;
pub mod error;
pub mod fields;
pub mod fp_solver;
pub mod krylov;
pub mod maxwellian;
pub mod ns_solver;
pub mod params;
pub mod qspace;
pub mod scenarios;
pub mod trace_io;
pub mod quad1d;
pub mod xspace;

pub use error::{Error, Result};
