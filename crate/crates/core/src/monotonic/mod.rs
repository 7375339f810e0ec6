//! Monotonically constrainable layers: calibrators, multilinear lattices,
//! lattice ensembles, constrained linear maps, and the projection that keeps
//! their parameters feasible after each optimizer step.

mod calibrator;
mod ensemble;
mod lattice;
mod linear;
pub mod projection;

pub use calibrator::{calibrate, Calibrator, CalibratorTrace};
pub use ensemble::{ensemble_forward, EnsembleTrace, LatticeEnsemble};
pub use lattice::{interpolation_weights, lattice_forward, Lattice, LatticeTrace};
pub use linear::{constrained_linear_forward, ConstrainedLinear};
pub use projection::{pava, project_monotone};
