//! Structure-preserving finite-difference solvers for stochastic Maxwell
//! equations with additive spectral noise, plus the diagnostics needed to
//! verify their conservation properties statistically.

pub mod diag;
pub mod ensemble;
pub mod integrators;
pub mod mesh;
pub mod noise;
pub mod state;

pub use ensemble::{run_ensemble, ExperimentConfig};
pub use integrators::{plan, SchemeId, StepperPlan};
pub use mesh::{Axis, GridSpec, Lattice};
pub use noise::{NoiseMode, NoiseStream, SpectralBasis};
pub use state::{CouplingVector, FieldMode, FieldState};
