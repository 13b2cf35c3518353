//! A stochastic Hopfield-type diffusion network on `(-1,1)^n` with joint
//! thermal and quantum annealing, plus a one-dimensional Fokker–Planck lab
//! for checking stationarity, spectral gaps and density tracking.
//!
//! Module map:
//!
//! * [`potentials`]: objectives, ranges, derivative checks, benchmark catalog
//! * [`auxiliary`]: auxiliary functions `Ṽ` and effective potentials `V - ΓṼ`
//! * [`schedules`]: thermal and quantum schedules
//! * [`dynamics`]: Euler–Maruyama integrators, ensembles, target sets
//! * [`gibbs`]: Gibbs densities by quadrature, `M*`, set masses, TV distance
//! * [`fpgrid`]: finite-volume generator, spectral gap, density evolution, `z_t`
//! * [`harness`]: experiment configs, presets and reports

pub mod auxiliary;
pub mod dynamics;
pub mod error;
pub mod fpgrid;
pub mod gibbs;
pub mod harness;
pub mod potentials;
pub mod schedules;

pub use error::{QdError, Result};
