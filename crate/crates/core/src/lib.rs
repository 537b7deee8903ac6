//! Semiclassical dynamics of a mobile impurity in a two-dimensional
//! subwavelength array of dipole-coupled two-level emitters.
//!
//! The impurity and lattice atoms exchange excitation through vacuum-mediated
//! coherent (J) and dissipative (Γ) couplings set by the free-space Green's
//! tensor. Spin amplitudes evolve in the single-excitation subspace under a
//! non-Hermitian Hamiltonian while positions and momenta follow classical
//! equations driven by the coupling gradients; the two sectors are integrated
//! self-consistently.
//!
//! Everything is generic over the real scalar type through [`scalar::Real`];
//! `f64` aliases are exported at the crate root and used by the CLI.

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod elimination;
pub mod error;
pub mod greens;
pub mod output;
pub mod scalar;
pub mod spin;
pub mod units;

pub use config::{load_config, parse_config, SimulationConfig};
pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete `f64` aliases for the main types.
pub type Config64 = config::SimulationConfig<f64>;
pub type Engine64 = dynamics::Engine<f64>;
pub type State64 = dynamics::SystemState<f64>;
pub type Record64 = dynamics::TrajectoryRecord<f64>;
pub type FieldMap64 = elimination::FieldMap<f64>;
pub type ExitTimeMap64 = analysis::ExitTimeMap<f64>;
pub type DensityHistogram64 = analysis::DensityHistogram<f64>;
