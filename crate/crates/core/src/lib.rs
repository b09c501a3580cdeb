//! Gauge-invariant lattice Chern-Simons-Schroedinger model: reduced time
//! evolution, stationary profiles and their continuation in the spacing `h`.

pub mod cli;
pub mod continuation;
pub mod dynamics;
pub mod error;
pub mod fieldio;
pub mod gauge;
pub mod lattice;
pub mod stationary;
pub mod verify;

pub use error::{EvolutionError, IoError, LatticeError};
pub use lattice::{ComplexField, LatticeWindow, ModelParams, RealField, C64};
