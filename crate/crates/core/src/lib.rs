//! Simulation and verification toolkit for discrete and continuum wetting
//! models.
//!
//! The crate is organised bottom-up:
//!
//! * [`field`], [`spectral`], [`grid`], [`rng`], [`io`]: containers, the
//!   diffusive rescaling map, sine-basis norms and seeded randomness.
//! * [`static_models`]: Gibbs samplers for the δ-pinning and strip measures,
//!   reference path laws and the integration-by-parts verifier.
//! * [`lattice_dynamics`]: the reflected gradient system and its rescaled
//!   trajectories.
//! * [`continuum`]: the truncated-drift Bessel SDE, local times and
//!   change-of-measure weights.
//! * [`spde`]: the reflected stochastic heat equation with attraction.
//! * [`stats`] and [`verify`]: verdicts and the acceptance experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuum;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod lattice_dynamics;
pub mod quadrature;
pub mod rng;
pub mod spde;
pub mod spectral;
pub mod static_models;
pub mod stats;
pub mod verify;

pub use error::{Result, WettingError};
pub use field::{embed_caglad, interpolate_lattice, InterpolatedPath, LatticeField, PathKind};
pub use grid::TimeGrid;
pub use rng::{NoiseSource, RandomStream, SeedSpec, ZeroNoise};
pub use spectral::{negative_sobolev_norm, sine_coefficients, SpectralVector};
