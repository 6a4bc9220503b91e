//! Pilot-wave numerical laboratory.
//!
//! The crate has three layers:
//!
//! * closed-form singlet/CHSH oracles and brute-force local-hidden-variable
//!   bounds ([`oracle`]),
//! * a two-particle spinor pilot-wave engine on a periodic 1-D domain per
//!   wing — split-step Fourier evolution, guiding-equation trajectories,
//!   Born sampling and Stern-Gerlach style readout ([`engine`]),
//! * ring-lattice models built from that engine: one complete internal
//!   pilot-wave system per spatial cell, a mass-density readout, homogeneity
//!   constraints ([`lattice`]) and diffusion-coupled relaxation dynamics
//!   ([`relax`]).
//!
//! The [`harness`] module runs Bell ensembles over any of the backing models
//! and computes CHSH estimates and settings-independence statistics.
//!
//! With the default `parallel` feature the cell/trajectory/ensemble loops run
//! on rayon; without it the same code runs sequentially. All floating-point
//! reductions are ordered, so results are bit-identical either way.

pub mod engine;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod lattice;
pub mod oracle;
pub mod relax;
pub mod rng;
pub mod snapshot;
pub mod stats;

mod exec;
mod fft;

pub use error::CoreError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
