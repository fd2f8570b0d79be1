//! Interacting drifted Brownian motions indexed by a finite graph with
//! conductances, the hitting-time potential they induce, the Lamperti
//! time-changed opposite-drift system, and the multidimensional
//! Matsumoto-Yor objects built on top of it (Z-process, intertwining
//! kernel, equalities in law).
//!
//! Everything here is desk-scale: dense linear algebra, exact scalar
//! samplers, Euler-Maruyama path engines with Brownian-bridge crossing
//! corrections, and a statistical harness (KS, energy distance, distance
//! correlation) that turns each distributional identity into a
//! reproducible pass/fail check. See [`suite`] for the full verification
//! suite and the pinned reference configurations.

pub mod config;
pub mod error;
pub mod lamperti;
pub mod lattice;
pub mod matsumoto_yor;
pub mod paths;
pub mod potential;
pub mod quad;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod streams;
pub mod suite;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use lattice::{GraphPotentialParams, SquareMatrix};
pub use report::{CheckRecord, VerificationReport};
