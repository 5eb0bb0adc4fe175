//! Low-rank matrix recovery when noise is added to the matrix before it is
//! measured.
//!
//! The pipeline is: draw a [`sensing::MeasurementMap`], synthesize an
//! observation, [`whitening::whiten`] it, and recover the matrix with
//! [`solver::admm_recover`]. [`theory`] holds numerical checks of the
//! recovery guarantees and [`experiments`] drives parameter sweeps.

pub mod error;
pub mod experiments;
pub mod image;
pub mod linalg;
pub mod matfile;
pub mod rng;
pub mod sensing;
pub mod solver;
pub mod theory;
pub mod verify;
pub mod whitening;

pub use error::{Error, Result};
