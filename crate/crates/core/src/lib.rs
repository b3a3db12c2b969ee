//! Band structures and high-contrast homogenization of periodic
//! Timoshenko beam lattices.
// index loops mirror the tensor notation
#![allow(clippy::needless_range_loop)]

pub mod bloch;
pub mod cli;
pub mod error;
pub mod fem;
pub mod homogenization;
pub mod lattice;
pub mod limit;
pub mod linalg;
pub mod resonance;

pub use error::{Error, PoleKind, Result};
