//! Subsystems of expanding grid Thurston maps on the pillow sphere.
//!
//! The crate realizes the s×s grid map exactly on rationals, enumerates the
//! tiles of a subsystem, discretizes its split Ruelle operator on depth-k
//! tiles and solves for pressure, eigenfunction, eigenmeasure and
//! equilibrium state. The statistics layer checks equidistribution of
//! preimages, the pressure/moment-generating identity and the rate function
//! of the level-2 large deviation principle.

pub mod combinatorics;
pub mod equilibrium;
pub mod error;
pub mod geometry;
pub mod index;
pub mod potential;
pub mod statistics;
pub mod transfer;
mod tree;

pub use error::{Error, Result};
