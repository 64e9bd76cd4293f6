//! Odd-parity linearized gravity on a Schwarzschild background, reduced to
//! spherical-harmonic modes.
//!
//! The crate is `no_std` (with `alloc`). It provides the background
//! geometry, the angular mode constants, the 1+1 mode equations in harmonic
//! gauge together with their Regge-Wheeler reduction, a method-of-lines
//! evolver, energy and current diagnostics, and exact-rational positivity
//! certificates for the radial inequalities behind the decay estimates.

#![no_std]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod harmonics;
pub mod poly;

pub use error::{Error, Result};
pub mod grid;
pub mod modesystem;
pub mod diagnostics;
pub mod evolve;
pub mod certificates;
