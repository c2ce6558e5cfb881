//! Symplectic Runge–Kutta integration of Hamiltonian systems driven by
//! multi-dimensional fractional Brownian motion.
//!
//! The crate is organised bottom-up:
//!
//! - [`paths`]: exact fBm sample paths and dyadic coarsening,
//! - [`systems`]: vector-field descriptions and the built-in systems,
//! - [`integrators`]: Butcher tableaus, stage solvers, steppers and
//!   trajectory integration with Jacobian propagation,
//! - [`experiments`]: convergence, phase-area and invariant studies.

pub mod csv;
pub mod error;
pub mod experiments;
pub mod integrators;
pub mod paths;
pub mod systems;

pub use error::{Error, Result};

// Compiles the guide's code blocks as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/paths.md")]
    mod paths {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/integrators.md")]
    mod integrators {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
