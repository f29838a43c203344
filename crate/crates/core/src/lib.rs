//! Non-Markovian open-system dynamics: bath decomposition, correlated noise,
//! stochastic (HOPS) and deterministic (HEOM) hierarchy solvers, and the
//! observables built from propagated states.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod bath;
pub mod error;
pub mod heom;
pub mod hierarchy;
pub mod hops;
pub mod io;
pub mod noise;
pub mod quad;
pub mod system;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
