//! Fourier-layer U-Net that maps a noise trajectory and an initial state to
//! the sequence of stochastic propagators `U_n`, with an explicit reverse
//! pass and an AdamW training loop.

pub mod arch;
pub mod checkpoint;
pub mod encode;
pub mod error;
pub mod gradcheck;
pub mod metric;
pub mod model;
pub mod train;

pub use arch::{ArchConfig, Layout, ModelParams};
pub use error::{Error, Result};
pub use model::Model;
