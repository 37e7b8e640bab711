//! Continuous-filter convolutional networks (SchNet) for molecular energies
//! and energy-conserving forces.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: a small reverse-mode engine whose gradients stay
//!   differentiable, needed to train on forces.
//! - [`model`]: embedding, radial basis expansion, filter networks, cfconv,
//!   interaction blocks and the pooled energy head.
//! - [`data`]: conformations, extended-XYZ I/O, splits, ragged batches and a
//!   Morse-potential generator with exact labels.
//! - [`training`]: the combined energy/force loss, Adam, learning-rate decay,
//!   weight averaging and early stopping.
//! - [`verify`]: invariance, finite-difference, work-integral and
//!   molecular-dynamics checks of the physical guarantees.
//! - [`cli`]: the `schnet` command-line front end.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
