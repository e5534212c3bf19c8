//! Electrocardiographic imaging on a 2D torso–heart model.
//!
//! The crate reconstructs space-time epicardial potentials from body-surface
//! electrode recordings using a learned Fields-of-Experts regularizer
//! composed of nonconvex ridge functions, alongside Tikhonov and total
//! variation baselines.

pub mod datagen;
pub mod error;
pub mod femcore;
pub mod forward;
pub mod geometry;
pub mod harness;
pub mod regularizer;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/fields.md")]
mod book_fields {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/forward.md")]
mod book_forward {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/regularizers.md")]
mod book_regularizers {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/solvers.md")]
mod book_solvers {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/datagen.md")]
mod book_datagen {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/harness.md")]
mod book_harness {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
