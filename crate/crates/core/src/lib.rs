//! Exact sample paths, martingale decompositions and limit processes for
//! many-server Markovian queues in the QED heavy-traffic regime.
//!
//! The crate is `no_std` (with `alloc`); file formats, the command line and
//! the parallel verification harness live in the `qedq` crate.

// `!(x >= 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![no_std]

extern crate alloc;

pub mod diffusion;
pub mod dist;
pub mod empirical;
pub mod error;
pub mod maps;
pub mod martingale;
pub mod models;
pub mod paths;
pub mod rng;
pub mod scaling;
pub mod stats;

pub use error::{Error, Result};
pub use paths::{Cadlag, GridPath, LinearPath, Regulated, StepPath};
