//! Simulation, verification harness and command line for many-server
//! queues in the QED heavy-traffic regime, built on `qedq-core`.

// `!(x > 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod experiments;
pub mod harness;
pub mod io;
