//! Decentralized averaging and optimization over static and time-varying
//! communication graphs.
//!
//! The crate is organized bottom-up:
//!
//! - [`graphs`]: graph families, time-varying sequences, connectivity certificates
//! - [`mixing`]: weight matrices (Metropolis, lazy Metropolis, equal-neighbor,
//!   epsilon, push-sum) and their second singular values
//! - [`consensus`]: plain, perturbed, accelerated and push-sum averaging
//! - [`objectives`]: local convex objectives, projections and ground-truth optima
//! - [`optimize`]: centralized and decentralized subgradient methods, EXTRA,
//!   DIGing and subgradient-push, with bound checks
//! - [`harness`]: experiment configs, scaling sweeps and the self-test used by
//!   the `dopt` binary

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consensus;
pub mod error;
pub mod graphs;
pub mod harness;
pub mod mixing;
pub mod objectives;
pub mod optimize;
pub mod state;
pub mod stats;

pub use error::{Error, Result};
pub use state::NodeStates;
