//! Simulation of IRS-assisted sensing of a target hidden from the base station.
//!
//! The base station illuminates an intelligent reflecting surface with OFDM
//! symbols; the surface redirects the signal to a target and back. The crate
//! covers the channel model, the hierarchical IRS codebook, the OFDM echo
//! front end, detection, 3D hierarchical beam training with refinement,
//! delay-Doppler estimation, Cramér-Rao bounds, multi-target training and a
//! Monte-Carlo harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod codebook;
pub mod dd;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod multi;
pub mod ofdm;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
