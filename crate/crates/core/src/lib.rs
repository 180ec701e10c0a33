//! Design and analysis toolkit for a beam-displacer Sagnac source of
//! non-degenerate, polarization-entangled photon pairs.
//!
//! The crate is organized along the signal chain:
//!
//! - [`materials`]: Sellmeier dispersion of calcite, α-BBO and MgO:PPLN.
//! - [`phasematch`]: type-0 quasi-phase matching and temperature tuning.
//! - [`interferometer`]: beam-displacer walk-off, delays and mode overlaps.
//! - [`state`]: the two-photon polarization density matrix.
//! - [`measurement`]: waveplate projectors, visibilities, correlation curves, CHSH.
//! - [`tomography`]: 16-setting tomography, maximum-likelihood reconstruction
//!   and entanglement metrics.
//! - [`countsim`]: time-tag Monte Carlo, coincidence counting and rate algebra.
//! - [`config`], [`pipeline`] and [`cli`]: reproducible runs from a JSON config.
//!
//! Runnable walkthroughs of each stage live in the crate's `examples/`.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod materials;
pub mod phasematch;
pub mod interferometer;
pub mod state;
pub mod measurement;
pub mod tomography;
pub mod countsim;
pub mod config;
pub mod pipeline;
pub mod cli;

pub use error::{Error, Result};
