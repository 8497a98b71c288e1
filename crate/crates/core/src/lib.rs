//! Grid-of-beams downlink channel detection.
//!
//! A base station that knows the downlink channel lives in a finite beam
//! dictionary can detect it from a short uplink transmission, provided the
//! terminal picks its uplink reference sequence as a function of the beam
//! it observed. This crate builds the beam dictionaries, designs the
//! beam-to-sequence mappings, implements the maximum-likelihood detectors
//! for the reciprocal, non-reciprocal, and calibrated-array regimes,
//! evaluates the matching pairwise error probabilities analytically, and
//! reproduces the link-level error and MSE experiments with a seeded
//! Monte Carlo harness.
//!
//! The `beamgrid` binary exposes the batch workflows: `metrics`, `design`,
//! `pep`, `simulate`, and `beamset`.

pub mod beamworld;
pub mod cli;
pub mod detect;
mod error;
mod matfile;
pub mod numerics;
pub mod pep;
pub mod seqmap;
pub mod sim;

pub use error::{Error, Result};
