//! Fairness transfer under distribution shifts.
//!
//! The crate has three layers:
//!
//! * data and learning: [`factorworld`] generates datasets from a fixed
//!   latent-factor model under configurable per-domain marginals,
//!   [`neuralcore`] is a small exact-backprop dense network engine,
//!   [`fairlosses`] and [`selftrain`] implement adversarial fairness
//!   training and the fair-consistency self-training loop;
//! * evaluation: [`metrics`] computes equalized odds, group-accuracy
//!   variance, consistency, and Pareto frontiers;
//! * theory: [`theorylab`] certifies the error and unfairness bounds and
//!   the subpopulation-shift propositions by exact enumeration on finite
//!   worlds.
//!
//! [`harness`] drives reproducible experiments over all of it; the
//! `fairshift` binary is the command-line entry point.

pub mod config;
pub mod error;
pub mod factorworld;
pub mod fairlosses;
pub mod harness;
pub mod metrics;
pub mod neuralcore;
pub mod selftrain;
pub mod theorylab;

pub use error::{Error, Result};
