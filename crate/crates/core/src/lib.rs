//! Constrained Wasserstein-GAN evasion attacks against black-box NSL-KDD
//! intrusion detectors.
//!
//! The pipeline runs in stages: [`nslkdd`] parses and encodes records,
//! [`ids`] trains the detectors, [`gan`] trains a generator that perturbs
//! only the features allowed by [`constraints`], and [`eval`] measures
//! detection and evasion rates over the experiment grid.

pub mod cli;
pub mod config;
pub mod constraints;
pub mod eval;
pub mod gan;
pub mod ids;
pub mod nslkdd;
pub mod numcore;
pub mod synth;
