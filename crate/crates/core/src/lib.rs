//! Density measurement toolkit for cold Rydberg gases.
//!
//! A frozen Rydberg gas swept through a Stark-tuned pair resonance converts
//! a small, density-dependent fraction of its atoms to neighbouring states.
//! This crate models that conversion from first principles — adiabatic
//! crossing probabilities, nearest-neighbour statistics, sweep-rate scaling —
//! and builds on it: a synthetic-experiment simulator, calibration fits that
//! extract the signal-to-density conversion of a detector, and a
//! noise-decomposition analysis for estimating detector gain statistics.
//!
//! Modules:
//!
//! * [`physics`] — transition probabilities and ensemble averages
//! * [`numerics`] — quadrature, kernels, least squares
//! * [`simulator`] — synthetic shot generation
//! * [`calibration`] — signal-to-density model fits
//! * [`noise`] — detector statistics from paired gates
//! * [`dataset`], [`config`], [`report`] — I/O surfaces used by the CLI

pub mod calibration;
pub mod config;
pub mod dataset;
pub mod error;
pub mod noise;
pub mod numerics;
pub mod physics;
pub mod report;
pub mod simulator;

pub use error::{Error, Result};
