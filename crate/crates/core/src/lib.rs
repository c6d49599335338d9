//! Simulation and inversion toolkit for multi-static SAR imaging of scenes
//! that mix stationary and moving point scatterers.
//!
//! The moving-target problem is linearized over an overcomplete dictionary
//! of velocity hypotheses: every (pixel, velocity) pair owns one column of a
//! matrix-free measurement operator, and reconstruction is a complex l1
//! sparse inversion followed by per-pixel hypothesis selection. The
//! conventional space-velocity-cube matched filter is included as the
//! comparison baseline.
//!
//! Module map:
//! - [`geometry`] / [`scene`]: coordinates, sensor placement, ground truth
//! - [`waveform`]: chirp/CW waveforms and the TDMA pulse schedule
//! - [`forward`]: measurement kernels, forward/adjoint operator, noise
//! - [`dictionary`]: velocity grids and the extended coefficient layout
//! - [`solver`]: FISTA-style l1 solver, selection, exhaustive l0 oracle
//! - [`matched_filter`]: the space-velocity cube baseline
//! - [`analysis`]: k-space coverage, resolution bounds, metrics
//! - [`config`] / [`experiment`] / [`output`]: config-driven runs and files

pub mod analysis;
pub mod config;
pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod geometry;
pub mod matched_filter;
pub mod output;
pub mod scene;
pub mod solver;
pub mod waveform;

pub use error::{Error, Result};
pub use geometry::SPEED_OF_LIGHT;
