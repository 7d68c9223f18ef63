//! Simulation and analysis toolkit for alkali vapor-cell sensors.
//!
//! The crate synthesizes and fits D1 absorption spectra, saturated-absorption
//! spectra, spin-noise spectra and zero-field (Hanle) resonances, simulates
//! the single-beam magnetometer and its heater loop, and calibrates magnetic
//! sensitivity from noise spectral density.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atomic;
pub mod data;
pub mod error;
pub mod fitkit;
pub mod hanle;
pub mod io;
pub mod lineshape;
pub mod sas;
pub mod sigproc;
pub mod sns;
pub mod thermal;

pub use atomic::{AtomicData, BufferGasCoefficients, Isotope, IsotopeSpec, TransitionLine};
pub use data::{Spectrum, TimeSeries};
pub use error::{Error, Result};
pub use fitkit::{FitResult, LmOptions, Termination};
pub use hanle::{BlochConfig, HanleParams};
