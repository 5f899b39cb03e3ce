//! Pump-to-signal spatial correlations in type-II SPDC and a synthetic SPAD-array
//! coincidence experiment built on them.
//!
//! The physics layers ([`crystal`], [`biphoton`], [`detection`], [`propagation`])
//! are pure functions of their inputs. [`analysis`] recovers centroids, widths
//! and the angle-correlation law from histograms, and [`harness`] runs the pump
//! angle sweep and writes its outputs.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analysis;
pub mod biphoton;
pub mod config;
pub mod crystal;
pub mod detection;
pub mod error;
pub mod harness;
pub mod propagation;
pub mod quadrature;

pub use error::{Error, Result};
