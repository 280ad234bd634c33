//! Removal of impulsive cardiac artifacts from multichannel recordings with
//! algebraic differentiators.
//!
//! The processing chain is: design a Jacobi-polynomial kernel whose spectrum
//! nulls the powerline frequency ([`kernel`], [`fir`]), threshold the filtered
//! derivative signal of each channel ([`detect`]), group detections across
//! channels into beats ([`cluster`]), then fit and subtract pulse amplitudes
//! ([`reconstruct`]). [`pipeline`] chains the stages, [`synth`] generates
//! recordings with known ground truth and [`tune`] searches the
//! differentiator parameters.

// Negated comparisons are the NaN-rejecting range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod cluster;
pub mod config;
pub mod detect;
pub mod error;
pub mod fir;
pub mod jacobi;
pub mod kernel;
pub mod pipeline;
pub mod reconstruct;
pub mod record;
pub mod synth;
pub mod tune;

pub use error::{Error, Result};
