//! One-dimensional wave-packet simulation of time-of-arrival measurements
//! under repeated projections, impulsive kicks and a continuous absorbing
//! potential.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod distributions;
pub mod error;
pub mod grid;
pub mod io;
pub mod measurement;
pub mod packets;

pub use error::{Error, Result};
