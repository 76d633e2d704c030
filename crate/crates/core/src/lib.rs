//! Forward simulation and parameter recovery for rare-earth-ion
//! spectroscopy: spectral hole decay, two- and three-pulse photon echoes,
//! spectral diffusion, persistent-hole broadening and atomic-frequency-comb
//! storage.
//!
//! Quantities are SI throughout (seconds, hertz, tesla, kelvin). Linewidths
//! are full widths at half maximum in hertz, not angular frequency.
//!
//! Data-parallel work goes through [`exec::Exec`]; with the `parallel`
//! feature off every path runs sequentially and gives identical results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod afc;
pub mod cli;
pub mod coherence;
pub mod error;
pub mod exec;
pub mod fitting;
pub mod io;
pub mod model;
pub mod noise;
pub mod population;
pub mod runner;
pub mod trace;
pub mod units;
pub mod verify;
