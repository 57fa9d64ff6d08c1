//! Core model of a metropolitan decoy-state BB84 network.
//!
//! Everything in this crate is pure computation over explicit inputs and
//! seeded random streams, so it builds without `std` (only `alloc`):
//!
//! - [`phys`]: fiber/detector channel model and per-pulse click sampling.
//! - [`decoy`]: decoy-state bounds on the single-photon gain and error rate,
//!   and the resulting secure key rate.
//! - [`bb84`]: one link's session: pulse trains, sifting, parameter
//!   estimation, Cascade reconciliation and Toeplitz privacy amplification.
//! - [`fabric`]: all-pass optical switch, connection scheduling and trusted
//!   relay key composition.
//! - [`keystore`]: per-pair key pools and the one-time-pad layer.
//! - [`fixtures`]: the measured link data the built-in scenarios start from.
#![no_std]
#![deny(unsafe_code)]
// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bb84;
pub mod bits;
pub mod decoy;
pub mod fabric;
pub mod fixtures;
pub mod keystore;
pub mod phys;

pub use bb84::{Basis, DetectionRecord, PulseClass, PulseRecord};
pub use decoy::{DecoyEstimate, MeasuredStats, RateSettings};
pub use phys::{IntensitySettings, LinkParams};
