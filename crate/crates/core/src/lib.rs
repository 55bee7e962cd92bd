//! Discrete-event simulation of a single-user millimeter-wave XR downlink.
//!
//! The crate covers the full chain: phased-array beam synthesis (sector
//! codebooks, quasi-omni patterns and the CoVRage trajectory-covering
//! beam), head motion, a line-of-sight link budget, the 802.11ad
//! beacon-interval MAC with sector-level sweeps, bursty video traffic and
//! frame latency/reliability statistics.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod channel;
pub mod codebook;
pub mod covrage;
pub mod error;
pub mod geometry;
pub mod macsim;
pub mod metrics;
pub mod mobility;
pub mod scenario;

pub use error::{Error, Result};
