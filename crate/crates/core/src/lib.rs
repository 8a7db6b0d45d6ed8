//! Historical log analysis for energy-efficient application-layer transfer
//! tuning.
//!
//! The crate turns past transfer records into a recommendation for the three
//! application-layer knobs of an HTTP transfer: concurrency (files in
//! flight), parallelism (byte-range streams per file) and I/O block size.
//!
//! The pipeline is:
//!
//! 1. [`corelog`] cleans raw [`TransferLog`]s and does the energy accounting.
//! 2. [`cluster`] groups similar logs (and similar files) with agglomerative
//!    clustering.
//! 3. [`surface`] interpolates throughput and energy over the parameter
//!    lattice with natural cubic splines, and [`optimize`] maximizes
//!    throughput per joule on that surface.
//! 4. [`learn`] distills the optima into a fixed-size neural predictor that
//!    ships to devices as a 1412-byte blob.
//! 5. [`broker`] is the device side: parameter cache, predictor fallback,
//!    drop detection and mixed-size scheduling.
//!
//! [`sim`] is a closed-form network and power simulator used as ground truth
//! in tests and benchmarks.

pub mod broker;
pub mod cluster;
pub mod config;
pub mod corelog;
pub mod learn;
pub mod optimize;
pub mod sim;
pub mod surface;

pub use corelog::{
    DeviceInfo, EnergyBreakdown, NetInterface, ParamSetting, PowerTrace, TransferLog,
    TransferStatus,
};
