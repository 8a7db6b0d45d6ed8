//! HTTP transfer engine.
//!
//! [`execute`] runs a [`SchedulePlan`](fasthla_core::broker::SchedulePlan):
//! each cluster keeps at most `cc` files in flight, each file is fetched as
//! `p` byte ranges over separate HTTP/1.1 connections, and every socket read
//! and disk write uses the plan's block size. Ranges are written in place
//! into a preallocated destination file, so they can finish in any order.
//!
//! [`fixture`] is a loopback origin server for tests and demos.

mod client;
mod engine;
pub mod fixture;
mod ranges;
mod report;

pub use client::{content_length, fetch, request, FetchError, FetchOutcome, Reply};
pub use engine::{execute, execute_with, EngineOptions, DEFAULT_RETRIES};
pub use ranges::split_ranges;
pub use report::{emit_log, FileReport, Probe, TransferReport};
