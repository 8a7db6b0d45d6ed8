//! Reference implementations for tests.
//!
//! Everything here is written for clarity over speed and shares no code with
//! the production crates. Inputs and outputs are plain numbers so a bug in a
//! domain type cannot hide on both sides of a comparison.

pub mod cluster;
pub mod energy;
pub mod grid;
pub mod linalg;
pub mod nn;
pub mod ring;
pub mod spline;
