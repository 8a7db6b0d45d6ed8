//! The guide under `book/` is plain mdbook markdown. Each chapter is pulled in
//! here as a module doc so `cargo test --doc` runs every snippet against the
//! current crates. One module per chapter keeps failures traceable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/parameters.md")]
pub mod parameters {}
#[doc = include_str!("../../../book/src/energy.md")]
pub mod energy {}
#[doc = include_str!("../../../book/src/logs.md")]
pub mod logs {}
#[doc = include_str!("../../../book/src/clustering.md")]
pub mod clustering {}
#[doc = include_str!("../../../book/src/surfaces.md")]
pub mod surfaces {}
#[doc = include_str!("../../../book/src/predictor.md")]
pub mod predictor {}
#[doc = include_str!("../../../book/src/broker.md")]
pub mod broker {}
#[doc = include_str!("../../../book/src/simulator.md")]
pub mod simulator {}
#[doc = include_str!("../../../book/src/transfers.md")]
pub mod transfers {}
#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}
