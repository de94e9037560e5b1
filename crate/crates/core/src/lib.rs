//! Generating family cohomology with flow-tree products over Z2.
//!
//! Pipeline: a linear-at-infinity family `F` gives the difference function
//! `w`; its positive critical points (Reeb chords) generate a cochain complex
//! whose differential counts gradient lines and whose product counts
//! perturbed Y-shaped flow trees of the extended difference functions.

#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod complex;
pub mod config;
pub mod continuation;
pub mod critical;
pub mod error;
pub mod exec;
pub mod expr;
pub mod family;
pub mod flow;
pub mod pipeline;
pub mod suite;
pub mod trees;

pub use error::{Error, Result};
pub use exec::Exec;
