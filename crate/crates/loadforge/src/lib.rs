//! Data-loading pipeline with deterministic augmentation, a chunked record
//! container, a two-pool concurrent executor, a logistic-regression training
//! loop, and a benchmark harness comparing reader and allocation strategies.
//!
//! The pure primitives (codecs, RNG, augmentation math, trainer math) live
//! in `loadforge-core`; this crate adds files, threads, clocks, and the CLI.

pub mod bench;
pub mod cli;
pub mod container;
pub mod error;
pub mod pipeline;
pub mod plots;
pub mod store;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};

pub use loadforge_core as core;
