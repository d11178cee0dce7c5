#![cfg_attr(not(feature = "std"), no_std)]

//! Deterministic building blocks for the loadforge data-loading pipeline:
//! record framing and container codecs, a PPM codec, seeded augmentation
//! operators, pipeline planning, and logistic-regression trainer math.
//!
//! Everything in this crate is pure: no files, no threads, no clocks.
//! The `loadforge` crate layers IO, the concurrent executor, the benchmark
//! harness, and the CLI on top. All randomness flows through
//! [`rng::SampleRng`], and all floating-point routines are written so the
//! same inputs produce the same bits on every run and every thread layout.

extern crate alloc;

pub mod augment;
pub mod error;
pub mod metrics;
pub mod plan;
pub mod ppm;
pub mod record;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::CoreError;
