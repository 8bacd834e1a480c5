//! Command-line pipeline around [`perch_core`]: scenario files in,
//! plans, closed-loop traces, and re-checkable artifacts out.
//!
//! The library half holds everything the binary does so integration
//! tests can drive the pipeline in-process; `src/main.rs` is a thin
//! argument-parsing shell over [`pipeline`].

#![deny(unsafe_code)]

pub mod artifacts;
pub mod pipeline;
pub mod scenario;
