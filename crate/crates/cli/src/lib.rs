//! Command-line front end: scenario runs, the planning-time benchmark and
//! occupancy grid dumps.

// `!(a > b)` is how NaN gets rejected in validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod bench;
pub mod commands;
pub mod render;

pub use commands::{cmd_bench, cmd_grid_dump, cmd_run, BenchArgs, Exit, GridDumpArgs, RunArgs};
