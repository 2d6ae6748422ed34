//! Topology graphs from 2D occupancy grids through Gaussian distance maps,
//! maintained incrementally as range-scan frames stream in.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod distance_field;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod io;
pub mod map_model;
pub mod metrics;
pub mod raster;
pub mod sim;
pub mod skeleton;

pub use error::{Error, Result};
