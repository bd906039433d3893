//! Global wildfire datacube engine and burned-area forecasting pipeline.
//!
//! The crate builds a harmonized 8-day datacube on a global lat/lon grid,
//! stores it as an uncompressed Zarr v2 group, turns it into a patch
//! segmentation dataset, and evaluates forecasts against a weekly climatology
//! with imbalance-aware metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod climatology;
pub mod cube;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod grid;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod store;
pub mod synth;
pub mod time;

pub use cube::{Cube, CubeManifest};
pub use error::{Error, Result};
pub use grid::{tile_patches, GeoGrid, PatchGridSpec, TileOrigin};
pub use store::{ArraySpec, CubeStore, ZarrArray};
pub use time::TimeAxis;
