//! Toolkit for benchmarking coastal water-body segmentation on Landsat-style
//! multi-band rasters.
//!
//! The crate covers the whole pipeline: scene catalog filtering and solar
//! altitude binning ([`catalog`]), constrained crop sampling ([`dataset`]),
//! the NDWI threshold baseline ([`index`]), a gradient-boosted tree baseline
//! ([`gbdt`]), coastline-aware evaluation ([`metrics`]) and permutation band
//! importance for in-process or external predictors ([`importance`]).
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default). Every parallel path has a sequential twin selected through
//! [`exec::Exec`], and both produce identical output.

// `!(x > 0.0)` style checks are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod dataset;
pub mod edt;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod gbdt;
pub mod importance;
pub mod index;
pub mod metrics;
pub mod raster;
pub mod seed;

pub use error::{Error, Result};
pub use raster::{BandRole, RasterScene, SegMask};
