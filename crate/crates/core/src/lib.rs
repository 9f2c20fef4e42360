//! Core algorithms for predicting annual building energy from footprint shape.
//!
//! Everything here is pure computation on in-memory values and builds without `std`
//! (an allocator is required). File formats, the command line and the HTTP service
//! live in the `shapenergy` crate.
//!
//! The pipeline, module by module:
//!
//! - [`geometry`]: area-preserving rectilinear footprints driven by four façade offsets.
//! - [`raster`]: binary plan images of a footprint on a fixed world window.
//! - [`weather`]: hourly weather series, synthetic climate and solar position.
//! - [`energy`]: a deterministic heating/cooling/lighting oracle with façade self-shading.
//! - [`dataset`]: parameter sampling, labelled sample generation, splits and target scaling.
//! - [`nn`]: tensors, dense/conv/pool layers, exact backpropagation and Adam.
//! - [`train`]: mini-batch training, metrics and k-fold cross-validation.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod energy;
pub mod geometry;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod train;
pub mod weather;

pub use dataset::{Dataset, DatasetConfig, Normalizer, Sample};
pub use energy::{BuildingConfig, EnergyBreakdown};
pub use geometry::{Footprint, GeometryConfig, Point, ShapeParams};
pub use nn::{ModelSpec, ModelState};
pub use raster::{BinaryImage, RasterSpec};
pub use rng::Prng;
pub use weather::{SiteSpec, WeatherSeries};
