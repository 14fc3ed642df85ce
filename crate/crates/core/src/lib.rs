//! Probabilistic coordinate fields: barycentric encodings of dense
//! correspondences with a per-pixel reliability estimate.
//!
//! The pipeline runs flow → BCS pair → coordinate fields → per-patch
//! confidence → PCF entries, with downstream consumers for sparse
//! correspondence filtering and multi-homography classification.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bcs_builder;
pub mod downstream;
pub mod error;
pub mod flowfield;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod pcf;
pub mod probmodel;
pub mod scalar;

pub use bcs_builder::BcsPair;
pub use error::{PcfError, Result};
pub use flowfield::{FlowField, HomographyMap, ScalarField};
pub use geometry::{AffineMap, BarycentricCoord, Bcs, CoordField, Point2};
pub use grid::{Grid, Mask};
pub use scalar::Real;

pub type Point2f = Point2<f32>;
pub type Point2d = Point2<f64>;
pub type Bcsf = Bcs<f32>;
pub type Bcsd = Bcs<f64>;
pub type FlowFieldf = FlowField<f32>;
pub type FlowFieldd = FlowField<f64>;
pub type CoordFieldf = CoordField<f32>;
pub type CoordFieldd = CoordField<f64>;
pub type Homographyf = HomographyMap<f32>;
pub type Homographyd = HomographyMap<f64>;
