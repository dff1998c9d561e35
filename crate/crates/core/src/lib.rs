//! Simulation and analysis toolkit for a six-bar spherical tensegrity robot
//! rolling on inclined planes.

// Validation is written as `!(x > 0.0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod params;
pub mod policies;
pub mod scalar;
pub mod stability;
pub mod topology;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instantiations used by the harness, CLI and server.
pub type Sim = dynamics::SimState<f64>;
pub type Topology = topology::TensegrityTopology<f64>;
pub type Margins = stability::StabilityMargins<f64>;
pub type Polygon = stability::SupportPolygon<f64>;
