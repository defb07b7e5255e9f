//! Relay-node selection and managed-flooding simulation for linear networks
//! of smart work-zone barrels.
//!
//! The crate is organised bottom-up:
//!
//! * [`topology`] builds barrel layouts from lane-closure geometry and the
//!   range-limited neighbor graph.
//! * [`relay`] selects relay nodes (clustering-based scoring plus three
//!   baselines) and validates the resulting assignment.
//! * [`sim`] runs a deterministic discrete-event simulation of flooding
//!   dissemination over an assignment.
//! * [`metrics`] turns simulation results into delivery, load and current
//!   figures.
//! * [`experiment`] parses experiment plans and runs the
//!   algorithm × rate × seed matrix, writing CSV outputs.
//!
//! Geometry and selection are generic over the scalar type (`f32` or `f64`);
//! the aliases below fix the common `f64` instantiation.

pub mod experiment;
pub mod metrics;
pub mod relay;
pub mod scalar;
pub mod sim;
pub mod topology;

pub use scalar::Scalar;
pub use topology::NodeId;

/// Planar position in meters, `f64` coordinates.
pub type Position = topology::Position<f64>;
/// Topology with `f64` geometry.
pub type Topology = topology::Topology<f64>;
/// Topology with `f32` geometry.
pub type Topology32 = topology::Topology<f32>;
/// Layout description with `f64` lengths.
pub type LayoutSpec = topology::LayoutSpec<f64>;
/// Relay assignment with `f64` scores.
pub type RelayAssignment = relay::RelayAssignment<f64>;
/// Relay assignment with `f32` scores.
pub type RelayAssignment32 = relay::RelayAssignment<f32>;
