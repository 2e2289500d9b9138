//! Quantum dynamics on relational graphs.
//!
//! Spatial points, particles and entanglement share one generalized adjacency
//! structure ([`relgraph`]). Particle-space relations evolve under a discrete
//! Schrödinger step driven by the graph Laplacian ([`dynamics`]). Distances
//! are compared under shortcuts ([`geometry`]), and the EPR measurement
//! scenario is tracked as a log of relations between subsystems
//! ([`entangle`]). [`experiments`] turns each of these into a reproducible CSV
//! scenario.

pub mod dynamics;
pub mod entangle;
pub mod experiments;
pub mod geometry;
pub mod relgraph;

pub use dynamics::{LaplacianMatrix, Scheme, Stepper, WaveState};
pub use entangle::{PureState, RelationEventLog};
pub use relgraph::{GeneralizedAdjacency, RelationalGraph, VertexId, VertexKind};

/// Version string embedded in manifests and printed by `--version`.
pub const BUILD_ID: &str = concat!("relsim-", env!("CARGO_PKG_VERSION"));
