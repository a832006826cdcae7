//! Clustering-based model reduction of networked linear systems with
//! optimized edge weights of the reduced graph.

pub mod balancing;
pub mod conic;
pub mod error;
pub mod graph;
pub mod h2;
pub mod lyapunov;
pub mod optimizer;
pub mod presets;
pub mod reduction;

pub use balancing::BalancedRepresentation;
pub use error::{Error, Result};
pub use graph::{Clustering, DirectedNetwork, Edge, IncidenceDecomposition};
pub use reduction::{QuotientModel, ReducedSystem, WeightParameterization};
