//! Hierarchical generation of featured hypergraphs.
//!
//! A hypergraph is represented by its star expansion, a bipartite graph with
//! nodes on the left and hyperedges on the right. Training data comes from
//! randomized coarsening sequences that repeatedly merge nodes while tracking
//! integer budgets and budget-weighted features; generation runs the process
//! in reverse, expanding a single seed node and letting a flow-matching
//! denoiser decide which clusters split, which edges survive, how budgets
//! divide and what the refined features are.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`.

pub mod autodiff;
pub mod coarsening;
pub mod data;
pub mod denoiser;
pub mod error;
pub mod expansion;
pub mod flow;
pub mod hypergraph;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Hypergraph64 = hypergraph::Hypergraph<f64>;
pub type Hypergraph32 = hypergraph::Hypergraph<f32>;
pub type Bipartite64 = hypergraph::BipartiteGraph<f64>;
pub type Bipartite32 = hypergraph::BipartiteGraph<f32>;
pub type Matrix64 = Matrix<f64>;
