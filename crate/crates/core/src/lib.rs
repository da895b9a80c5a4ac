//! Analysis toolkit for directed, weighted trade networks with node attributes.
//!
//! The pipeline stages map onto the top-level modules:
//!
//! - [`graph`]: the core [`graph::TradeNetwork`] type with directed weighted
//!   edges over ISO-coded nodes, threshold subgraphs, weak components.
//! - [`ingest`]: bilateral-flow and attribute CSV parsing, the missingness
//!   rule, and k-nearest-neighbour imputation with cross-validated `k`.
//! - [`netstats`]: structural statistics (density, reciprocity, transitivity,
//!   assortativity, degree correlation) and the one-row summary.
//! - [`connectivity`]: weight-threshold sweeps recording component counts and
//!   giant-component sizes.
//! - [`ergm`]: dyad-level change statistics, maximum pseudo-likelihood
//!   estimation (exact MLE for dyad-independent terms), a Metropolis
//!   edge-toggle sampler, and goodness-of-fit.
//! - [`sbm`]: directed Bernoulli stochastic block model via variational EM,
//!   ICL model selection, and block-ordered adjacency views.
//! - [`generators`]: random and planted-partition digraphs for benchmarks.
//! - [`artifacts`]: the on-disk formats shared by pipeline stages.

pub mod artifacts;
pub mod connectivity;
pub mod ergm;
pub mod error;
pub mod generators;
pub mod graph;
pub mod ingest;
pub mod netstats;
pub mod sbm;
pub mod seeding;

pub use error::{Error, ErrorClass, Result};
pub use graph::{ComponentLabeling, NodeId, TradeNetwork};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
