//! Asymmetric manifold learning in canonical Randers spaces.
//!
//! The traditional manifold-learning pipeline (kNN graph, local scaling,
//! symmetrisation, Euclidean embedding) quietly discards the asymmetry that
//! directed graphs and per-point scales introduce. This crate keeps that
//! asymmetry end to end: dissimilarities stay directed, and embeddings live
//! in a canonical Randers space whose distance
//! `d(x, y) = ‖y − x‖₂ + ω⊤(y − x)` depends on traversal direction.
//!
//! The main entry point is [`pipeline::build_method`], which wires the stages
//! (graph → scales → dissimilarities → init → optimisation) into the named
//! methods: `tsne`, `finsler-tsne`, `umap`, `finsler-umap`, `isomap`,
//! `finsler-mds-gd`, and `finsler-smacof`. Every stage is also usable on its
//! own through the per-module APIs.

pub mod datasets;
pub mod dissim;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod init;
pub mod linalg;
pub mod mds;
pub mod pipeline;
pub mod tsne;
pub mod umap;

pub use error::{Error, Result};
pub use geometry::RandersSpace;
pub use graph::{DataMatrix, DirectedProximityGraph};

