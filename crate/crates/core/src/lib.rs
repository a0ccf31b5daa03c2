//! Diagnostics for cross-modal contrastive embedding spaces.
//!
//! The crate audits exported embedding matrices along three axes — zero-shot
//! classification accuracy, silhouette-based cluster structure, and
//! k-nearest-neighbor topological similarity between spaces — and ties them
//! together with exact t-SNE projections, caption leakage filtering, Pearson
//! correlation with exact Student-t p-values, and synthetic benchmark
//! generators. Core math is generic over the scalar type (`f32` or `f64`)
//! through the [`num::Real`] trait; file loading and the pipeline operate in
//! double precision.

pub mod cluster_metrics;
pub mod corpus_io;
pub mod geometry;
pub mod leakage;
pub mod matrix;
pub mod num;
pub mod report;
pub mod stats;
pub mod svg;
pub mod synth;
pub mod topo;
pub mod tsne;
pub mod zeroshot;

/// The scalar type used by the pipeline and CLI.
pub type Scalar = f64;

/// A pipeline-precision matrix.
pub type ScalarMatrix = matrix::Matrix<Scalar>;

/// A pipeline-precision embedding set.
pub type ScalarEmbeddingSet = corpus_io::EmbeddingSet<Scalar>;

pub use geometry::Metric;
pub use matrix::Matrix;
pub use num::Real;
