//! Global summaries of local feature-attribution explanations.
//!
//! An explanation matrix (instances × features, nonnegative, unit mass) is
//! co-clustered by greedy agglomerative merging under a description-length
//! objective. See [`engine::summarize`] for the entry point.

pub mod cost;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod ingest;
pub mod io;
pub mod knee;
pub mod lsh;
pub mod matrix;
pub mod oracle;
pub mod pipeline;
pub mod scalar;
pub mod spectral;
mod stats;
pub mod summary;
pub mod synth;

pub use cost::{Cluster, Clustering, CostBreakdown, LossBreakdown, LossKind, Side};
pub use engine::{summarize, summarize_from, CandidateMode, EngineConfig, EngineResult};
pub use error::{Error, Result};
pub use matrix::{ColMeta, ExplanationMatrix, NormalizeOptions, RowMeta, Scaling, SparseMatrix};
pub use scalar::Scalar;
pub use stats::CoClusterStats;
pub use summary::{apply_filter, build_summary, extract_subset, FilterSpec, SummaryArtifact};

pub type Matrix64 = ExplanationMatrix<f64>;
pub type Matrix32 = ExplanationMatrix<f32>;
pub type Sparse64 = SparseMatrix<f64>;
pub type Sparse32 = SparseMatrix<f32>;
pub type EngineConfig64 = EngineConfig<f64>;
pub type EngineConfig32 = EngineConfig<f32>;
pub type EngineResult64 = EngineResult<f64>;
pub type EngineResult32 = EngineResult<f32>;
