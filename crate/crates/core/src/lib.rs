//! Per-sample label confidence for noisily labeled embeddings.
//!
//! Build a k-NN graph over the embeddings, smooth the one-hot noisy labels
//! by minimizing a normalized Laplacian energy (a sparse SPD solve), and read
//! each sample's confidence off the smoothed distribution at its observed
//! label. Around that sit a GMM small-loss baseline, PCA reduction, synthetic
//! data with controlled noise, a co-training loop that uses the confidences
//! to refurbish targets, and evaluation metrics.

pub mod corpus;
pub mod dataio;
pub mod error;
pub mod gmm;
pub mod graph;
pub mod laplace;
pub mod metrics;
pub mod reduce;
pub mod sparse;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
pub use graph::{build_graph, SparseGraph};
pub use laplace::{estimate, Estimate, EstimatorConfig, RhsMode, SolverConfig};
pub use sparse::CsrMatrix;
pub use trainer::{ExperimentConfig, TrainConfig};
pub use types::{one_hot, ConfidenceVector, FeatureMatrix, LabelDistribution, NoisyDataset};
