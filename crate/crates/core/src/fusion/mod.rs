//! Fused cyber-physical telemetry, dimensionality reduction and clustering.

mod cluster;
mod dataset;
mod frame;
mod metrics;
mod pca;
mod pipeline;
mod tsne;

pub use cluster::{cluster_stability, kmeans, Clustering, KMeans, RESTARTS};
pub use dataset::{feature_matrix, generate_dataset, read_dataset_csv, write_dataset_csv, write_embedding_csv};
pub use frame::{StabilityLabel, TelemetryFrame};
pub use metrics::{detection_scores, silhouette, DetectionScores};
pub use pca::{pca, standardize, Pca};
pub use pipeline::{fuse, no_attack_window, truth_silhouette, FuseOptions, FusionReport};
pub use tsne::{
    effective_perplexity, joint_probabilities, kl_and_gradient, output_probabilities, tsne, Embedding, TsneOptions,
};
