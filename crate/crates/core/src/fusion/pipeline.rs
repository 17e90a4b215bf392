use serde::{Deserialize, Serialize};

use super::cluster::{cluster_stability, Clustering};
use super::dataset::feature_matrix;
use super::frame::{StabilityLabel, TelemetryFrame};
use super::metrics::{detection_scores, silhouette, DetectionScores};
use super::pca::{pca, standardize};
use super::tsne::{tsne, Embedding, TsneOptions};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuseOptions {
    /// Capped at the number of available components.
    pub pca_dim: usize,
    pub clusters: usize,
    pub tsne: TsneOptions,
}

impl Default for FuseOptions {
    fn default() -> Self {
        Self { pca_dim: 20, clusters: 2, tsne: TsneOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FusionReport {
    pub embedding: Embedding,
    pub clustering: Clustering,
    pub explained_ratio: Vec<f64>,
    /// Present when every frame carries a ground-truth label.
    pub scores: Option<DetectionScores>,
    pub silhouette_fused: Option<f64>,
    pub silhouette_physical: Option<f64>,
}

/// Frames recorded under normal operation count as the no-attack window.
pub fn no_attack_window(f: &TelemetryFrame) -> bool {
    f.scenario == "normal"
}

/// Silhouette of the ground-truth partition in standardized feature space.
pub fn truth_silhouette(frames: &[TelemetryFrame], with_rtt: bool) -> Result<f64> {
    let labels: Vec<usize> = frames
        .iter()
        .map(|f| f.label.map(|l| (l == StabilityLabel::Unstable) as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::InvalidArgument("silhouette needs labelled frames".into()))?;
    let (z, _, _) = standardize(&feature_matrix(frames, with_rtt)?);
    let rows: Vec<Vec<f64>> = z.row_iter().map(|r| r.iter().copied().collect()).collect();
    silhouette(&rows, &labels)
}

/// Standardize, PCA, t-SNE, cluster and, with labels, score.
pub fn fuse(frames: &[TelemetryFrame], opts: &FuseOptions, seed: u64) -> Result<FusionReport> {
    let x = feature_matrix(frames, true)?;
    let dim = opts.pca_dim.min(x.nrows().saturating_sub(1)).min(x.ncols());
    let reduced = pca(&x, dim)?;
    let embedding = tsne(&reduced.projection, &opts.tsne, seed)?;
    let quiet: Vec<bool> = frames.iter().map(no_attack_window).collect();
    let clustering = cluster_stability(&embedding.points, opts.clusters, &quiet, seed)?;
    let truth: Option<Vec<StabilityLabel>> = frames.iter().map(|f| f.label).collect();
    let (scores, silhouette_fused, silhouette_physical) = match truth {
        Some(t) if t.contains(&StabilityLabel::Stable) && t.contains(&StabilityLabel::Unstable) => (
            Some(detection_scores(&clustering.labels, &t)?),
            Some(truth_silhouette(frames, true)?),
            Some(truth_silhouette(frames, false)?),
        ),
        Some(t) => (Some(detection_scores(&clustering.labels, &t)?), None, None),
        None => (None, None, None),
    };
    Ok(FusionReport { embedding, clustering, explained_ratio: reduced.explained_ratio, scores, silhouette_fused, silhouette_physical })
}
