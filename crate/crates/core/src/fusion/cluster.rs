use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::StabilityLabel;
use crate::error::{Error, Result};

pub const RESTARTS: usize = 20;
const MAX_ITER: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Set when every point coincides and only one cluster exists.
    pub degenerate: bool,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, w) in d.iter().enumerate() {
                if u < *w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        };
        centroids.push(points[pick].clone());
        let c = centroids.last().unwrap();
        for (di, p) in d.iter_mut().zip(points) {
            *di = di.min(dist2(p, c));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeans {
    let dim = points[0].len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..centroids.len())
                .min_by(|&a, &b| dist2(p, &centroids[a]).total_cmp(&dist2(p, &centroids[b])))
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue; // keep the old centroid
            }
            *centroid = (0..dim).map(|k| members.iter().map(|m| m[k]).sum::<f64>() / members.len() as f64).collect();
        }
    }
    let inertia = points.iter().zip(&assign).map(|(p, &a)| dist2(p, &centroids[a])).sum();
    KMeans { assignments: assign, centroids, inertia, degenerate: false }
}

/// k-means with k-means++ seeding; best inertia over `RESTARTS` runs.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 || points.len() < k {
        return Err(Error::InvalidArgument(format!("k-means needs 1 ≤ k ≤ N (k = {k}, N = {})", points.len())));
    }
    if points.iter().any(|p| p.len() != points[0].len()) {
        return Err(Error::Dimension("points of unequal length".into()));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Ok(KMeans {
            assignments: vec![0; points.len()],
            centroids: vec![points[0].clone()],
            inertia: 0.0,
            degenerate: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(points, plus_plus(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub kmeans: KMeans,
    pub labels: Vec<StabilityLabel>,
    /// Cluster index named "stable".
    pub stable_cluster: usize,
}

/// Two-way clustering of the embedding. The cluster holding most frames
/// collected outside attack windows is named stable, the rest unstable.
pub fn cluster_stability(points: &[[f64; 2]], k: usize, no_attack: &[bool], seed: u64) -> Result<Clustering> {
    if no_attack.len() != points.len() {
        return Err(Error::Dimension(format!("{} points but {} window flags", points.len(), no_attack.len())));
    }
    let pts: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    let km = kmeans(&pts, k, seed)?;
    if km.degenerate {
        eprintln!("warning: all embedded points coincide; returning a single cluster");
    }
    let nclusters = km.centroids.len();
    let mut counts = vec![0usize; nclusters];
    for (a, quiet) in km.assignments.iter().zip(no_attack) {
        if *quiet {
            counts[*a] += 1;
        }
    }
    // ties resolve to the lowest index
    let stable_cluster = (0..nclusters).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
    let labels = km
        .assignments
        .iter()
        .map(|&a| if a == stable_cluster { StabilityLabel::Stable } else { StabilityLabel::Unstable })
        .collect();
    Ok(Clustering { kmeans: km, labels, stable_cluster })
}
