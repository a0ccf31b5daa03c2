//! Silhouette analysis of an embedding space against ground-truth labels.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::DistanceMatrix;
use crate::num::Real;

#[derive(Debug, Error)]
pub enum ClusterMetricError {
    #[error("need at least 2 distinct labels, got {0}")]
    TooFewLabels(usize),
    #[error("label count {labels} does not match distance matrix size {n}")]
    LengthMismatch { labels: usize, n: usize },
}

/// Per-item silhouette values s(i) = (b − a) / max(a, b).
///
/// Singleton clusters and the degenerate a = b = 0 case both score 0.
pub fn silhouette_samples<R: Real>(
    dm: &DistanceMatrix<R>,
    labels: &[String],
) -> Result<Vec<R>, ClusterMetricError> {
    let n = dm.n();
    if labels.len() != n {
        return Err(ClusterMetricError::LengthMismatch {
            labels: labels.len(),
            n,
        });
    }
    let mut cluster_of = Vec::with_capacity(n);
    let mut index_of: BTreeMap<&str, usize> = BTreeMap::new();
    for label in labels {
        let next = index_of.len();
        let c = *index_of.entry(label.as_str()).or_insert(next);
        cluster_of.push(c);
    }
    let n_clusters = index_of.len();
    if n_clusters < 2 {
        return Err(ClusterMetricError::TooFewLabels(n_clusters));
    }
    let mut sizes = vec![0usize; n_clusters];
    for &c in &cluster_of {
        sizes[c] += 1;
    }

    let mut samples = Vec::with_capacity(n);
    let mut sums = vec![R::zero(); n_clusters];
    for i in 0..n {
        let own = cluster_of[i];
        if sizes[own] < 2 {
            samples.push(R::zero());
            continue;
        }
        for s in &mut sums {
            *s = R::zero();
        }
        for j in 0..n {
            if j != i {
                sums[cluster_of[j]] += dm.get(i, j);
            }
        }
        let a = sums[own] / R::from_usize(sizes[own] - 1).unwrap();
        let b = (0..n_clusters)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / R::from_usize(sizes[c]).unwrap())
            .fold(R::infinity(), R::min);
        let denom = a.max(b);
        samples.push(if denom == R::zero() {
            R::zero()
        } else {
            (b - a) / denom
        });
    }
    Ok(samples)
}

/// Mean of the per-item silhouettes; in [−1, 1].
pub fn silhouette_score<R: Real>(
    dm: &DistanceMatrix<R>,
    labels: &[String],
) -> Result<R, ClusterMetricError> {
    let samples = silhouette_samples(dm, labels)?;
    let n = R::from_usize(samples.len()).unwrap();
    Ok(samples.into_iter().sum::<R>() / n)
}
