//! Vector normalization, divergences, pairwise distance matrices,
//! k-nearest-neighbor lists, and label centroids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::EmbeddingSet;
use crate::matrix::Matrix;
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// 1 − cosine similarity, in [0, 2].
    #[default]
    CosineDivergence,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" | "cosine_divergence" => Ok(Metric::CosineDivergence),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("zero-norm row at index {row}")]
    ZeroNormRow { row: usize },
    #[error("zero vector passed to cosine divergence")]
    ZeroVector,
    #[error("need at least 2 points, got {n}")]
    TooFewPoints { n: usize },
    #[error("k={k} out of range [1, {max}]")]
    KOutOfRange { k: usize, max: usize },
    #[error("labels missing from embedding set")]
    MissingLabels,
}

/// Symmetric n×n divergence table with its metric recorded.
#[derive(Debug, Clone)]
pub struct DistanceMatrix<R> {
    pub metric: Metric,
    values: Matrix<R>,
}

impl<R: Real> DistanceMatrix<R> {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> R {
        self.values.get(i, j)
    }

    pub fn values(&self) -> &Matrix<R> {
        &self.values
    }

    /// Scales every entry by a positive constant, keeping symmetry.
    pub fn scaled(&self, factor: R) -> Self {
        assert!(factor > R::zero());
        Self {
            metric: self.metric,
            values: self.values.map(|v| v * factor),
        }
    }

    /// Builds a distance matrix from an explicit symmetric table.
    pub fn from_matrix(metric: Metric, values: Matrix<R>) -> Self {
        assert_eq!(values.nrows(), values.ncols());
        Self { metric, values }
    }
}

pub fn dot<R: Real>(u: &[R], v: &[R]) -> R {
    u.iter().zip(v).map(|(&a, &b)| a * b).sum()
}

pub fn norm<R: Real>(u: &[R]) -> R {
    dot(u, u).sqrt()
}

pub fn euclidean<R: Real>(u: &[R], v: &[R]) -> R {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<R>()
        .sqrt()
}

/// 1 − (u·v)/(‖u‖‖v‖), clamped to [0, 2].
pub fn cosine_divergence<R: Real>(u: &[R], v: &[R]) -> Result<R, GeometryError> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == R::zero() || nv == R::zero() {
        return Err(GeometryError::ZeroVector);
    }
    let d = R::one() - dot(u, v) / (nu * nv);
    Ok(d.max(R::zero()).min(R::from_f64_c(2.0)))
}

/// Rescales every row to unit Euclidean norm.
pub fn l2_normalize<R: Real>(set: &EmbeddingSet<R>) -> Result<EmbeddingSet<R>, GeometryError> {
    let mut matrix = set.matrix.clone();
    for i in 0..matrix.nrows() {
        let n = norm(matrix.row(i));
        if n == R::zero() {
            return Err(GeometryError::ZeroNormRow { row: i });
        }
        for v in matrix.row_mut(i) {
            *v /= n;
        }
    }
    Ok(EmbeddingSet {
        role: set.role,
        ids: set.ids.clone(),
        labels: set.labels.clone(),
        matrix,
    })
}

/// Computes all pairwise divergences, each unordered pair once, so the result
/// is exactly symmetric.
pub fn pairwise_divergence<R: Real>(
    set: &EmbeddingSet<R>,
    metric: Metric,
) -> Result<DistanceMatrix<R>, GeometryError> {
    let n = set.len();
    if n < 2 {
        return Err(GeometryError::TooFewPoints { n });
    }
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = match metric {
                Metric::CosineDivergence => cosine_divergence(set.matrix.row(i), set.matrix.row(j))
                    .map_err(|_| GeometryError::ZeroNormRow {
                        row: if norm(set.matrix.row(i)) == R::zero() {
                            i
                        } else {
                            j
                        },
                    })?,
                Metric::Euclidean => euclidean(set.matrix.row(i), set.matrix.row(j)),
            };
            values.set(i, j, d);
            values.set(j, i, d);
        }
    }
    Ok(DistanceMatrix { metric, values })
}

/// k-nearest-neighbor index lists, one per item, sorted by ascending distance
/// with ties broken by ascending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborLists {
    pub k: usize,
    pub include_self: bool,
    pub lists: Vec<Vec<usize>>,
}

pub fn knn_lists<R: Real>(
    dm: &DistanceMatrix<R>,
    k: usize,
    include_self: bool,
) -> Result<NeighborLists, GeometryError> {
    let n = dm.n();
    let max = if include_self { n } else { n.saturating_sub(1) };
    if k < 1 || k > max {
        return Err(GeometryError::KOutOfRange { k, max });
    }
    let orders = neighbor_orders(dm, include_self);
    let lists = orders.into_iter().map(|o| o[..k].to_vec()).collect();
    Ok(NeighborLists {
        k,
        include_self,
        lists,
    })
}

/// Full neighbor orderings (all candidates per row, ascending distance, ties by
/// index). Self, when included, is forced to the front of its own row.
pub fn neighbor_orders<R: Real>(dm: &DistanceMatrix<R>, include_self: bool) -> Vec<Vec<usize>> {
    let n = dm.n();
    (0..n)
        .map(|i| {
            let mut idx: Vec<usize> = (0..n).filter(|&j| include_self || j != i).collect();
            idx.sort_by(|&a, &b| {
                if a == i {
                    return std::cmp::Ordering::Less;
                }
                if b == i {
                    return std::cmp::Ordering::Greater;
                }
                dm.get(i, a)
                    .partial_cmp(&dm.get(i, b))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

/// One mean row per distinct label, in ascending lexicographic label order;
/// ids become the label strings.
pub fn label_centroids<R: Real>(set: &EmbeddingSet<R>) -> Result<EmbeddingSet<R>, GeometryError> {
    let labels = set.labels.as_ref().ok_or(GeometryError::MissingLabels)?;
    let d = set.dim();
    let mut groups: BTreeMap<&str, (Vec<R>, usize)> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        let entry = groups
            .entry(label.as_str())
            .or_insert_with(|| (vec![R::zero(); d], 0));
        for (acc, &v) in entry.0.iter_mut().zip(set.matrix.row(i)) {
            *acc += v;
        }
        entry.1 += 1;
    }
    let mut ids = Vec::with_capacity(groups.len());
    let mut rows = Vec::with_capacity(groups.len());
    for (label, (mut sum, count)) in groups {
        let c = R::from_usize(count).unwrap();
        for v in &mut sum {
            *v /= c;
        }
        ids.push(label.to_string());
        rows.push(sum);
    }
    Ok(EmbeddingSet {
        role: set.role,
        labels: Some(ids.clone()),
        ids,
        matrix: Matrix::from_rows(&rows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::Role;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn set_from(rows: &[Vec<f64>], labels: Option<Vec<&str>>) -> EmbeddingSet<f64> {
        EmbeddingSet {
            role: Role::AudioCrossModal,
            ids: (0..rows.len()).map(|i| format!("id{i}")).collect(),
            labels: labels.map(|ls| ls.into_iter().map(String::from).collect()),
            matrix: Matrix::from_rows(rows),
        }
    }

    #[test]
    fn normalize_three_four_five() {
        let set = set_from(&[vec![3.0, 4.0]], None);
        let out = l2_normalize(&set).unwrap();
        assert_abs_diff_eq!(out.matrix.get(0, 0), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(out.matrix.get(0, 1), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn normalize_idempotent() {
        let set = set_from(&[vec![0.6, 0.8]], None);
        let out = l2_normalize(&set).unwrap();
        assert_abs_diff_eq!(out.matrix.get(0, 0), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let set = set_from(&[vec![1.0, 0.0], vec![0.0, 0.0]], None);
        assert!(matches!(
            l2_normalize(&set),
            Err(GeometryError::ZeroNormRow { row: 1 })
        ));
    }

    #[test]
    fn cosine_divergence_limits() {
        assert_abs_diff_eq!(
            cosine_divergence(&[1.0, 2.0], &[1.0, 2.0]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            cosine_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            cosine_divergence(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(),
            2.0,
            epsilon = 1e-15
        );
        assert!(cosine_divergence(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn pairwise_orthogonal_antipodal() {
        let set = set_from(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]], None);
        let dm = pairwise_divergence(&set, Metric::CosineDivergence).unwrap();
        assert_abs_diff_eq!(dm.get(0, 1), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dm.get(0, 2), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dm.get(1, 2), 1.0, epsilon = 1e-15);
        for i in 0..3 {
            assert_eq!(dm.get(i, i), 0.0);
        }
    }

    #[test]
    fn pairwise_identical_rows_zero() {
        let set = set_from(&[vec![1.0, 1.0], vec![1.0, 1.0]], None);
        let dm = pairwise_divergence(&set, Metric::CosineDivergence).unwrap();
        assert_abs_diff_eq!(dm.get(0, 1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pairwise_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..4).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();
        let set = set_from(&rows, None);
        for metric in [Metric::CosineDivergence, Metric::Euclidean] {
            let dm = pairwise_divergence(&set, metric).unwrap();
            for i in 0..10 {
                for j in 0..10 {
                    let expected = if i == j {
                        0.0
                    } else {
                        match metric {
                            Metric::CosineDivergence => {
                                cosine_divergence(&rows[i], &rows[j]).unwrap()
                            }
                            Metric::Euclidean => euclidean(&rows[i], &rows[j]),
                        }
                    };
                    assert_abs_diff_eq!(dm.get(i, j), expected, epsilon = 1e-12);
                    assert_eq!(dm.get(i, j), dm.get(j, i));
                }
            }
        }
    }

    #[test]
    fn knn_line_geometry() {
        let set = set_from(&[vec![0.0], vec![1.0], vec![10.0]], None);
        let dm = pairwise_divergence(&set, Metric::Euclidean).unwrap();
        let nn = knn_lists(&dm, 1, false).unwrap();
        assert_eq!(nn.lists, vec![vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn knn_self_first() {
        let set = set_from(&[vec![0.0], vec![1.0], vec![10.0]], None);
        let dm = pairwise_divergence(&set, Metric::Euclidean).unwrap();
        let nn = knn_lists(&dm, 1, true).unwrap();
        assert_eq!(nn.lists, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn knn_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let set = set_from(&rows, None);
        let dm = pairwise_divergence(&set, Metric::Euclidean).unwrap();
        let nn = knn_lists(&dm, 5, false).unwrap();
        for i in 0..20 {
            let mut order: Vec<usize> = (0..20).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| {
                dm.get(i, a)
                    .partial_cmp(&dm.get(i, b))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            assert_eq!(nn.lists[i], order[..5], "row {i}");
        }
    }

    #[test]
    fn knn_invariant_under_monotone_distance_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..15)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let set = set_from(&rows, None);
        let dm = pairwise_divergence(&set, Metric::Euclidean).unwrap();
        let squared = DistanceMatrix::from_matrix(Metric::Euclidean, dm.values().map(|v| v * v));
        assert_eq!(
            knn_lists(&dm, 4, false).unwrap().lists,
            knn_lists(&squared, 4, false).unwrap().lists
        );
    }

    #[test]
    fn knn_rejects_out_of_range_k() {
        let set = set_from(&[vec![0.0], vec![1.0]], None);
        let dm = pairwise_divergence(&set, Metric::Euclidean).unwrap();
        assert!(matches!(
            knn_lists(&dm, 2, false),
            Err(GeometryError::KOutOfRange { k: 2, max: 1 })
        ));
        assert!(knn_lists(&dm, 2, true).is_ok());
    }

    #[test]
    fn centroid_midpoint() {
        let set = set_from(
            &[vec![0.0, 0.0], vec![2.0, 2.0], vec![5.0, 5.0]],
            Some(vec!["a", "a", "b"]),
        );
        let c = label_centroids(&set).unwrap();
        assert_eq!(c.ids, vec!["a", "b"]);
        assert_eq!(c.matrix.row(0), &[1.0, 1.0]);
        assert_eq!(c.matrix.row(1), &[5.0, 5.0]);
    }

    #[test]
    fn centroids_permutation_invariant() {
        let fwd = set_from(
            &[vec![0.0], vec![2.0], vec![5.0]],
            Some(vec!["a", "a", "b"]),
        );
        let rev = set_from(
            &[vec![5.0], vec![2.0], vec![0.0]],
            Some(vec!["b", "a", "a"]),
        );
        let cf = label_centroids(&fwd).unwrap();
        let cr = label_centroids(&rev).unwrap();
        assert_eq!(cf.ids, cr.ids);
        assert_eq!(cf.matrix, cr.matrix);
    }

    #[test]
    fn unit_norm_cosine_equals_half_squared_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let u: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() - 0.5).collect();
            let v: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() - 0.5).collect();
            let nu = norm(&u);
            let nv = norm(&v);
            let u: Vec<f64> = u.iter().map(|x| x / nu).collect();
            let v: Vec<f64> = v.iter().map(|x| x / nv).collect();
            let cd = cosine_divergence(&u, &v).unwrap();
            let e = euclidean(&u, &v);
            assert_abs_diff_eq!(cd, e * e / 2.0, epsilon = 1e-10);
        }
    }
}
