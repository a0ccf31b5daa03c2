//! Neighborhood-overlap topological similarity between two index-paired
//! point clouds.
//!
//! For each k, S_k is the mean over items of |N_k(p_i) ∩ N_k(q_i)| / k, where
//! N_k are the k-nearest-neighbor index sets in each cloud. The reported
//! similarity is S = max_k S_k over the evaluated k range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::EmbeddingSet;
use crate::geometry::{
    label_centroids, neighbor_orders, pairwise_divergence, GeometryError, Metric,
};
use crate::num::Real;

#[derive(Debug, Error)]
pub enum TopoError {
    #[error("point clouds are not id-aligned (first mismatch at index {index})")]
    IdMisalignment { index: usize },
    #[error("clouds have different sizes: {p} vs {q}")]
    SizeMismatch { p: usize, q: usize },
    #[error("empty k range")]
    EmptyKRange,
    #[error("k range [{k_min}, {k_max}] exceeds bound {max} for this cloud")]
    KRangeOutOfBounds {
        k_min: usize,
        k_max: usize,
        max: usize,
    },
    #[error("label vocabulary mismatch: {0}")]
    LabelVocabularyMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Options shared by all topological-similarity comparisons.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TopoOptions {
    pub metric: Metric,
    /// Inclusive k range; `None` means {1, …, ⌈√n⌉}.
    pub k_range: Option<(usize, usize)>,
    pub include_self: bool,
    /// Compare the unimodal-vs-crossmodal pairs over the full point clouds
    /// instead of label centroids.
    pub full_clouds_unimodal: bool,
}

impl Default for TopoOptions {
    fn default() -> Self {
        Self {
            metric: Metric::CosineDivergence,
            k_range: None,
            include_self: false,
            full_clouds_unimodal: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopoSimilarityResult {
    /// S_k for k = k_range.0 ..= k_range.1, in order.
    pub curve: Vec<f64>,
    pub s_max: f64,
    pub k_at_max: usize,
    pub k_range: (usize, usize),
    pub include_self: bool,
    pub metric: Metric,
}

impl TopoSimilarityResult {
    /// CSV dump of the curve, header `k,S_k`.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("k,S_k\n");
        for (offset, s) in self.curve.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.k_range.0 + offset, s));
        }
        out
    }
}

fn default_k_range(n: usize, include_self: bool) -> (usize, usize) {
    let bound = if include_self { n } else { n - 1 };
    let k_max = (n as f64).sqrt().ceil() as usize;
    (1, k_max.clamp(1, bound))
}

fn check_alignment<R: Real>(p: &EmbeddingSet<R>, q: &EmbeddingSet<R>) -> Result<(), TopoError> {
    if p.len() != q.len() {
        return Err(TopoError::SizeMismatch {
            p: p.len(),
            q: q.len(),
        });
    }
    if let Some(index) = (0..p.len()).find(|&i| p.ids[i] != q.ids[i]) {
        return Err(TopoError::IdMisalignment { index });
    }
    Ok(())
}

/// S_k for every k in the range, as a flat curve.
pub fn topo_similarity_curve<R: Real>(
    p: &EmbeddingSet<R>,
    q: &EmbeddingSet<R>,
    metric: Metric,
    k_range: Option<(usize, usize)>,
    include_self: bool,
) -> Result<(Vec<f64>, (usize, usize)), TopoError> {
    check_alignment(p, q)?;
    let n = p.len();
    if n < 2 {
        return Err(GeometryError::TooFewPoints { n }.into());
    }
    let (k_min, k_max) = k_range.unwrap_or_else(|| default_k_range(n, include_self));
    if k_min < 1 || k_min > k_max {
        return Err(TopoError::EmptyKRange);
    }
    let bound = if include_self { n } else { n - 1 };
    if k_max > bound {
        return Err(TopoError::KRangeOutOfBounds {
            k_min,
            k_max,
            max: bound,
        });
    }

    let dp = pairwise_divergence(p, metric)?;
    let dq = pairwise_divergence(q, metric)?;
    let orders_p = neighbor_orders(&dp, include_self);
    let orders_q = neighbor_orders(&dq, include_self);

    // Incremental prefix-set intersection: grow both neighbor sets one index
    // per k and keep a running overlap count per item.
    let mut curve = vec![0.0f64; k_max - k_min + 1];
    let mut in_p = vec![false; n];
    let mut in_q = vec![false; n];
    for i in 0..n {
        in_p.iter_mut().for_each(|v| *v = false);
        in_q.iter_mut().for_each(|v| *v = false);
        let mut overlap = 0usize;
        for k in 1..=k_max {
            let np = orders_p[i][k - 1];
            let nq = orders_q[i][k - 1];
            // np is new to the P set and nq new to the Q set at this k, so
            // each check can only count a freshly completed common element.
            in_p[np] = true;
            if in_q[np] {
                overlap += 1;
            }
            in_q[nq] = true;
            if in_p[nq] {
                overlap += 1;
            }
            if k >= k_min {
                curve[k - k_min] += overlap as f64 / k as f64;
            }
        }
    }
    for s in &mut curve {
        *s /= n as f64;
    }
    Ok((curve, (k_min, k_max)))
}

/// Full result with the max-over-k summary; ties in k broken toward smaller k.
pub fn topo_similarity<R: Real>(
    p: &EmbeddingSet<R>,
    q: &EmbeddingSet<R>,
    metric: Metric,
    k_range: Option<(usize, usize)>,
    include_self: bool,
) -> Result<TopoSimilarityResult, TopoError> {
    let (curve, (k_min, k_max)) = topo_similarity_curve(p, q, metric, k_range, include_self)?;
    let (best_offset, s_max) =
        curve
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
    Ok(TopoSimilarityResult {
        curve,
        s_max,
        k_at_max: k_min + best_offset,
        k_range: (k_min, k_max),
        include_self,
        metric,
    })
}

/// Lowercased, whitespace-collapsed label used for cross-vocabulary alignment.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Reorders `centroids` (ids are label strings) to match the id order of
/// `reference`, matching after label normalization.
fn align_to<R: Real>(
    centroids: &EmbeddingSet<R>,
    reference: &EmbeddingSet<R>,
) -> Result<EmbeddingSet<R>, TopoError> {
    use std::collections::HashMap;
    let by_label: HashMap<String, usize> = centroids
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (normalize_label(id), i))
        .collect();
    let mut rows = Vec::with_capacity(reference.len());
    let mut ids = Vec::with_capacity(reference.len());
    for id in &reference.ids {
        let key = normalize_label(id);
        let &idx = by_label.get(&key).ok_or_else(|| {
            TopoError::LabelVocabularyMismatch(format!("label {id:?} has no matching centroid"))
        })?;
        rows.push(centroids.matrix.row(idx).to_vec());
        ids.push(id.clone());
    }
    if by_label.len() != reference.len() {
        return Err(TopoError::LabelVocabularyMismatch(format!(
            "{} centroids vs {} reference labels",
            by_label.len(),
            reference.len()
        )));
    }
    Ok(EmbeddingSet {
        role: centroids.role,
        labels: Some(ids.clone()),
        ids,
        matrix: crate::matrix::Matrix::from_rows(&rows),
    })
}

/// The three pairwise comparisons: x_a vs E_a, x_t vs E_t, E_a vs E_t.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceComparison {
    pub xa_vs_ea: TopoSimilarityResult,
    pub xt_vs_et: TopoSimilarityResult,
    pub ea_vs_et: TopoSimilarityResult,
}

/// Runs all three comparisons with consistent options.
///
/// Audio clouds are reduced to label centroids so they can be compared with
/// the one-row-per-class text clouds; the unimodal-vs-crossmodal pairs can
/// optionally use the full clouds instead.
pub fn compare_all_spaces<R: Real>(
    x_a: &EmbeddingSet<R>,
    e_a: &EmbeddingSet<R>,
    x_t: &EmbeddingSet<R>,
    e_t: &EmbeddingSet<R>,
    options: &TopoOptions,
) -> Result<SpaceComparison, TopoError> {
    let run = |p: &EmbeddingSet<R>, q: &EmbeddingSet<R>| {
        topo_similarity(p, q, options.metric, options.k_range, options.include_self)
    };

    let (xa_vs_ea, xt_vs_et) = if options.full_clouds_unimodal {
        (run(x_a, e_a)?, run(x_t, e_t)?)
    } else {
        let ca = label_centroids(x_a)?;
        let ce = label_centroids(e_a)?;
        (run(&ca, &ce)?, run(x_t, e_t)?)
    };

    let audio_centroids = label_centroids(e_a)?;
    let aligned = align_to(&audio_centroids, e_t)?;
    let ea_vs_et = run(&aligned, e_t)?;

    Ok(SpaceComparison {
        xa_vs_ea,
        xt_vs_et,
        ea_vs_et,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::Role;
    use crate::matrix::Matrix;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cloud(rows: &[Vec<f64>]) -> EmbeddingSet<f64> {
        EmbeddingSet {
            role: Role::AudioCrossModal,
            ids: (0..rows.len()).map(|i| format!("id{i}")).collect(),
            labels: None,
            matrix: Matrix::from_rows(rows),
        }
    }

    fn random_cloud(rng: &mut impl Rng, n: usize, d: usize) -> EmbeddingSet<f64> {
        cloud(
            &(0..n)
                .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn identical_clouds_give_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_cloud(&mut rng, 30, 4);
        let result = topo_similarity(&p, &p.clone(), Metric::Euclidean, None, false).unwrap();
        for s in &result.curve {
            assert_abs_diff_eq!(s, &1.0, epsilon = 1e-15);
        }
        assert_eq!(result.s_max, 1.0);
        assert_eq!(result.k_at_max, 1);
    }

    #[test]
    fn include_self_forces_s1() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_cloud(&mut rng, 25, 3);
        let q = random_cloud(&mut rng, 25, 3);
        let (curve, (k_min, _)) =
            topo_similarity_curve(&p, &q, Metric::Euclidean, Some((1, 10)), true).unwrap();
        assert_eq!(k_min, 1);
        assert_eq!(curve[0], 1.0);
        for (offset, s) in curve.iter().enumerate() {
            let k = (offset + 1) as f64;
            assert!(*s >= 1.0 / k - 1e-15, "S_{k} = {s} < 1/{k}");
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let p = random_cloud(&mut rng, 20, 3);
            let mut q = random_cloud(&mut rng, 20, 3);
            q.ids = p.ids.clone();
            let a = topo_similarity(&p, &q, Metric::Euclidean, None, false).unwrap();
            let b = topo_similarity(&q, &p, Metric::Euclidean, None, false).unwrap();
            for (x, y) in a.curve.iter().zip(&b.curve) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn euclidean_isometry_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_cloud(&mut rng, 20, 2);
        // Rotate by an angle and translate.
        let (s, c) = (0.6f64, 0.8f64);
        let rotated = cloud(
            &p.matrix
                .rows_iter()
                .map(|r| vec![c * r[0] - s * r[1] + 5.0, s * r[0] + c * r[1] - 2.0])
                .collect::<Vec<_>>(),
        );
        let result = topo_similarity(&p, &rotated, Metric::Euclidean, None, false).unwrap();
        assert_abs_diff_eq!(result.s_max, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn random_clouds_match_expected_overlap() {
        // Expected overlap of two unrelated k-neighbor sets among n-1
        // candidates is hypergeometric: E[S_k] = k/(n-1).
        let n = 100;
        let seeds = 20;
        let ks = [2usize, 5, 9];
        for &k in &ks {
            let mut per_seed = Vec::with_capacity(seeds);
            for seed in 0..seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed as u64);
                let p = random_cloud(&mut rng, n, 5);
                let mut q = random_cloud(&mut rng, n, 5);
                q.ids = p.ids.clone();
                let (curve, _) =
                    topo_similarity_curve(&p, &q, Metric::Euclidean, Some((k, k)), false).unwrap();
                per_seed.push(curve[0]);
            }
            let mean = per_seed.iter().sum::<f64>() / seeds as f64;
            let var = per_seed
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (seeds - 1) as f64;
            let se = (var / seeds as f64).sqrt().max(1e-6);
            let expected = k as f64 / (n - 1) as f64;
            assert!(
                (mean - expected).abs() <= 5.0 * se,
                "k={k}: mean {mean} vs expected {expected} (se {se})"
            );
        }
    }

    #[test]
    fn misaligned_ids_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_cloud(&mut rng, 10, 2);
        let mut q = random_cloud(&mut rng, 10, 2);
        q.ids[3] = "other".into();
        assert!(matches!(
            topo_similarity(&p, &q, Metric::Euclidean, None, false),
            Err(TopoError::IdMisalignment { index: 3 })
        ));
    }

    #[test]
    fn permutation_consistency() {
        // Shuffling rows of one cloud and recomputing from scratch must agree
        // with the incremental path.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_cloud(&mut rng, 30, 3);
        let mut perm: Vec<usize> = (0..30).collect();
        perm.shuffle(&mut rng);
        let shuffled = EmbeddingSet {
            role: p.role,
            ids: p.ids.clone(),
            labels: None,
            matrix: Matrix::from_rows(
                &perm
                    .iter()
                    .map(|&i| p.matrix.row(i).to_vec())
                    .collect::<Vec<_>>(),
            ),
        };
        let fast = topo_similarity(&p, &shuffled, Metric::Euclidean, Some((1, 6)), false).unwrap();
        // Brute-force S_k from explicit neighbor sets.
        let dp = pairwise_divergence(&p, Metric::Euclidean).unwrap();
        let dq = pairwise_divergence(&shuffled, Metric::Euclidean).unwrap();
        for (offset, k) in (1..=6).enumerate() {
            let lp = crate::geometry::knn_lists(&dp, k, false).unwrap();
            let lq = crate::geometry::knn_lists(&dq, k, false).unwrap();
            let mut total = 0.0;
            for i in 0..30 {
                let sp: std::collections::HashSet<_> = lp.lists[i].iter().collect();
                let overlap = lq.lists[i].iter().filter(|j| sp.contains(j)).count();
                total += overlap as f64 / k as f64;
            }
            assert_abs_diff_eq!(fast.curve[offset], total / 30.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn compare_all_spaces_identical_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n_classes = 5;
        let per = 4;
        let rows: Vec<Vec<f64>> = (0..n_classes * per)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let labels: Vec<String> = (0..n_classes * per)
            .map(|i| format!("class{}", i / per))
            .collect();
        let audio = EmbeddingSet {
            role: Role::AudioCrossModal,
            ids: (0..rows.len()).map(|i| format!("a{i}")).collect(),
            labels: Some(labels.clone()),
            matrix: Matrix::from_rows(&rows),
        };
        let text_rows = label_centroids(&audio).unwrap();
        let comparison = compare_all_spaces(
            &audio,
            &audio.clone(),
            &text_rows,
            &text_rows.clone(),
            &TopoOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(comparison.xa_vs_ea.s_max, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(comparison.xt_vs_et.s_max, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(comparison.ea_vs_et.s_max, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn vocabulary_mismatch_rejected() {
        let audio = EmbeddingSet {
            role: Role::AudioCrossModal,
            ids: vec!["a0".into(), "a1".into()],
            labels: Some(vec!["dog".into(), "cat".into()]),
            matrix: Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
        };
        let text = EmbeddingSet {
            role: Role::TextCrossModal,
            ids: vec!["dog".into(), "bird".into()],
            labels: None,
            matrix: Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
        };
        let unimodal_audio = audio.clone();
        let err = compare_all_spaces(
            &unimodal_audio,
            &audio,
            &text,
            &text,
            &TopoOptions::default(),
        );
        assert!(matches!(err, Err(TopoError::LabelVocabularyMismatch(_))));
    }

    #[test]
    fn curve_csv_format() {
        let result = TopoSimilarityResult {
            curve: vec![0.5, 0.75],
            s_max: 0.75,
            k_at_max: 2,
            k_range: (1, 2),
            include_self: false,
            metric: Metric::CosineDivergence,
        };
        assert_eq!(result.curve_csv(), "k,S_k\n1,0.5\n2,0.75\n");
    }
}
