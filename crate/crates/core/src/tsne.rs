//! Exact O(n²) t-SNE projection into 2-D.
//!
//! High-dimensional affinities use a Gaussian kernel with per-point bandwidth
//! calibrated to a target perplexity; low-dimensional affinities use the
//! Student-t kernel. The KL divergence between the two is minimized by
//! gradient descent with momentum and early exaggeration.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::EmbeddingSet;
use crate::geometry::{pairwise_divergence, GeometryError, Metric};
use crate::matrix::Matrix;
use crate::num::Real;

const P_FLOOR: f64 = 1e-12;
const MAX_CALIBRATION_STEPS: usize = 50;
const PERPLEXITY_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum TsneError {
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("perplexity {perplexity} outside valid range [2, {max})")]
    InvalidPerplexity { perplexity: f64, max: f64 },
    #[error("iterations must be >= 1")]
    NoIterations,
    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsneConfig {
    /// Target perplexity; `None` selects min(30, ⌊(n−1)/3⌋).
    pub perplexity: Option<f64>,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations during which early exaggeration applies and momentum stays
    /// at its initial value.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
    pub input_metric: Metric,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: None,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
            input_metric: Metric::CosineDivergence,
        }
    }
}

impl TsneConfig {
    pub fn effective_perplexity(&self, n: usize) -> f64 {
        self.perplexity
            .unwrap_or_else(|| 30.0f64.min(((n - 1) / 3) as f64))
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult<R> {
    pub coords: Matrix<R>,
    pub kl_trace: Vec<R>,
    pub config: TsneConfig,
    /// Rows whose bandwidth search did not reach the perplexity tolerance.
    pub uncalibrated_rows: usize,
}

/// Calibrates the Gaussian bandwidth for one point so the conditional
/// distribution over its n−1 neighbors has the target perplexity.
///
/// Returns the probability row (summing to 1) and whether the binary search
/// converged to |2^H − perplexity| ≤ 1e-5 within 50 steps.
pub fn perplexity_calibration<R: Real>(distance_row: &[R], perplexity: R) -> (Vec<R>, bool) {
    let target_entropy = perplexity.to_f64().unwrap().log2();
    let mut beta = 1.0f64; // 1 / (2 sigma^2)
    let mut beta_min = f64::NEG_INFINITY;
    let mut beta_max = f64::INFINITY;
    let d2: Vec<f64> = distance_row
        .iter()
        .map(|d| {
            let d = d.to_f64().unwrap();
            d * d
        })
        .collect();

    let mut row = vec![0.0f64; d2.len()];
    let mut converged = false;
    for _ in 0..MAX_CALIBRATION_STEPS {
        let entropy = fill_row(&d2, beta, &mut row);
        if (2f64.powf(entropy) - 2f64.powf(target_entropy)).abs() <= PERPLEXITY_TOLERANCE {
            converged = true;
            break;
        }
        if entropy > target_entropy {
            // distribution too flat: sharpen
            beta_min = beta;
            beta = if beta_max.is_infinite() {
                beta * 2.0
            } else {
                (beta + beta_max) / 2.0
            };
        } else {
            beta_max = beta;
            beta = if beta_min.is_infinite() {
                beta / 2.0
            } else {
                (beta + beta_min) / 2.0
            };
        }
    }
    if !converged {
        fill_row(&d2, beta, &mut row);
    }
    (row.into_iter().map(R::from_f64_c).collect(), converged)
}

/// Writes the normalized Gaussian row for the given precision and returns its
/// Shannon entropy in bits.
fn fill_row(d2: &[f64], beta: f64, row: &mut [f64]) -> f64 {
    let min_d2 = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (r, &d) in row.iter_mut().zip(d2) {
        // Shift by the minimum to keep the exponentials in range.
        let v = (-(d - min_d2) * beta).exp();
        *r = v;
        sum += v;
    }
    let mut entropy = 0.0;
    for r in row.iter_mut() {
        *r /= sum;
        if *r > 0.0 {
            entropy -= *r * r.log2();
        }
    }
    entropy
}

/// Symmetrized, normalized, floored affinity matrix P.
pub fn joint_affinities<R: Real>(
    set: &EmbeddingSet<R>,
    config: &TsneConfig,
) -> Result<(Matrix<f64>, usize), TsneError> {
    let n = set.len();
    let dm = pairwise_divergence(set, config.input_metric)?;
    let perplexity = config.effective_perplexity(n);
    let mut conditional = Matrix::zeros(n, n);
    let mut uncalibrated = 0usize;
    for i in 0..n {
        let distances: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| dm.get(i, j).to_f64().unwrap())
            .collect();
        let (row, converged) = perplexity_calibration(&distances, perplexity);
        if !converged {
            uncalibrated += 1;
        }
        let mut it = row.into_iter();
        for j in 0..n {
            if j != i {
                conditional.set(i, j, it.next().unwrap());
            }
        }
    }
    if uncalibrated > 0 {
        log::warn!("perplexity calibration did not converge for {uncalibrated} row(s); best bandwidth used");
    }

    let mut p = Matrix::zeros(n, n);
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (conditional.get(i, j) + conditional.get(j, i)) / (2.0 * n as f64);
            p.set(i, j, v);
            p.set(j, i, v);
            total += 2.0 * v;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p.set(i, j, (p.get(i, j) / total).max(P_FLOOR));
            }
        }
    }
    Ok((p, uncalibrated))
}

/// KL(P‖Q) and its gradient with respect to the 2-D coordinates.
pub fn kl_and_gradient(p: &Matrix<f64>, coords: &Matrix<f64>) -> (f64, Matrix<f64>) {
    let n = coords.nrows();
    // Student-t kernel weights and their total.
    let mut w = Matrix::zeros(n, n);
    let mut w_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords.get(i, 0) - coords.get(j, 0);
            let dy = coords.get(i, 1) - coords.get(j, 1);
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            w.set(i, j, v);
            w.set(j, i, v);
            w_sum += 2.0 * v;
        }
    }

    let mut kl = 0.0;
    let mut grad = Matrix::zeros(n, 2);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.get(i, j);
            let wij = w.get(i, j);
            let qij = (wij / w_sum).max(P_FLOOR);
            kl += pij * (pij / qij).ln();
            let factor = 4.0 * (pij - qij) * wij;
            grad.set(
                i,
                0,
                grad.get(i, 0) + factor * (coords.get(i, 0) - coords.get(j, 0)),
            );
            grad.set(
                i,
                1,
                grad.get(i, 1) + factor * (coords.get(i, 1) - coords.get(j, 1)),
            );
        }
    }
    (kl, grad)
}

/// Runs exact t-SNE on the embedding set.
pub fn tsne<R: Real>(
    set: &EmbeddingSet<R>,
    config: &TsneConfig,
) -> Result<TsneResult<R>, TsneError> {
    let n = set.len();
    if n < 4 {
        return Err(TsneError::TooFewPoints(n));
    }
    if config.iterations < 1 {
        return Err(TsneError::NoIterations);
    }
    let perplexity = config.effective_perplexity(n);
    if perplexity < 2.0 || perplexity >= (n - 1) as f64 {
        return Err(TsneError::InvalidPerplexity {
            perplexity,
            max: (n - 1) as f64,
        });
    }

    let (p, uncalibrated_rows) = joint_affinities(set, config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut coords: Matrix<f64> = Matrix::zeros(n, 2);
    for i in 0..n {
        for d in 0..2 {
            let g: f64 = StandardNormal.sample(&mut rng);
            coords.set(i, d, g * 1e-4);
        }
    }

    let mut velocity: Matrix<f64> = Matrix::zeros(n, 2);
    let mut kl_trace = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let exaggerating = iteration < config.exaggeration_iters;
        let p_effective = if exaggerating {
            p.map(|v| v * config.early_exaggeration)
        } else {
            p.clone()
        };
        let (_, grad) = kl_and_gradient(&p_effective, &coords);
        if grad.first_non_finite().is_some() {
            return Err(TsneError::NonFiniteGradient { iteration });
        }
        let momentum = if exaggerating {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        for i in 0..n {
            for d in 0..2 {
                let v = momentum * velocity.get(i, d) - config.learning_rate * grad.get(i, d);
                velocity.set(i, d, v);
                coords.set(i, d, coords.get(i, d) + v);
            }
        }
        // Recenter so the embedding stays around the origin.
        for d in 0..2 {
            let mean = (0..n).map(|i| coords.get(i, d)).sum::<f64>() / n as f64;
            for i in 0..n {
                coords.set(i, d, coords.get(i, d) - mean);
            }
        }
        let (kl, _) = kl_and_gradient(&p, &coords);
        kl_trace.push(kl);
    }

    Ok(TsneResult {
        coords: coords.map(R::from_f64_c),
        kl_trace: kl_trace.into_iter().map(R::from_f64_c).collect(),
        config: config.clone(),
        uncalibrated_rows,
    })
}

/// Coordinates as CSV: `id,x,y,label`.
pub fn coords_csv<R: Real>(
    result: &TsneResult<R>,
    ids: &[String],
    labels: Option<&[String]>,
) -> String {
    let mut out = String::from("id,x,y,label\n");
    for i in 0..result.coords.nrows() {
        let label = labels.map_or("", |ls| ls[i].as_str());
        out.push_str(&format!(
            "{},{},{},{}\n",
            ids[i],
            result.coords.get(i, 0),
            result.coords.get(i, 1),
            label
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::Role;
    use approx::assert_abs_diff_eq;

    fn cloud(rows: &[Vec<f64>], labels: Option<Vec<String>>) -> EmbeddingSet<f64> {
        EmbeddingSet {
            role: Role::AudioCrossModal,
            ids: (0..rows.len()).map(|i| format!("id{i}")).collect(),
            labels,
            matrix: Matrix::from_rows(rows),
        }
    }

    fn random_cloud(seed: u64, n: usize, d: usize) -> EmbeddingSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        cloud(
            &(0..n)
                .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
                .collect::<Vec<_>>(),
            None,
        )
    }

    #[test]
    fn equal_distances_give_uniform_row() {
        let (row, _) = perplexity_calibration(&[3.0; 7], 4.0);
        for v in &row {
            assert_abs_diff_eq!(v, &(1.0 / 7.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn calibrated_row_hits_target_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let distances: Vec<f64> = (0..40).map(|_| rng.gen::<f64>() + 0.1).collect();
        for perplexity in [2.0, 5.0, 12.0] {
            let (row, converged) = perplexity_calibration(&distances, perplexity);
            assert!(converged);
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            let entropy: f64 = -row
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.log2())
                .sum::<f64>();
            assert_abs_diff_eq!(entropy, perplexity.log2(), epsilon = 1e-5);
        }
    }

    #[test]
    fn mass_concentrates_on_near_points() {
        let mut distances = vec![1.0, 1.0];
        distances.extend(vec![1000.0; 20]);
        let (row, _) = perplexity_calibration(&distances, 2.0);
        assert!(row[0] >= 0.49, "row[0] = {}", row[0]);
        assert!(row[1] >= 0.49, "row[1] = {}", row[1]);
    }

    #[test]
    fn affinities_symmetric_floored_normalized() {
        let set = random_cloud(2, 30, 5);
        let config = TsneConfig {
            input_metric: Metric::Euclidean,
            ..TsneConfig::default()
        };
        let (p, _) = joint_affinities(&set, &config).unwrap();
        let mut sum = 0.0;
        for i in 0..30 {
            for j in 0..30 {
                if i == j {
                    assert_eq!(p.get(i, j), 0.0);
                } else {
                    assert_eq!(p.get(i, j), p.get(j, i));
                    assert!(p.get(i, j) >= P_FLOOR);
                    sum += p.get(i, j);
                }
            }
        }
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let set = random_cloud(3, 20, 4);
        let config = TsneConfig {
            iterations: 50,
            input_metric: Metric::Euclidean,
            seed: 9,
            ..TsneConfig::default()
        };
        let a = tsne(&set, &config).unwrap();
        let b = tsne(&set, &config).unwrap();
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.kl_trace, b.kl_trace);
    }

    #[test]
    fn kl_non_negative() {
        let set = random_cloud(4, 15, 3);
        let config = TsneConfig {
            iterations: 120,
            input_metric: Metric::Euclidean,
            ..TsneConfig::default()
        };
        let result = tsne(&set, &config).unwrap();
        for kl in &result.kl_trace {
            assert!(kl.is_finite() && *kl >= 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let set = random_cloud(5, 10, 3);
        let config = TsneConfig {
            input_metric: Metric::Euclidean,
            perplexity: Some(3.0),
            ..TsneConfig::default()
        };
        let (p, _) = joint_affinities(&set, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut coords = Matrix::zeros(10, 2);
        for i in 0..10 {
            for d in 0..2 {
                coords.set(i, d, rng.gen::<f64>() - 0.5);
            }
        }
        let (_, grad) = kl_and_gradient(&p, &coords);
        let h = 1e-6;
        for i in 0..10 {
            for d in 0..2 {
                let mut plus = coords.clone();
                plus.set(i, d, plus.get(i, d) + h);
                let mut minus = coords.clone();
                minus.set(i, d, minus.get(i, d) - h);
                let fd = (kl_and_gradient(&p, &plus).0 - kl_and_gradient(&p, &minus).0) / (2.0 * h);
                let g = grad.get(i, d);
                let denom = g.abs().max(fd.abs()).max(1e-8);
                assert!(
                    (g - fd).abs() / denom < 1e-4,
                    "coordinate ({i}, {d}): analytic {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn rejects_small_inputs_and_bad_config() {
        let set = random_cloud(6, 3, 2);
        assert!(matches!(
            tsne(&set, &TsneConfig::default()),
            Err(TsneError::TooFewPoints(3))
        ));
        let set = random_cloud(6, 10, 2);
        let config = TsneConfig {
            perplexity: Some(20.0),
            ..TsneConfig::default()
        };
        assert!(matches!(
            tsne(&set, &config),
            Err(TsneError::InvalidPerplexity { .. })
        ));
    }

    #[test]
    fn separated_clusters_stay_separated_in_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..20 {
                let mut row = vec![0.0; 5];
                row[c] = 10.0;
                for v in &mut row {
                    *v += rng.gen::<f64>() - 0.5;
                }
                rows.push(row);
                labels.push(format!("c{c}"));
            }
        }
        let set = cloud(&rows, Some(labels.clone()));
        let config = TsneConfig {
            iterations: 500,
            input_metric: Metric::Euclidean,
            seed: 1,
            ..TsneConfig::default()
        };
        let result = tsne(&set, &config).unwrap();
        let projected = cloud(
            &(0..60)
                .map(|i| vec![result.coords.get(i, 0), result.coords.get(i, 1)])
                .collect::<Vec<_>>(),
            Some(labels.clone()),
        );
        let dm = pairwise_divergence(&projected, Metric::Euclidean).unwrap();
        let score = crate::cluster_metrics::silhouette_score(&dm, &labels).unwrap();
        assert!(score > 0.5, "2-D silhouette = {score}");
    }
}
