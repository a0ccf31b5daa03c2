//! Seeded synthetic embedding generators used as ground-truth oracles for the
//! metric modules and for end-to-end pipeline tests.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{EmbeddingSet, Role};
use crate::geometry::norm;
use crate::matrix::Matrix;
use crate::num::Real;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid cluster spec: {0}")]
    InvalidSpec(String),
}

/// Parameters for the Gaussian-cluster generator. Within-cluster variance is
/// fixed at 1; `separation` is the inter-centroid distance in those units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub n_classes: usize,
    pub points_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl ClusterSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.n_classes == 0 || self.points_per_class == 0 || self.dim == 0 {
            return Err(SynthError::InvalidSpec(
                "n_classes, points_per_class, and dim must be positive".into(),
            ));
        }
        if self.separation < 0.0 {
            return Err(SynthError::InvalidSpec("separation must be >= 0".into()));
        }
        Ok(())
    }
}

fn sample_gaussian<R: Real>(rng: &mut impl Rng) -> R
where
    StandardNormal: Distribution<R>,
{
    StandardNormal.sample(rng)
}

/// Vertices of a regular simplex with `count` points and the given edge
/// length, centered at the origin, in `dim >= count - 1` dimensions.
fn simplex_centroids(count: usize, dim: usize, edge: f64) -> Vec<Vec<f64>> {
    // count points e_1..e_{count-1} plus a((1,…,1)) have pairwise distance √2;
    // scale to the requested edge and drop the common mean.
    assert!(dim + 1 >= count);
    let m = count - 1; // ambient construction uses m coordinates
    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(count);
    for i in 0..m {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        vertices.push(v);
    }
    let a = if m > 0 {
        (1.0 - ((m + 1) as f64).sqrt()) / m as f64
    } else {
        0.0
    };
    let mut last = vec![0.0; dim];
    for value in last.iter_mut().take(m) {
        *value = a;
    }
    vertices.push(last);

    let scale = edge / std::f64::consts::SQRT_2;
    let mut mean = vec![0.0; dim];
    for v in &vertices {
        for (m_i, &x) in mean.iter_mut().zip(v) {
            *m_i += x / count as f64;
        }
    }
    for v in &mut vertices {
        for (x, &m_i) in v.iter_mut().zip(&mean) {
            *x = (*x - m_i) * scale;
        }
    }
    vertices
}

fn random_direction_centroids(
    rng: &mut ChaCha8Rng,
    count: usize,
    dim: usize,
    scale: f64,
) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| sample_gaussian::<f64>(rng)).collect();
            let n = norm(&v).max(1e-12);
            for x in &mut v {
                *x *= scale / n;
            }
            v
        })
        .collect()
}

fn class_label(c: usize) -> String {
    format!("class{c:03}")
}

/// Deterministic Gaussian clusters with unit within-cluster variance.
///
/// Centroids sit on a regular simplex with edge `separation` when the
/// dimension allows (dim ≥ n_classes − 1); otherwise they fall back to random
/// directions of length `separation`, with a warning, and the pairwise
/// distance guarantee no longer holds.
pub fn gaussian_clusters<R: Real>(spec: &ClusterSpec) -> Result<EmbeddingSet<R>, SynthError>
where
    StandardNormal: Distribution<R>,
{
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centroids = if spec.dim + 1 >= spec.n_classes {
        simplex_centroids(spec.n_classes, spec.dim, spec.separation)
    } else {
        log::warn!(
            "dim {} < n_classes - 1 = {}: exact simplex placement impossible, using random directions",
            spec.dim,
            spec.n_classes - 1
        );
        random_direction_centroids(&mut rng, spec.n_classes, spec.dim, spec.separation)
    };

    let n = spec.n_classes * spec.points_per_class;
    let mut rows: Vec<Vec<R>> = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (c, centroid) in centroids.iter().enumerate() {
        for p in 0..spec.points_per_class {
            let row: Vec<R> = centroid
                .iter()
                .map(|&m| R::from_f64_c(m) + sample_gaussian::<R>(&mut rng))
                .collect();
            rows.push(row);
            ids.push(format!("{}-{p:04}", class_label(c)));
            labels.push(class_label(c));
        }
    }
    Ok(EmbeddingSet {
        role: Role::AudioCrossModal,
        ids,
        labels: Some(labels),
        matrix: Matrix::from_rows(&rows),
    })
}

/// Per-point Gaussian perturbation of `base` with matching ids.
pub fn paired_cloud<R: Real>(base: &EmbeddingSet<R>, noise_scale: f64, seed: u64) -> EmbeddingSet<R>
where
    StandardNormal: Distribution<R>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = R::from_f64_c(noise_scale);
    let mut matrix = base.matrix.clone();
    for i in 0..matrix.nrows() {
        for v in matrix.row_mut(i) {
            *v += scale * sample_gaussian::<R>(&mut rng);
        }
    }
    EmbeddingSet {
        role: base.role,
        ids: base.ids.clone(),
        labels: base.labels.clone(),
        matrix,
    }
}

/// Emulates an experiment with a controllable amount of label leakage.
///
/// Returns (audio cross-modal set, class text set). At `leak_strength` 1 the
/// audio clusters align tightly with their class text rows; at 0 the audio is
/// pure noise, so zero-shot accuracy sits at the random-guess baseline.
pub fn leaky_vs_clean_scenario<R: Real>(
    spec: &ClusterSpec,
    leak_strength: f64,
) -> Result<(EmbeddingSet<R>, EmbeddingSet<R>), SynthError>
where
    StandardNormal: Distribution<R>,
{
    spec.validate()?;
    if !(0.0..=1.0).contains(&leak_strength) {
        return Err(SynthError::InvalidSpec(format!(
            "leak_strength {leak_strength} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Class directions: unit-norm simplex vertices where possible.
    let directions = if spec.dim + 1 >= spec.n_classes {
        simplex_centroids(spec.n_classes, spec.dim, 1.0)
    } else {
        random_direction_centroids(&mut rng, spec.n_classes, spec.dim, 1.0)
    };
    let directions: Vec<Vec<f64>> = directions
        .into_iter()
        .map(|mut v| {
            let n = norm(&v).max(1e-12);
            for x in &mut v {
                *x /= n;
            }
            v
        })
        .collect();

    let text_rows: Vec<Vec<R>> = directions
        .iter()
        .map(|v| v.iter().map(|&x| R::from_f64_c(x)).collect())
        .collect();
    let class_ids: Vec<String> = (0..spec.n_classes).map(class_label).collect();
    let text = EmbeddingSet {
        role: Role::TextCrossModal,
        ids: class_ids.clone(),
        labels: Some(class_ids.clone()),
        matrix: Matrix::from_rows(&text_rows),
    };

    let pull = leak_strength * spec.separation;
    let n = spec.n_classes * spec.points_per_class;
    let mut rows: Vec<Vec<R>> = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (c, direction) in directions.iter().enumerate() {
        for p in 0..spec.points_per_class {
            let row: Vec<R> = direction
                .iter()
                .map(|&d| R::from_f64_c(pull * d) + sample_gaussian::<R>(&mut rng))
                .collect();
            rows.push(row);
            ids.push(format!("{}-{p:04}", class_label(c)));
            labels.push(class_label(c));
        }
    }
    let audio = EmbeddingSet {
        role: Role::AudioCrossModal,
        ids,
        labels: Some(labels),
        matrix: Matrix::from_rows(&rows),
    };
    Ok((audio, text))
}

/// Seeded random unit vectors with uniformly random labels; the canonical
/// random-guess baseline input.
pub fn random_unit_set<R: Real>(
    n: usize,
    dim: usize,
    class_ids: &[String],
    seed: u64,
) -> EmbeddingSet<R>
where
    StandardNormal: Distribution<R>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v: Vec<R> = (0..dim).map(|_| sample_gaussian::<R>(&mut rng)).collect();
        let norm_v = norm(&v).max(R::from_f64_c(1e-12));
        for x in &mut v {
            *x /= norm_v;
        }
        rows.push(v);
        labels.push(class_ids[rng.gen_range(0..class_ids.len())].clone());
    }
    EmbeddingSet {
        role: Role::AudioCrossModal,
        ids: (0..n).map(|i| format!("rand-{i:05}")).collect(),
        labels: Some(labels),
        matrix: Matrix::from_rows(&rows),
    }
}
