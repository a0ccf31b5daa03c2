//! Zero-shot classification of audio embeddings against class text
//! embeddings, with accuracy and confusion reporting.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::EmbeddingSet;
use crate::geometry::{dot, norm};
use crate::num::Real;

#[derive(Debug, Error)]
pub enum ZeroShotError {
    #[error("audio label {label:?} (item {id:?}) not present in the class set")]
    UnknownLabel { id: String, label: String },
    #[error("audio set has no labels")]
    MissingLabels,
    #[error("audio dim {audio} does not match class dim {class}")]
    DimMismatch { audio: usize, class: usize },
    #[error("zero-norm vector for item {id:?}")]
    ZeroVector { id: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroShotReport {
    pub accuracy: f64,
    pub per_class_accuracy: BTreeMap<String, f64>,
    /// Row = truth, column = prediction; class order is `class_order`.
    pub confusion: Vec<Vec<usize>>,
    pub class_order: Vec<String>,
    pub predictions: Vec<String>,
}

impl ZeroShotReport {
    /// Confusion matrix as CSV with a `truth\prediction` header column.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("truth\\prediction");
        for c in &self.class_order {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&self.class_order[i]);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Predicts, for each audio row, the class with maximal cosine similarity.
/// Similarity ties break toward the lexicographically smaller class id.
pub fn classify<R: Real>(
    audio: &EmbeddingSet<R>,
    class_text: &EmbeddingSet<R>,
) -> Result<Vec<String>, ZeroShotError> {
    if audio.dim() != class_text.dim() {
        return Err(ZeroShotError::DimMismatch {
            audio: audio.dim(),
            class: class_text.dim(),
        });
    }
    // Iterate classes in ascending id order so that a strict > comparison
    // implements the tie rule.
    let mut class_order: Vec<usize> = (0..class_text.len()).collect();
    class_order.sort_by(|&a, &b| class_text.ids[a].cmp(&class_text.ids[b]));

    let class_norms: Vec<R> = (0..class_text.len())
        .map(|i| norm(class_text.matrix.row(i)))
        .collect();
    for (i, &n) in class_norms.iter().enumerate() {
        if n == R::zero() {
            return Err(ZeroShotError::ZeroVector {
                id: class_text.ids[i].clone(),
            });
        }
    }

    let mut predictions = Vec::with_capacity(audio.len());
    for i in 0..audio.len() {
        let row = audio.matrix.row(i);
        let row_norm = norm(row);
        if row_norm == R::zero() {
            return Err(ZeroShotError::ZeroVector {
                id: audio.ids[i].clone(),
            });
        }
        let mut best: Option<(R, usize)> = None;
        for &c in &class_order {
            let sim = dot(row, class_text.matrix.row(c)) / (row_norm * class_norms[c]);
            if best.is_none_or(|(bs, _)| sim > bs) {
                best = Some((sim, c));
            }
        }
        predictions.push(class_text.ids[best.unwrap().1].clone());
    }
    Ok(predictions)
}

/// Classifies and aggregates into accuracy, per-class accuracy, and a
/// confusion matrix.
pub fn evaluate<R: Real>(
    audio: &EmbeddingSet<R>,
    class_text: &EmbeddingSet<R>,
) -> Result<ZeroShotReport, ZeroShotError> {
    let labels = audio.labels.as_ref().ok_or(ZeroShotError::MissingLabels)?;
    let mut class_order: Vec<String> = class_text.ids.clone();
    class_order.sort();
    let class_index: HashMap<&str, usize> = class_order
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    for (i, label) in labels.iter().enumerate() {
        if !class_index.contains_key(label.as_str()) {
            return Err(ZeroShotError::UnknownLabel {
                id: audio.ids[i].clone(),
                label: label.clone(),
            });
        }
    }

    let predictions = classify(audio, class_text)?;
    let c = class_order.len();
    let mut confusion = vec![vec![0usize; c]; c];
    let mut correct = 0usize;
    for (truth, pred) in labels.iter().zip(&predictions) {
        let t = class_index[truth.as_str()];
        let p = class_index[pred.as_str()];
        confusion[t][p] += 1;
        if t == p {
            correct += 1;
        }
    }

    let mut per_class_accuracy = BTreeMap::new();
    for (i, class) in class_order.iter().enumerate() {
        let total: usize = confusion[i].iter().sum();
        if total > 0 {
            per_class_accuracy.insert(class.clone(), confusion[i][i] as f64 / total as f64);
        }
    }

    Ok(ZeroShotReport {
        accuracy: correct as f64 / labels.len() as f64,
        per_class_accuracy,
        confusion,
        class_order,
        predictions,
    })
}
