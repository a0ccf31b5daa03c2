//! Loading and validation of embedding matrices and item manifests.

pub mod npy;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::num::Real;
pub use npy::{read_npy, write_npy, NpyError};

/// Which of the four embedding spaces a matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Unimodal audio backbone output.
    AudioUnimodal,
    /// Audio embedding projected into the cross-modal space.
    AudioCrossModal,
    /// Unimodal text backbone output.
    TextUnimodal,
    /// Text embedding projected into the cross-modal space.
    TextCrossModal,
}

impl Role {
    pub fn all() -> [Role; 4] {
        [
            Role::AudioUnimodal,
            Role::AudioCrossModal,
            Role::TextUnimodal,
            Role::TextCrossModal,
        ]
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Role::AudioUnimodal => "x_a",
            Role::AudioCrossModal => "E_a",
            Role::TextUnimodal => "x_t",
            Role::TextCrossModal => "E_t",
        }
    }

    pub fn is_cross_modal(self) -> bool {
        matches!(self, Role::AudioCrossModal | Role::TextCrossModal)
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x_a" | "audio_unimodal" => Ok(Role::AudioUnimodal),
            "E_a" | "e_a" | "audio_cross_modal" => Ok(Role::AudioCrossModal),
            "x_t" | "text_unimodal" => Ok(Role::TextUnimodal),
            "E_t" | "e_t" | "text_cross_modal" => Ok(Role::TextCrossModal),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// One dataset item; the unit of manifest I/O and leakage filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// An id-aligned n×d embedding matrix with a role tag and optional labels.
#[derive(Debug, Clone)]
pub struct EmbeddingSet<R> {
    pub role: Role,
    pub ids: Vec<String>,
    pub labels: Option<Vec<String>>,
    pub matrix: Matrix<R>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error("manifest line {line}: missing required field {field:?}")]
    MissingField { line: usize, field: &'static str },
    #[error("manifest line {line}: empty required field {field:?}")]
    EmptyField { line: usize, field: &'static str },
    #[error("manifest line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("manifest line {line}: parse error: {reason}")]
    ManifestParse { line: usize, reason: String },
    #[error("matrix has {matrix_rows} rows but manifest has {manifest_rows} records")]
    CountMismatch {
        matrix_rows: usize,
        manifest_rows: usize,
    },
    #[error("non-finite matrix entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("embedding set has no labels")]
    MissingLabels,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl<R: Real> EmbeddingSet<R> {
    pub fn new(
        role: Role,
        ids: Vec<String>,
        labels: Option<Vec<String>>,
        matrix: Matrix<R>,
    ) -> Result<Self, CorpusError> {
        assert_eq!(ids.len(), matrix.nrows(), "ids must match matrix rows");
        if let Some(labels) = &labels {
            assert_eq!(labels.len(), ids.len(), "labels must match ids");
        }
        if let Some((row, col)) = matrix.first_non_finite() {
            return Err(CorpusError::NonFinite { row, col });
        }
        Ok(Self {
            role,
            ids,
            labels,
            matrix,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn labels(&self) -> Result<&[String], CorpusError> {
        self.labels.as_deref().ok_or(CorpusError::MissingLabels)
    }
}

/// Parses a manifest file: JSON-lines or CSV with an `id,label[,caption,split]`
/// header. Order-preserving; duplicate ids rejected.
pub fn read_manifest(path: &Path) -> Result<Vec<ItemRecord>, CorpusError> {
    read_manifest_opts(path, false)
}

/// Manifest parse that tolerates repeated ids. Caption corpora pair the same
/// audio file with several captions, so the same id legitimately recurs there.
pub fn read_manifest_allow_duplicates(path: &Path) -> Result<Vec<ItemRecord>, CorpusError> {
    read_manifest_opts(path, true)
}

fn read_manifest_opts(path: &Path, allow_duplicates: bool) -> Result<Vec<ItemRecord>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = Vec::new();
    for line in reader.lines() {
        lines.push(line?);
    }
    let first = lines
        .iter()
        .find(|l| !l.trim().is_empty())
        .map(|l| l.trim_start().to_string())
        .unwrap_or_default();

    let records = if first.starts_with('{') {
        parse_jsonl(&lines)?
    } else {
        parse_csv(path)?
    };

    for (i, rec) in records.iter().enumerate() {
        if rec.id.is_empty() {
            return Err(CorpusError::EmptyField {
                line: i + 1,
                field: "id",
            });
        }
        if rec.label.is_empty() {
            return Err(CorpusError::EmptyField {
                line: i + 1,
                field: "label",
            });
        }
    }
    if !allow_duplicates {
        let mut seen = HashSet::new();
        for (i, rec) in records.iter().enumerate() {
            if !seen.insert(rec.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    line: i + 1,
                    id: rec.id.clone(),
                });
            }
        }
    }
    Ok(records)
}

fn parse_jsonl(lines: &[String]) -> Result<Vec<ItemRecord>, CorpusError> {
    let mut records = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| CorpusError::ManifestParse {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        for field in ["id", "label"] {
            if value.get(field).is_none() {
                return Err(CorpusError::MissingField {
                    line: idx + 1,
                    field: if field == "id" { "id" } else { "label" },
                });
            }
        }
        let rec: ItemRecord =
            serde_json::from_value(value).map_err(|e| CorpusError::ManifestParse {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        records.push(rec);
    }
    Ok(records)
}

fn parse_csv(path: &Path) -> Result<Vec<ItemRecord>, CorpusError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CorpusError::ManifestParse {
        line: 1,
        reason: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::ManifestParse {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("id").ok_or(CorpusError::MissingField {
        line: 1,
        field: "id",
    })?;
    let label_col = col("label").ok_or(CorpusError::MissingField {
        line: 1,
        field: "label",
    })?;
    let caption_col = col("caption");
    let split_col = col("split");

    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let row = row.map_err(|e| CorpusError::ManifestParse {
            line,
            reason: e.to_string(),
        })?;
        let get = |c: usize| row.get(c).unwrap_or("").to_string();
        let split = match split_col.map(get).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => Some(match s.as_str() {
                "train" => Split::Train,
                "validation" => Split::Validation,
                "test" => Split::Test,
                other => {
                    return Err(CorpusError::ManifestParse {
                        line,
                        reason: format!("unknown split {other:?}"),
                    })
                }
            }),
        };
        records.push(ItemRecord {
            id: get(id_col),
            label: get(label_col),
            caption: caption_col.map(get).filter(|s| !s.is_empty()),
            split,
        });
    }
    Ok(records)
}

/// Writes records as JSON-lines, one object per record, in order.
pub fn write_manifest_jsonl(records: &[ItemRecord], path: &Path) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec).map_err(|e| CorpusError::ManifestParse {
            line: 0,
            reason: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a matrix and its manifest and binds them row-for-row into an
/// [`EmbeddingSet`]. f32 payloads are widened to f64 here; downstream math is
/// double precision throughout.
pub fn load_embedding_set(
    matrix_path: &Path,
    manifest_path: &Path,
    role: Role,
) -> Result<EmbeddingSet<f64>, CorpusError> {
    let matrix = read_npy(matrix_path)?;
    let records = read_manifest(manifest_path)?;
    bind_embedding_set(matrix, &records, role)
}

/// Binds an already-parsed matrix to manifest records.
pub fn bind_embedding_set(
    matrix: Matrix<f64>,
    records: &[ItemRecord],
    role: Role,
) -> Result<EmbeddingSet<f64>, CorpusError> {
    if matrix.nrows() != records.len() {
        return Err(CorpusError::CountMismatch {
            matrix_rows: matrix.nrows(),
            manifest_rows: records.len(),
        });
    }
    let ids = records.iter().map(|r| r.id.clone()).collect();
    let labels = Some(records.iter().map(|r| r.label.clone()).collect());
    EmbeddingSet::new(role, ids, labels, matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str, ext: &str) -> tempfile::TempPath {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.into_temp_path()
    }

    #[test]
    fn jsonl_roundtrip() {
        let path = write_temp(
            "{\"id\":\"a1\",\"label\":\"dog\",\"caption\":\"a dog barking loudly\"}\n",
            ".jsonl",
        );
        let records = read_manifest(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].id, "a1");
        assert_eq!(records[0].caption.as_deref(), Some("a dog barking loudly"));
    }

    #[test]
    fn csv_manifest() {
        let path = write_temp(
            "id,label,caption,split\na1,dog,barking,test\na2,cat,,\n",
            ".csv",
        );
        let records = read_manifest(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].split, Some(Split::Test));
        assert_eq!(records[1].caption, None);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let path = write_temp(
            "{\"id\":\"a1\",\"label\":\"dog\"}\n{\"id\":\"a1\",\"label\":\"cat\"}\n",
            ".jsonl",
        );
        match read_manifest(&path) {
            Err(CorpusError::DuplicateId { line: 2, id }) => assert_eq!(id, "a1"),
            other => panic!("expected duplicate id, got {other:?}"),
        }
        assert_eq!(read_manifest_allow_duplicates(&path).unwrap().len(), 2);
    }

    #[test]
    fn missing_label_reports_line() {
        let path = write_temp(
            "{\"id\":\"a1\",\"label\":\"dog\"}\n{\"id\":\"a2\"}\n",
            ".jsonl",
        );
        assert!(matches!(
            read_manifest(&path),
            Err(CorpusError::MissingField {
                line: 2,
                field: "label"
            })
        ));
    }

    #[test]
    fn count_mismatch_rejected() {
        let records = vec![ItemRecord {
            id: "a1".into(),
            label: "dog".into(),
            caption: None,
            split: None,
        }];
        let matrix = Matrix::zeros(2, 3);
        assert!(matches!(
            bind_embedding_set(matrix, &records, Role::AudioCrossModal),
            Err(CorpusError::CountMismatch {
                matrix_rows: 2,
                manifest_rows: 1
            })
        ));
    }

    #[test]
    fn non_finite_entry_located() {
        let records = vec![ItemRecord {
            id: "a1".into(),
            label: "dog".into(),
            caption: None,
            split: None,
        }];
        let matrix = Matrix::from_vec(1, 2, vec![0.0, f64::NAN]);
        assert!(matches!(
            bind_embedding_set(matrix, &records, Role::AudioCrossModal),
            Err(CorpusError::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn bind_preserves_manifest_order() {
        let records: Vec<ItemRecord> = (0..4)
            .map(|i| ItemRecord {
                id: format!("id{i}"),
                label: format!("l{}", i % 2),
                caption: None,
                split: None,
            })
            .collect();
        let matrix = Matrix::from_vec(4, 1, vec![0.0, 1.0, 2.0, 3.0]);
        let set = bind_embedding_set(matrix, &records, Role::AudioUnimodal).unwrap();
        assert_eq!(set.ids, vec!["id0", "id1", "id2", "id3"]);
        assert_eq!(set.matrix.get(2, 0), 2.0);
    }
}
