//! Caption leakage detection and dataset filtering.
//!
//! A caption leaks when any of its tokens matches a word from the evaluation
//! class vocabulary. Removal happens at the audio-id level: an audio file
//! paired with several captions is dropped entirely if any one of them leaks.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::ItemRecord;

#[derive(Debug, Error)]
pub enum LeakageError {
    #[error("empty class label list")]
    EmptyLabelList,
    #[error("records missing captions: {}", ids.join(", "))]
    MissingCaptions { ids: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterOptions {
    pub lowercase: bool,
    pub strip_plural_s: bool,
    pub extra_stopwords: BTreeSet<String>,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_plural_s: false,
            extra_stopwords: BTreeSet::new(),
        }
    }
}

impl FilterOptions {
    fn normalize(&self, token: &str) -> String {
        let mut t = if self.lowercase {
            token.to_lowercase()
        } else {
            token.to_string()
        };
        if self.strip_plural_s && t.len() > 1 && t.ends_with('s') {
            t.pop();
        }
        t
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterReport {
    pub kept: Vec<ItemRecord>,
    pub removed: Vec<RemovedRecord>,
    pub class_word_vocabulary: BTreeSet<String>,
    pub removal_rate: f64,
    /// How often each vocabulary word triggered a match, over all records.
    pub word_match_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RemovedRecord {
    pub record: ItemRecord,
    pub matched_words: BTreeSet<String>,
}

/// Splits class labels into their constituent words.
///
/// Labels split on whitespace, underscores, and hyphens; tokens are
/// normalized per options and stopwords dropped.
pub fn class_word_set(
    class_labels: &[String],
    options: &FilterOptions,
) -> Result<BTreeSet<String>, LeakageError> {
    if class_labels.is_empty() {
        return Err(LeakageError::EmptyLabelList);
    }
    let mut words = BTreeSet::new();
    for label in class_labels {
        for token in label.split(|c: char| c.is_whitespace() || c == '_' || c == '-') {
            if token.is_empty() {
                continue;
            }
            let token = options.normalize(token);
            if !token.is_empty() && !options.extra_stopwords.contains(&token) {
                words.insert(token);
            }
        }
    }
    Ok(words)
}

/// Tokenizes a caption by splitting on any non-alphanumeric character and
/// reports whether any token hits the class word set.
pub fn caption_is_leaky(
    caption: &str,
    word_set: &BTreeSet<String>,
    options: &FilterOptions,
) -> (bool, BTreeSet<String>) {
    let mut matched = BTreeSet::new();
    for token in caption.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        let token = options.normalize(token);
        if word_set.contains(&token) {
            matched.insert(token);
        }
    }
    (!matched.is_empty(), matched)
}

/// Removes every record whose caption leaks class words, plus every record
/// sharing an audio id with a leaky one.
pub fn filter_dataset(
    records: &[ItemRecord],
    class_labels: &[String],
    options: &FilterOptions,
) -> Result<FilterReport, LeakageError> {
    let missing: Vec<String> = records
        .iter()
        .filter(|r| r.caption.is_none())
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(LeakageError::MissingCaptions { ids: missing });
    }
    let vocabulary = class_word_set(class_labels, options)?;

    // First pass: per-record matches and the set of contaminated audio ids.
    let mut per_record: Vec<BTreeSet<String>> = Vec::with_capacity(records.len());
    let mut leaky_ids: HashSet<&str> = HashSet::new();
    for record in records {
        let (leaky, matched) =
            caption_is_leaky(record.caption.as_deref().unwrap(), &vocabulary, options);
        if leaky {
            leaky_ids.insert(record.id.as_str());
        }
        per_record.push(matched);
    }

    // Second pass: removal by audio id, attributing to each removed record the
    // union of matches across all records sharing its id.
    let mut id_matches: HashMap<&str, BTreeSet<String>> = HashMap::new();
    for (record, matched) in records.iter().zip(&per_record) {
        if leaky_ids.contains(record.id.as_str()) {
            id_matches
                .entry(record.id.as_str())
                .or_default()
                .extend(matched.iter().cloned());
        }
    }

    let mut kept = Vec::new();
    let mut removed = Vec::new();
    let mut word_match_counts: BTreeMap<String, usize> = BTreeMap::new();
    for record in records {
        if leaky_ids.contains(record.id.as_str()) {
            let matched_words = id_matches[record.id.as_str()].clone();
            for w in &matched_words {
                *word_match_counts.entry(w.clone()).or_default() += 1;
            }
            removed.push(RemovedRecord {
                record: record.clone(),
                matched_words,
            });
        } else {
            kept.push(record.clone());
        }
    }

    let removal_rate = if records.is_empty() {
        0.0
    } else {
        removed.len() as f64 / records.len() as f64
    };
    Ok(FilterReport {
        kept,
        removed,
        class_word_vocabulary: vocabulary,
        removal_rate,
        word_match_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, caption: &str) -> ItemRecord {
        ItemRecord {
            id: id.into(),
            label: "unused".into(),
            caption: Some(caption.into()),
            split: None,
        }
    }

    fn labels(strs: &[&str]) -> Vec<String> {
        strs.iter().map(|s| s.to_string()).collect()
    }

    fn words(strs: &[&str]) -> BTreeSet<String> {
        strs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn multi_word_labels_split() {
        let set = class_word_set(
            &labels(&["door wood knock", "clock alarm"]),
            &FilterOptions::default(),
        )
        .unwrap();
        assert_eq!(set, words(&["door", "wood", "knock", "clock", "alarm"]));
    }

    #[test]
    fn plural_stripping_option() {
        let options = FilterOptions {
            strip_plural_s: true,
            ..FilterOptions::default()
        };
        assert_eq!(
            class_word_set(&labels(&["dogs"]), &options).unwrap(),
            words(&["dog"])
        );
        assert_eq!(
            class_word_set(&labels(&["dog"]), &FilterOptions::default()).unwrap(),
            words(&["dog"])
        );
    }

    #[test]
    fn empty_label_list_rejected() {
        assert!(matches!(
            class_word_set(&[], &FilterOptions::default()),
            Err(LeakageError::EmptyLabelList)
        ));
    }

    #[test]
    fn leaky_caption_detected_with_matches() {
        let set = words(&["dog", "rain"]);
        let (leaky, matched) =
            caption_is_leaky("a dog barking in the rain", &set, &FilterOptions::default());
        assert!(leaky);
        assert_eq!(matched, words(&["dog", "rain"]));
    }

    #[test]
    fn clean_caption_passes() {
        let set = words(&["dog"]);
        let (leaky, matched) =
            caption_is_leaky("birds chirping at dawn", &set, &FilterOptions::default());
        assert!(!leaky);
        assert!(matched.is_empty());
        assert!(!caption_is_leaky("", &set, &FilterOptions::default()).0);
    }

    #[test]
    fn case_fold_and_punctuation_split() {
        let set = words(&["dog", "door"]);
        let (leaky, matched) =
            caption_is_leaky("the DOG-house door", &set, &FilterOptions::default());
        assert!(leaky);
        assert_eq!(matched, words(&["dog", "door"]));
    }

    #[test]
    fn basic_filtering() {
        let records = vec![
            record("a", "a dog barking"),
            record("b", "rain on a roof"),
            record("c", "people talking"),
        ];
        let report =
            filter_dataset(&records, &labels(&["dog"]), &FilterOptions::default()).unwrap();
        assert_eq!(report.kept.len(), 2);
        assert_eq!(report.removed.len(), 1);
        assert_eq!(report.removed[0].record.id, "a");
        assert!((report.removal_rate - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn audio_id_level_removal() {
        let records = vec![
            record("a", "a dog barking"),
            record("a", "an animal making noise"),
            record("b", "waves crashing"),
        ];
        let report =
            filter_dataset(&records, &labels(&["dog"]), &FilterOptions::default()).unwrap();
        assert_eq!(report.kept.len(), 1);
        assert_eq!(report.removed.len(), 2);
        for removed in &report.removed {
            assert_eq!(removed.matched_words, words(&["dog"]));
        }
    }

    #[test]
    fn no_matches_keeps_everything() {
        let records = vec![record("a", "wind blowing"), record("b", "rain falling")];
        let report =
            filter_dataset(&records, &labels(&["dog"]), &FilterOptions::default()).unwrap();
        assert_eq!(report.removal_rate, 0.0);
        assert_eq!(report.kept.len(), 2);
    }

    #[test]
    fn filtering_is_idempotent() {
        let records = vec![
            record("a", "a dog barking"),
            record("b", "rain on a roof"),
            record("c", "wood creaking"),
        ];
        let class_labels = labels(&["dog", "door wood knock"]);
        let options = FilterOptions::default();
        let first = filter_dataset(&records, &class_labels, &options).unwrap();
        let second = filter_dataset(&first.kept, &class_labels, &options).unwrap();
        assert_eq!(second.removed.len(), 0);
        assert_eq!(second.kept.len(), first.kept.len());
    }

    #[test]
    fn monotone_in_class_word_set() {
        let records = vec![
            record("a", "a dog barking"),
            record("b", "rain on a roof"),
            record("c", "wind in trees"),
        ];
        let options = FilterOptions::default();
        let small = filter_dataset(&records, &labels(&["dog"]), &options).unwrap();
        let large = filter_dataset(&records, &labels(&["dog", "rain"]), &options).unwrap();
        assert!(large.kept.len() <= small.kept.len());
    }

    #[test]
    fn matched_words_subset_of_vocabulary() {
        let records = vec![
            record("a", "dog and cat"),
            record("b", "a knock at the door"),
        ];
        let report = filter_dataset(
            &records,
            &labels(&["dog", "door wood knock"]),
            &FilterOptions::default(),
        )
        .unwrap();
        for removed in &report.removed {
            assert!(!removed.matched_words.is_empty());
            assert!(removed
                .matched_words
                .is_subset(&report.class_word_vocabulary));
        }
    }

    #[test]
    fn missing_caption_reported() {
        let records = vec![ItemRecord {
            id: "x".into(),
            label: "dog".into(),
            caption: None,
            split: None,
        }];
        match filter_dataset(&records, &labels(&["dog"]), &FilterOptions::default()) {
            Err(LeakageError::MissingCaptions { ids }) => assert_eq!(ids, vec!["x"]),
            other => panic!("expected missing captions, got {other:?}"),
        }
    }
}
