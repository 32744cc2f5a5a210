//! Pluggable relation detector with a bag-of-words default.
//!
//! The contract is sentence -> ranked relation types. The default is a
//! multinomial naive-Bayes classifier trained on session-0 slot-filling
//! queries, whose `entity [SEP] relation` form carries the label after the
//! separator. A stronger encoder-based detector can implement the same trait.

use crate::corpus::QueryExample;
use crate::tokenizer;
use std::collections::BTreeMap;

pub trait RelationDetector: Send + Sync {
    fn labels(&self) -> &[String];
    /// Ranked relation types for a sentence, best first, at most `k`.
    /// Returns `k` labels whenever the label set permits.
    fn top_k(&self, sentence: &str, k: usize) -> Vec<String>;
}

const FALLBACK_LABEL: &str = "related to";
const ALPHA: f64 = 1.0;

/// Bag-of-words linear classifier (naive Bayes in log space). Deterministic
/// given training data order; ties break toward the earlier-seen label.
#[derive(Debug, Clone)]
pub struct BowRelationDetector {
    labels: Vec<String>,
    /// Per-label word counts and totals, over the shared feature vocabulary.
    word_counts: Vec<BTreeMap<String, f64>>,
    totals: Vec<f64>,
    priors: Vec<f64>,
    vocab_size: usize,
}

fn feature_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Train the default detector from slot-filling examples whose query text is
/// `subject [SEP] relation`. Empty input yields a single-fallback detector.
pub fn train_default_detector(examples: &[QueryExample]) -> BowRelationDetector {
    let mut labels: Vec<String> = Vec::new();
    let mut by_label: Vec<Vec<String>> = Vec::new();
    for ex in examples {
        let Some((subject, relation)) = ex.query_text.split_once(tokenizer::SEP) else {
            continue;
        };
        let relation = relation.trim().to_string();
        if relation.is_empty() {
            continue;
        }
        let idx = match labels.iter().position(|l| *l == relation) {
            Some(i) => i,
            None => {
                labels.push(relation);
                by_label.push(Vec::new());
                labels.len() - 1
            }
        };
        // Features: the subject side plus the provenance titles.
        let mut words = feature_words(subject);
        for d in &ex.provenance {
            words.extend(feature_words(d.as_str()));
        }
        by_label[idx].extend(words);
    }

    if labels.is_empty() {
        return BowRelationDetector {
            labels: vec![FALLBACK_LABEL.to_string()],
            word_counts: vec![BTreeMap::new()],
            totals: vec![0.0],
            priors: vec![1.0],
            vocab_size: 1,
        };
    }

    let mut vocab: BTreeMap<&str, ()> = BTreeMap::new();
    for words in &by_label {
        for w in words {
            vocab.insert(w, ());
        }
    }
    let total_docs: f64 = by_label.iter().map(|w| w.len().max(1) as f64).sum();
    let mut word_counts = Vec::with_capacity(labels.len());
    let mut totals = Vec::with_capacity(labels.len());
    let mut priors = Vec::with_capacity(labels.len());
    for words in &by_label {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for w in words {
            *counts.entry(w.clone()).or_insert(0.0) += 1.0;
        }
        totals.push(words.len() as f64);
        priors.push(words.len().max(1) as f64 / total_docs);
        word_counts.push(counts);
    }
    BowRelationDetector {
        labels,
        word_counts,
        totals,
        priors,
        vocab_size: vocab.len().max(1),
    }
}

impl BowRelationDetector {
    fn score(&self, label_idx: usize, words: &[String]) -> f64 {
        let mut s = self.priors[label_idx].ln();
        let denom = self.totals[label_idx] + ALPHA * self.vocab_size as f64;
        for w in words {
            let c = self.word_counts[label_idx].get(w).copied().unwrap_or(0.0);
            s += ((c + ALPHA) / denom).ln();
        }
        s
    }

    /// Training accuracy over `(text, label)` pairs; used by tests.
    pub fn accuracy(&self, pairs: &[(String, String)]) -> f64 {
        if pairs.is_empty() {
            return 1.0;
        }
        let correct = pairs
            .iter()
            .filter(|(text, label)| self.top_k(text, 1).first() == Some(label))
            .count();
        correct as f64 / pairs.len() as f64
    }
}

impl RelationDetector for BowRelationDetector {
    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn top_k(&self, sentence: &str, k: usize) -> Vec<String> {
        let words = feature_words(sentence);
        let mut scored: Vec<(usize, f64)> = (0..self.labels.len())
            .map(|i| (i, self.score(i, &words)))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(k)
            .map(|(i, _)| self.labels[i].clone())
            .collect()
    }
}
