//! Pseudo-query/docid pair generators.
//!
//! Three generic generators (inner-sentence, lead-paragraph, hyperlink
//! context) feed backbone pre-training; five task-shaped generators feed the
//! per-task adapters. All are pure functions of (document, config, rng), so
//! documents can be processed in parallel under per-document seeds.

mod detector;

pub use detector::{train_default_detector, BowRelationDetector, RelationDetector};

use crate::corpus::{Docid, Document, TaskId};
use crate::error::{Error, Result};
use crate::tokenizer;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generic backbone pre-training flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneTask {
    /// Inner sentence selection: sentence-level pseudo-queries.
    Iss,
    /// Lead paragraph selection: paragraph-level pseudo-queries.
    Lps,
    /// Hyperlink identifier prediction: anchor context -> destination docid.
    Hip,
}

/// What produced a pair: a generic backbone task or a downstream task rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairSource {
    Backbone(BackboneTask),
    Task(TaskId),
}

/// One constructed (pseudo-query, docid sequence) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoPair {
    #[serde(rename = "task")]
    pub source_task: PairSource,
    pub query: String,
    pub targets: Vec<Docid>,
    #[serde(rename = "source")]
    pub source_docid: Docid,
}

impl PseudoPair {
    pub fn validate(&self) -> Result<()> {
        if self.query.is_empty() {
            return Err(Error::Validation("pseudo pair with empty query".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::Validation("pseudo pair with no targets".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Sentences / paragraphs / anchors sampled per document.
    pub l: usize,
    /// Token span length for n-gram sampling.
    pub n: usize,
    /// Relation types kept per sentence (slot filling).
    pub k_relations: usize,
    /// Probability of appending o extra anchor docids, o in 0..=4.
    pub o_distribution: [f64; 5],
    pub interrogatives: Vec<String>,
    /// Sweeps of the per-task rule per document.
    pub pairs_per_doc: usize,
}

pub const DEFAULT_O_DISTRIBUTION: [f64; 5] = [0.70, 0.20, 0.05, 0.03, 0.02];

fn default_interrogatives() -> Vec<String> {
    ["what", "who", "when", "where", "which", "how", "why"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            l: 3,
            n: 10,
            k_relations: 1,
            o_distribution: DEFAULT_O_DISTRIBUTION,
            interrogatives: default_interrogatives(),
            pairs_per_doc: 1,
        }
    }
}

impl GeneratorConfig {
    /// Published per-task hyperparameters; entity linking uses every anchor.
    pub fn for_task(task: TaskId) -> Self {
        let base = GeneratorConfig::default();
        match task {
            TaskId::FactChecking => GeneratorConfig { l: 3, n: 10, ..base },
            TaskId::EntityLinking => GeneratorConfig {
                l: usize::MAX,
                ..base
            },
            TaskId::SlotFilling => GeneratorConfig {
                l: 3,
                k_relations: 1,
                ..base
            },
            TaskId::OpenQa => GeneratorConfig { l: 3, n: 10, ..base },
            TaskId::Dialogue => GeneratorConfig { l: 1, n: 10, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 1 || self.n < 1 || self.k_relations < 1 || self.pairs_per_doc < 1 {
            return Err(Error::Config(
                "generator l, n, k_relations and pairs_per_doc must be >= 1".into(),
            ));
        }
        let sum: f64 = self.o_distribution.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.o_distribution.iter().any(|&p| p < 0.0) {
            return Err(Error::Config(format!(
                "o_distribution must be a probability table, sums to {sum}"
            )));
        }
        if self.interrogatives.is_empty() {
            return Err(Error::Config("interrogative list is empty".into()));
        }
        Ok(())
    }
}

/// Draw o from the categorical table over 0..=4.
pub fn sample_o(rng: &mut ChaCha8Rng, distribution: &[f64; 5]) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (o, &p) in distribution.iter().enumerate() {
        acc += p;
        if r < acc {
            return o;
        }
    }
    distribution.len() - 1
}

/// Output docid sequence for a pair: the source docid followed by the
/// destinations of o sampled anchors (o clamped to the available count),
/// in sampled order.
pub fn sample_output_docids(
    doc: &Document,
    rng: &mut ChaCha8Rng,
    distribution: &[f64; 5],
) -> Vec<Docid> {
    let o = sample_o(rng, distribution).min(doc.anchors.len());
    let mut targets = Vec::with_capacity(o + 1);
    targets.push(doc.docid.clone());
    if o > 0 {
        let picked = rand::seq::index::sample(rng, doc.anchors.len(), o);
        for idx in picked.iter() {
            targets.push(doc.anchors[idx].target.clone());
        }
    }
    targets
}

/// Random n-gram span of up to `n` whitespace tokens from `text`; the whole
/// text when it is shorter. Spans never cross the given text's bounds.
fn ngram_span(text: &str, n: usize, rng: &mut ChaCha8Rng) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return String::new();
    }
    if words.len() <= n {
        return words.join(" ");
    }
    let start = rng.gen_range(0..=words.len() - n);
    words[start..start + n].join(" ")
}

fn sampled_sentences<'d>(
    doc: &'d Document,
    l: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize, &'d str)> {
    let coords = doc.sentence_coords();
    let take = l.min(coords.len());
    let picked = rand::seq::index::sample(rng, coords.len(), take);
    picked
        .iter()
        .map(|i| {
            let (p, s) = coords[i];
            (p, s, doc.sentence(p, s).unwrap())
        })
        .collect()
}

fn paragraph_text(doc: &Document, p: usize) -> String {
    doc.paragraphs[p].join(" ")
}

/// Anchor sentence with its immediate neighbors inside the same paragraph.
fn anchor_context(doc: &Document, anchor_idx: usize) -> String {
    let a = &doc.anchors[anchor_idx];
    let par = &doc.paragraphs[a.paragraph_index];
    let lo = a.sentence_index.saturating_sub(1);
    let hi = (a.sentence_index + 1).min(par.len() - 1);
    par[lo..=hi].join(" ")
}

/// Generic backbone pairs for one document.
pub fn gen_backbone_pairs(
    doc: &Document,
    kind: BackboneTask,
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<PseudoPair> {
    let mut out = Vec::new();
    for _ in 0..cfg.pairs_per_doc {
        match kind {
            BackboneTask::Iss => {
                for (_, _, sentence) in sampled_sentences(doc, cfg.l, rng) {
                    out.push(PseudoPair {
                        source_task: PairSource::Backbone(kind),
                        query: sentence.to_string(),
                        targets: sample_output_docids(doc, rng, &cfg.o_distribution),
                        source_docid: doc.docid.clone(),
                    });
                }
            }
            BackboneTask::Lps => {
                for p in 0..cfg.l.min(doc.paragraphs.len()) {
                    out.push(PseudoPair {
                        source_task: PairSource::Backbone(kind),
                        query: paragraph_text(doc, p),
                        targets: sample_output_docids(doc, rng, &cfg.o_distribution),
                        source_docid: doc.docid.clone(),
                    });
                }
            }
            BackboneTask::Hip => {
                if doc.anchors.is_empty() {
                    continue;
                }
                let take = cfg.l.min(doc.anchors.len());
                let picked = rand::seq::index::sample(rng, doc.anchors.len(), take);
                for idx in picked.iter() {
                    out.push(PseudoPair {
                        source_task: PairSource::Backbone(kind),
                        query: anchor_context(doc, idx),
                        targets: vec![doc.anchors[idx].target.clone()],
                        source_docid: doc.docid.clone(),
                    });
                }
            }
        }
    }
    out
}

/// Fact checking: title + random n-gram of a sampled sentence; the target
/// sequence may carry extra anchor destinations.
pub fn gen_fact_checking(
    doc: &Document,
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<PseudoPair> {
    let mut out = Vec::new();
    for _ in 0..cfg.pairs_per_doc {
        for (_, _, sentence) in sampled_sentences(doc, cfg.l, rng) {
            let span = ngram_span(sentence, cfg.n, rng);
            out.push(PseudoPair {
                source_task: PairSource::Task(TaskId::FactChecking),
                query: format!("{} {span}", doc.docid.as_str()),
                targets: sample_output_docids(doc, rng, &cfg.o_distribution),
                source_docid: doc.docid.clone(),
            });
        }
    }
    out
}

/// Entity linking: the anchor's sentence with entity-boundary markers around
/// the anchor span; the sole target is the anchor's destination page.
pub fn gen_entity_linking(
    doc: &Document,
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<PseudoPair> {
    let mut out = Vec::new();
    if doc.anchors.is_empty() {
        return out;
    }
    for _ in 0..cfg.pairs_per_doc {
        let indices: Vec<usize> = if cfg.l >= doc.anchors.len() {
            (0..doc.anchors.len()).collect()
        } else {
            rand::seq::index::sample(rng, doc.anchors.len(), cfg.l).into_vec()
        };
        for idx in indices {
            let a = &doc.anchors[idx];
            let sentence = doc
                .sentence(a.paragraph_index, a.sentence_index)
                .expect("anchor sentence");
            let query = format!(
                "{}{} {} {}{}",
                &sentence[..a.char_span.start],
                tokenizer::START_ENT,
                a.surface_text,
                tokenizer::END_ENT,
                &sentence[a.char_span.end..]
            );
            out.push(PseudoPair {
                source_task: PairSource::Task(TaskId::EntityLinking),
                query,
                targets: vec![a.target.clone()],
                source_docid: doc.docid.clone(),
            });
        }
    }
    out
}

/// Slot filling: title [SEP] relation for the top-k detected relation types
/// of each sampled sentence; single supporting document.
pub fn gen_slot_filling(
    doc: &Document,
    cfg: &GeneratorConfig,
    detector: &dyn RelationDetector,
    rng: &mut ChaCha8Rng,
) -> Vec<PseudoPair> {
    let mut out = Vec::new();
    for _ in 0..cfg.pairs_per_doc {
        for (_, _, sentence) in sampled_sentences(doc, cfg.l, rng) {
            let labels = detector.top_k(sentence, cfg.k_relations);
            if labels.is_empty() {
                log::warn!(
                    "relation detector produced no labels for a sentence of {:?}; skipped",
                    doc.docid.as_str()
                );
                continue;
            }
            for label in labels {
                out.push(PseudoPair {
                    source_task: PairSource::Task(TaskId::SlotFilling),
                    query: format!("{} {} {label}", doc.docid.as_str(), tokenizer::SEP),
                    targets: vec![doc.docid.clone()],
                    source_docid: doc.docid.clone(),
                });
            }
        }
    }
    out
}

/// Open-domain QA: interrogative + title + random n-gram span.
pub fn gen_open_qa(doc: &Document, cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<PseudoPair> {
    let mut out = Vec::new();
    for _ in 0..cfg.pairs_per_doc {
        for (_, _, sentence) in sampled_sentences(doc, cfg.l, rng) {
            let span = ngram_span(sentence, cfg.n, rng);
            let wh = cfg.interrogatives.choose(rng).expect("non-empty interrogatives");
            out.push(PseudoPair {
                source_task: PairSource::Task(TaskId::OpenQa),
                query: format!("{wh} {} {span}", doc.docid.as_str()),
                targets: sample_output_docids(doc, rng, &cfg.o_distribution),
                source_docid: doc.docid.clone(),
            });
        }
    }
    out
}

/// Dialogue: a leading paragraph as conversation context, followed by a
/// constructed question about it.
pub fn gen_dialogue(doc: &Document, cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<PseudoPair> {
    let mut out = Vec::new();
    for _ in 0..cfg.pairs_per_doc {
        for p in 0..cfg.l.min(doc.paragraphs.len()) {
            let context = paragraph_text(doc, p);
            let span = ngram_span(&context, cfg.n, rng);
            let wh = cfg.interrogatives.choose(rng).expect("non-empty interrogatives");
            out.push(PseudoPair {
                source_task: PairSource::Task(TaskId::Dialogue),
                query: format!("{context} {wh} {} {span}", doc.docid.as_str()),
                targets: sample_output_docids(doc, rng, &cfg.o_distribution),
                source_docid: doc.docid.clone(),
            });
        }
    }
    out
}

/// Dispatch to the task-specific rule.
pub fn gen_task_pairs(
    doc: &Document,
    task: TaskId,
    cfg: &GeneratorConfig,
    detector: &dyn RelationDetector,
    rng: &mut ChaCha8Rng,
) -> Vec<PseudoPair> {
    match task {
        TaskId::FactChecking => gen_fact_checking(doc, cfg, rng),
        TaskId::EntityLinking => gen_entity_linking(doc, cfg, rng),
        TaskId::SlotFilling => gen_slot_filling(doc, cfg, detector, rng),
        TaskId::OpenQa => gen_open_qa(doc, cfg, rng),
        TaskId::Dialogue => gen_dialogue(doc, cfg, rng),
    }
}
