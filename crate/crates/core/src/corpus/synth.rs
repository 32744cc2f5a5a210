//! Seeded synthetic corpora and query sets.
//!
//! Stands in for a real encyclopedia snapshot at desk scale: documents get
//! multi-word titles, sentences that reuse the title words, and anchors whose
//! surface text is another document's title. Queries are rendered from
//! task-shaped templates over a provenance document, so their form matches
//! the pseudo-queries the generators produce from raw documents.

use super::{Anchor, Corpus, DatasetId, Docid, Document, QueryExample, TaskId};
use crate::error::{Error, Result};
use crate::rng::{self, stable_hash};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

const ENTITY_WORDS: &[&str] = &[
    "Amber", "Anvil", "Arbor", "Atlas", "Badger", "Basalt", "Beacon", "Birch", "Bison", "Borealis",
    "Bramble", "Cairn", "Caldera", "Canyon", "Cedar", "Cinder", "Cobalt", "Comet", "Condor",
    "Coral", "Crag", "Crescent", "Cypress", "Delta", "Drift", "Dune", "Ember", "Falcon", "Fern",
    "Fjord", "Flint", "Gale", "Garnet", "Glacier", "Granite", "Grove", "Harbor", "Hawthorn",
    "Heron", "Hollow", "Ibis", "Indigo", "Iris", "Jasper", "Juniper", "Kestrel", "Lagoon",
    "Larch", "Lark", "Lichen", "Linden", "Lotus", "Lynx", "Maple", "Marsh", "Meadow", "Mesa",
    "Mica", "Monsoon", "Moraine", "Moss", "Nimbus", "Oak", "Obsidian", "Onyx", "Opal", "Osprey",
    "Otter", "Pebble", "Pine", "Plume", "Prairie", "Quartz", "Quill", "Raven", "Reed", "Ridge",
    "Rowan", "Saffron", "Sage", "Sequoia", "Shale", "Sierra", "Slate", "Sorrel", "Sparrow",
    "Spruce", "Summit", "Sycamore", "Taiga", "Talon", "Tarn", "Thicket", "Thistle", "Tundra",
    "Umber", "Vale", "Verdant", "Vortex", "Walnut", "Willow", "Wren", "Yarrow", "Zephyr",
];

const FILLER_WORDS: &[&str] = &[
    "the", "a", "was", "is", "near", "region", "founded", "known", "historic", "river", "valley",
    "settlement", "records", "describe", "early", "trade", "route", "stands", "between", "local",
    "archive", "mentions", "its", "people", "built", "stone", "bridge", "market", "during",
    "season", "grew", "around", "old", "road", "travelers", "noted", "famous", "for", "quiet",
    "hills", "under", "northern", "sky", "museum", "holds", "maps", "written", "about", "village",
    "council", "kept", "detailed", "accounts", "harvest", "festival", "drew", "visitors", "from",
    "distant", "towns", "library", "preserves", "letters", "concerning", "boundary", "survey",
];

const RELATION_LABELS: &[&str] = &[
    "headquarters location",
    "founded by",
    "country of origin",
    "member of",
    "parent organization",
    "notable work",
];

/// Relation label deterministically associated with a title; keeps synthetic
/// slot-filling train and test queries consistent for the same document.
pub fn relation_for_title(title: &str) -> &'static str {
    let h = stable_hash(title.as_bytes()) as usize;
    RELATION_LABELS[h % RELATION_LABELS.len()]
}

#[derive(Debug, Clone)]
pub struct SynthCorpusConfig {
    pub num_docs: usize,
    pub paragraphs_per_doc: (usize, usize),
    pub sentences_per_paragraph: (usize, usize),
    pub words_per_sentence: (usize, usize),
    pub anchors_per_doc: (usize, usize),
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        SynthCorpusConfig {
            num_docs: 64,
            paragraphs_per_doc: (1, 2),
            sentences_per_paragraph: (2, 4),
            words_per_sentence: (5, 9),
            anchors_per_doc: (1, 3),
        }
    }
}

fn range_sample(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Generate a corpus of `cfg.num_docs` documents, deterministic given seed.
pub fn generate_corpus(cfg: &SynthCorpusConfig, seed: u64) -> Result<Corpus> {
    if cfg.num_docs == 0 {
        return Err(Error::Validation("num_docs must be >= 1".into()));
    }
    let mut rng = rng::rng_for(seed, "synth.corpus");

    // Unique two-word titles; suffix a counter word-pair when the bank runs dry.
    let mut titles: Vec<String> = Vec::with_capacity(cfg.num_docs);
    let mut used: BTreeSet<String> = BTreeSet::new();
    while titles.len() < cfg.num_docs {
        let a = ENTITY_WORDS[rng.gen_range(0..ENTITY_WORDS.len())];
        let b = ENTITY_WORDS[rng.gen_range(0..ENTITY_WORDS.len())];
        if a == b {
            continue;
        }
        let mut title = format!("{a} {b}");
        if used.contains(&title) {
            title = format!("{a} {b} {}", ENTITY_WORDS[used.len() % ENTITY_WORDS.len()]);
            if used.contains(&title) {
                continue;
            }
        }
        used.insert(title.clone());
        titles.push(title);
    }

    // Sentence skeletons: filler words seasoned with the title's own words.
    let mut docs: Vec<Document> = Vec::with_capacity(cfg.num_docs);
    for title in &titles {
        let title_words: Vec<&str> = title.split_whitespace().collect();
        let n_paragraphs = range_sample(&mut rng, cfg.paragraphs_per_doc).max(1);
        let mut paragraphs = Vec::with_capacity(n_paragraphs);
        for _ in 0..n_paragraphs {
            let n_sentences = range_sample(&mut rng, cfg.sentences_per_paragraph).max(1);
            let mut sentences = Vec::with_capacity(n_sentences);
            for _ in 0..n_sentences {
                let n_words = range_sample(&mut rng, cfg.words_per_sentence).max(3);
                let mut words: Vec<String> = Vec::with_capacity(n_words + 2);
                words.push(title_words[rng.gen_range(0..title_words.len())].to_string());
                for _ in 0..n_words {
                    words.push(FILLER_WORDS[rng.gen_range(0..FILLER_WORDS.len())].to_string());
                }
                let mut sentence = words.join(" ");
                sentence.push('.');
                sentences.push(sentence);
            }
            paragraphs.push(sentences);
        }
        docs.push(Document {
            docid: Docid::new(title.clone())?,
            paragraphs,
            anchors: Vec::new(),
        });
    }

    // Anchors: splice another document's title into a sentence, one anchor
    // per sentence so byte spans stay independent.
    if cfg.num_docs > 1 {
        for i in 0..docs.len() {
            let n_anchors = range_sample(&mut rng, cfg.anchors_per_doc);
            let mut free_slots: Vec<(usize, usize)> = docs[i].sentence_coords();
            free_slots.shuffle(&mut rng);
            for slot in free_slots.into_iter().take(n_anchors) {
                let mut target_idx = rng.gen_range(0..docs.len() - 1);
                if target_idx >= i {
                    target_idx += 1;
                }
                let target_title = titles[target_idx].clone();
                let (p, s) = slot;
                let sentence = docs[i].paragraphs[p][s].clone();
                let words: Vec<&str> = sentence.split(' ').collect();
                let insert_at = rng.gen_range(1..=words.len());
                let prefix = words[..insert_at].join(" ");
                let suffix = words[insert_at..].join(" ");
                let start = prefix.len() + 1;
                let mut rebuilt = prefix;
                rebuilt.push(' ');
                rebuilt.push_str(&target_title);
                if !suffix.is_empty() {
                    rebuilt.push(' ');
                    rebuilt.push_str(&suffix);
                }
                let end = start + target_title.len();
                debug_assert_eq!(&rebuilt[start..end], target_title);
                docs[i].paragraphs[p][s] = rebuilt;
                docs[i].anchors.push(Anchor {
                    surface_text: target_title.clone(),
                    paragraph_index: p,
                    sentence_index: s,
                    char_span: start..end,
                    target: Docid::new(target_title)?,
                });
            }
        }
    }

    Corpus::from_documents(docs)
}

#[derive(Debug, Clone)]
pub struct SynthQueryConfig {
    /// Training queries per dataset (datasets with a train split only).
    pub train_per_dataset: usize,
    /// Test queries per dataset per session.
    pub test_per_dataset: usize,
    pub datasets: Vec<DatasetId>,
    pub interrogatives: Vec<String>,
}

impl Default for SynthQueryConfig {
    fn default() -> Self {
        SynthQueryConfig {
            train_per_dataset: 4,
            test_per_dataset: 3,
            datasets: DatasetId::ALL.to_vec(),
            interrogatives: ["what", "who", "when", "where", "which", "how", "why"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

fn doc_words(doc: &Document) -> Vec<String> {
    let mut out = Vec::new();
    for par in &doc.paragraphs {
        for s in par {
            out.extend(s.trim_end_matches('.').split_whitespace().map(str::to_string));
        }
    }
    out
}

fn snippet(words: &[String], len: usize, rng: &mut ChaCha8Rng) -> String {
    if words.is_empty() {
        return String::new();
    }
    let len = len.min(words.len());
    let start = if words.len() == len {
        0
    } else {
        rng.gen_range(0..=words.len() - len)
    };
    words[start..start + len].join(" ")
}

fn render_query(
    task: TaskId,
    doc: &Document,
    interrogatives: &[String],
    rng: &mut ChaCha8Rng,
) -> String {
    let title = doc.docid.as_str();
    let words = doc_words(doc);
    let wh = &interrogatives[rng.gen_range(0..interrogatives.len())];
    match task {
        TaskId::FactChecking => format!("{title} {}", snippet(&words, 6, rng)),
        TaskId::EntityLinking => format!(
            "{} [START_ENT] {title} [END_ENT] {}",
            snippet(&words, 4, rng),
            snippet(&words, 4, rng)
        ),
        TaskId::SlotFilling => format!("{title} [SEP] {}", relation_for_title(title)),
        TaskId::OpenQa => format!("{wh} {title} {}", snippet(&words, 7, rng)),
        TaskId::Dialogue => {
            let context = snippet(&words, 10, rng);
            format!("{context} {wh} {title} {}", snippet(&words, 5, rng))
        }
    }
}

/// Synthesize session-0 training pairs and per-session test sets.
///
/// Every test query for session `i` takes its provenance from a document in
/// partition `i`, so the iterative filtering rule assigns it to exactly that
/// session.
#[allow(clippy::type_complexity)]
pub fn generate_examples(
    corpus: &Corpus,
    partitions: &[BTreeSet<Docid>],
    cfg: &SynthQueryConfig,
    seed: u64,
) -> Result<(Vec<QueryExample>, BTreeMap<(usize, DatasetId), Vec<QueryExample>>)> {
    if partitions.is_empty() {
        return Err(Error::Validation("no partitions".into()));
    }
    let mut rng = rng::rng_for(seed, "synth.queries");

    let pick_docs = |set: &BTreeSet<Docid>, count: usize, rng: &mut ChaCha8Rng| -> Vec<Docid> {
        let mut ids: Vec<Docid> = set.iter().cloned().collect();
        ids.shuffle(rng);
        if ids.is_empty() {
            return Vec::new();
        }
        (0..count).map(|k| ids[k % ids.len()].clone()).collect()
    };

    let mut train = Vec::new();
    for ds in &cfg.datasets {
        if !ds.has_train_split() {
            continue;
        }
        for (k, docid) in pick_docs(&partitions[0], cfg.train_per_dataset, &mut rng)
            .into_iter()
            .enumerate()
        {
            let doc = corpus
                .get(&docid)
                .ok_or_else(|| Error::Validation(format!("partition docid {docid:?} not in corpus")))?;
            train.push(QueryExample {
                query_id: format!("r0-{}-{k:04}", ds.name()),
                dataset: *ds,
                task: ds.task(),
                query_text: render_query(ds.task(), doc, &cfg.interrogatives, &mut rng),
                provenance: BTreeSet::from([docid]),
            });
        }
    }

    let mut tests: BTreeMap<(usize, DatasetId), Vec<QueryExample>> = BTreeMap::new();
    for (i, part) in partitions.iter().enumerate() {
        for ds in &cfg.datasets {
            let mut examples = Vec::new();
            for (k, docid) in pick_docs(part, cfg.test_per_dataset, &mut rng)
                .into_iter()
                .enumerate()
            {
                let doc = corpus.get(&docid).ok_or_else(|| {
                    Error::Validation(format!("partition docid {docid:?} not in corpus"))
                })?;
                examples.push(QueryExample {
                    query_id: format!("q{i}-{}-{k:04}", ds.name()),
                    dataset: *ds,
                    task: ds.task(),
                    query_text: render_query(ds.task(), doc, &cfg.interrogatives, &mut rng),
                    provenance: BTreeSet::from([docid]),
                });
            }
            if !examples.is_empty() {
                tests.insert((i, *ds), examples);
            }
        }
    }
    Ok((train, tests))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split::{assigned_session, cumulative_pools, split_sessions};

    #[test]
    fn corpus_is_valid_and_deterministic() {
        let cfg = SynthCorpusConfig::default();
        let a = generate_corpus(&cfg, 9).unwrap();
        let b = generate_corpus(&cfg, 9).unwrap();
        assert_eq!(a.docs(), b.docs());
        assert_eq!(a.len(), 64);
        assert!(a.warnings().is_empty(), "synthetic anchors must resolve");
        assert!(a.docs().iter().any(|d| !d.anchors.is_empty()));
    }

    #[test]
    fn generated_tests_land_in_their_session() {
        let corpus = generate_corpus(
            &SynthCorpusConfig {
                num_docs: 40,
                ..Default::default()
            },
            4,
        )
        .unwrap();
        let partitions = split_sessions(&corpus, 3, 0.6, 4).unwrap();
        let (r0, tests) = generate_examples(&corpus, &partitions, &SynthQueryConfig::default(), 4).unwrap();
        let pools = cumulative_pools(&partitions);
        for ex in &r0 {
            assert_eq!(assigned_session(ex, &pools), Some(0), "{}", ex.query_id);
        }
        for ((i, _), examples) in &tests {
            for ex in examples {
                assert_eq!(assigned_session(ex, &pools), Some(*i), "{}", ex.query_id);
            }
        }
        // Datasets without a train split stay out of R_0.
        assert!(r0.iter().all(|e| e.dataset.has_train_split()));
    }
}
