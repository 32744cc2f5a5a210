//! Document/corpus data model and the session benchmark built on top of it.
//!
//! A corpus is a set of documents identified by their title (the docid a
//! generative retriever emits). Documents carry paragraphs of sentences and
//! hyperlink anchors pointing at other titles. Benchmarks partition a corpus
//! into a base set plus incremental sessions and attach query sets whose
//! provenance is confined to the documents visible at each session.

mod split;
mod synth;

pub use split::{filter_examples, split_sessions, SessionPlan};
pub use synth::{generate_corpus, generate_examples, SynthCorpusConfig, SynthQueryConfig};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

/// Document identifier: the title string, used verbatim.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Docid(String);

impl Docid {
    pub fn new(title: impl Into<String>) -> Result<Self> {
        let title = title.into();
        if title.is_empty() {
            return Err(Error::Validation("docid must be non-empty".into()));
        }
        if title.trim() != title {
            return Err(Error::Validation(format!(
                "docid {title:?} has leading/trailing whitespace"
            )));
        }
        Ok(Docid(title))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Docid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The five downstream task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    FactChecking,
    EntityLinking,
    SlotFilling,
    OpenQa,
    Dialogue,
}

impl TaskId {
    pub const ALL: [TaskId; 5] = [
        TaskId::FactChecking,
        TaskId::EntityLinking,
        TaskId::SlotFilling,
        TaskId::OpenQa,
        TaskId::Dialogue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::FactChecking => "fact_checking",
            TaskId::EntityLinking => "entity_linking",
            TaskId::SlotFilling => "slot_filling",
            TaskId::OpenQa => "open_qa",
            TaskId::Dialogue => "dialogue",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = TaskId::ALL.iter().map(|t| t.name()).collect();
                Error::Validation(format!(
                    "unknown task {s:?}; valid tasks: {}",
                    names.join(", ")
                ))
            })
    }
}

/// The eleven benchmark datasets (or their synthetic stand-ins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    #[serde(rename = "FEV")]
    Fev,
    #[serde(rename = "AY2")]
    Ay2,
    #[serde(rename = "WnWi")]
    WnWi,
    #[serde(rename = "WnCw")]
    WnCw,
    #[serde(rename = "T-REx")]
    TRex,
    #[serde(rename = "zsRE")]
    ZsRe,
    #[serde(rename = "NQ")]
    Nq,
    #[serde(rename = "HoPo")]
    HoPo,
    #[serde(rename = "TQA")]
    Tqa,
    #[serde(rename = "ELI5")]
    Eli5,
    #[serde(rename = "WoW")]
    Wow,
}

impl DatasetId {
    pub const ALL: [DatasetId; 11] = [
        DatasetId::Fev,
        DatasetId::Ay2,
        DatasetId::WnWi,
        DatasetId::WnCw,
        DatasetId::TRex,
        DatasetId::ZsRe,
        DatasetId::Nq,
        DatasetId::HoPo,
        DatasetId::Tqa,
        DatasetId::Eli5,
        DatasetId::Wow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetId::Fev => "FEV",
            DatasetId::Ay2 => "AY2",
            DatasetId::WnWi => "WnWi",
            DatasetId::WnCw => "WnCw",
            DatasetId::TRex => "T-REx",
            DatasetId::ZsRe => "zsRE",
            DatasetId::Nq => "NQ",
            DatasetId::HoPo => "HoPo",
            DatasetId::Tqa => "TQA",
            DatasetId::Eli5 => "ELI5",
            DatasetId::Wow => "WoW",
        }
    }

    /// Each dataset belongs to exactly one task.
    pub fn task(self) -> TaskId {
        match self {
            DatasetId::Fev => TaskId::FactChecking,
            DatasetId::Ay2 | DatasetId::WnWi | DatasetId::WnCw => TaskId::EntityLinking,
            DatasetId::TRex | DatasetId::ZsRe => TaskId::SlotFilling,
            DatasetId::Nq | DatasetId::HoPo | DatasetId::Tqa | DatasetId::Eli5 => TaskId::OpenQa,
            DatasetId::Wow => TaskId::Dialogue,
        }
    }

    /// Datasets with a usable training split; WnWi, WnCw and ELI5 ship
    /// test-only and are absent from fine-tuning.
    pub fn has_train_split(self) -> bool {
        !matches!(self, DatasetId::WnWi | DatasetId::WnCw | DatasetId::Eli5)
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperlink anchor inside a document sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anchor {
    pub surface_text: String,
    pub paragraph_index: usize,
    pub sentence_index: usize,
    /// Half-open UTF-8 byte range within the sentence.
    pub char_span: Range<usize>,
    pub target: Docid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub docid: Docid,
    /// Ordered paragraphs, each an ordered list of sentences.
    pub paragraphs: Vec<Vec<String>>,
    pub anchors: Vec<Anchor>,
}

impl Document {
    pub fn sentence(&self, p: usize, s: usize) -> Option<&str> {
        self.paragraphs.get(p).and_then(|par| par.get(s)).map(String::as_str)
    }

    /// All (paragraph, sentence) coordinates in document order.
    pub fn sentence_coords(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (p, par) in self.paragraphs.iter().enumerate() {
            for s in 0..par.len() {
                out.push((p, s));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.paragraphs.is_empty() || self.paragraphs.iter().all(|p| p.is_empty()) {
            return Err(Error::Validation(format!(
                "document {:?} has no sentences",
                self.docid.as_str()
            )));
        }
        for (i, a) in self.anchors.iter().enumerate() {
            let sentence = self.sentence(a.paragraph_index, a.sentence_index).ok_or_else(|| {
                Error::Validation(format!(
                    "document {:?} anchor {i} references sentence ({}, {}) out of range",
                    self.docid.as_str(),
                    a.paragraph_index,
                    a.sentence_index
                ))
            })?;
            let span = sentence.get(a.char_span.clone()).ok_or_else(|| {
                Error::Validation(format!(
                    "document {:?} anchor {i} span {:?} not within sentence bounds",
                    self.docid.as_str(),
                    a.char_span
                ))
            })?;
            if span != a.surface_text {
                return Err(Error::Validation(format!(
                    "document {:?} anchor {i} surface {:?} != sentence substring {:?}",
                    self.docid.as_str(),
                    a.surface_text,
                    span
                )));
            }
        }
        Ok(())
    }
}

/// Anchor whose target title does not resolve in the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingAnchor {
    pub docid: Docid,
    pub anchor_index: usize,
    pub target: Docid,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<Document>,
    by_title: HashMap<String, usize>,
    warnings: Vec<DanglingAnchor>,
}

impl Corpus {
    pub fn from_documents(docs: Vec<Document>) -> Result<Self> {
        let mut by_title = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            doc.validate()?;
            if by_title.insert(doc.docid.as_str().to_string(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate docid {:?}",
                    doc.docid.as_str()
                )));
            }
        }
        let mut warnings = Vec::new();
        for doc in &docs {
            for (i, a) in doc.anchors.iter().enumerate() {
                if !by_title.contains_key(a.target.as_str()) {
                    warnings.push(DanglingAnchor {
                        docid: doc.docid.clone(),
                        anchor_index: i,
                        target: a.target.clone(),
                    });
                }
            }
        }
        Ok(Corpus {
            docs,
            by_title,
            warnings,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn contains(&self, docid: &Docid) -> bool {
        self.by_title.contains_key(docid.as_str())
    }

    pub fn get(&self, docid: &Docid) -> Option<&Document> {
        self.by_title.get(docid.as_str()).map(|&i| &self.docs[i])
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn docids(&self) -> Vec<Docid> {
        self.docs.iter().map(|d| d.docid.clone()).collect()
    }

    pub fn docid_set(&self) -> BTreeSet<Docid> {
        self.docs.iter().map(|d| d.docid.clone()).collect()
    }

    /// Dangling-anchor warnings recorded at construction; anchors are kept.
    pub fn warnings(&self) -> &[DanglingAnchor] {
        &self.warnings
    }

    /// Load a corpus from UTF-8 JSON Lines, one document per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut docs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DocRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
            docs.push(rec.into_document().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: e.to_string(),
            })?);
        }
        Corpus::from_documents(docs)
    }

    /// Save as JSON Lines with the same schema `load` accepts.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for doc in &self.docs {
            let rec = DocRecord::from_document(doc);
            serde_json::to_writer(&mut out, &rec)
                .map_err(|e| Error::Validation(format!("serialize {:?}: {e}", doc.docid)))?;
            out.push(b'\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct DocRecord {
    title: String,
    paragraphs: Vec<Vec<String>>,
    anchors: Vec<AnchorRecord>,
}

#[derive(Serialize, Deserialize)]
struct AnchorRecord {
    p: usize,
    s: usize,
    start: usize,
    end: usize,
    target: String,
}

impl DocRecord {
    fn into_document(self) -> Result<Document> {
        let docid = Docid::new(self.title)?;
        let mut doc = Document {
            docid,
            paragraphs: self.paragraphs,
            anchors: Vec::with_capacity(self.anchors.len()),
        };
        for a in self.anchors {
            if a.end < a.start {
                return Err(Error::Validation(format!(
                    "anchor span {}..{} is inverted",
                    a.start, a.end
                )));
            }
            let sentence = doc.sentence(a.p, a.s).ok_or_else(|| {
                Error::Validation(format!("anchor sentence ({}, {}) out of range", a.p, a.s))
            })?;
            let surface = sentence
                .get(a.start..a.end)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "anchor span {}..{} not within sentence bounds",
                        a.start, a.end
                    ))
                })?
                .to_string();
            doc.anchors.push(Anchor {
                surface_text: surface,
                paragraph_index: a.p,
                sentence_index: a.s,
                char_span: a.start..a.end,
                target: Docid::new(a.target)?,
            });
        }
        Ok(doc)
    }

    fn from_document(doc: &Document) -> Self {
        DocRecord {
            title: doc.docid.as_str().to_string(),
            paragraphs: doc.paragraphs.clone(),
            anchors: doc
                .anchors
                .iter()
                .map(|a| AnchorRecord {
                    p: a.paragraph_index,
                    s: a.sentence_index,
                    start: a.char_span.start,
                    end: a.char_span.end,
                    target: a.target.as_str().to_string(),
                })
                .collect(),
        }
    }
}

/// A labeled query with its golden provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryExample {
    pub query_id: String,
    pub dataset: DatasetId,
    pub task: TaskId,
    #[serde(rename = "query")]
    pub query_text: String,
    pub provenance: BTreeSet<Docid>,
}

impl QueryExample {
    pub fn validate(&self) -> Result<()> {
        if self.provenance.is_empty() {
            return Err(Error::Validation(format!(
                "query {:?} has empty provenance",
                self.query_id
            )));
        }
        if self.dataset.task() != self.task {
            return Err(Error::Validation(format!(
                "query {:?}: dataset {} belongs to task {}, not {}",
                self.query_id,
                self.dataset,
                self.dataset.task(),
                self.task
            )));
        }
        Ok(())
    }
}

/// Load query examples from UTF-8 JSON Lines.
pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<QueryExample>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: QueryExample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        ex.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

/// Save query examples as JSON Lines.
pub fn save_examples(path: impl AsRef<Path>, examples: &[QueryExample]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut buf, ex)
            .map_err(|e| Error::Validation(format!("serialize {:?}: {e}", ex.query_id)))?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn make_doc(title: &str, sentences: &[&str], anchors: &[(usize, &str, &str)]) -> Document {
        // anchors: (sentence index, surface substring, target title)
        let paragraphs = vec![sentences.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        let mut doc = Document {
            docid: Docid::new(title).unwrap(),
            paragraphs,
            anchors: Vec::new(),
        };
        for &(s, surface, target) in anchors {
            let sentence = doc.sentence(0, s).unwrap();
            let start = sentence.find(surface).expect("surface present");
            doc.anchors.push(Anchor {
                surface_text: surface.to_string(),
                paragraph_index: 0,
                sentence_index: s,
                char_span: start..start + surface.len(),
                target: Docid::new(target).unwrap(),
            });
        }
        doc
    }

    #[test]
    fn load_well_formed_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let docs = vec![
            make_doc("Alpha", &["alpha one.", "alpha two."], &[]),
            make_doc("Beta", &["beta likes Alpha today."], &[(0, "Alpha", "Alpha")]),
            make_doc("Gamma", &["gamma text."], &[]),
        ];
        Corpus::from_documents(docs).unwrap().save(&path).unwrap();
        let corpus = Corpus::load(&path).unwrap();
        assert_eq!(corpus.len(), 3);
        assert!(corpus.warnings().is_empty());
    }

    #[test]
    fn dangling_anchor_is_a_warning_not_an_error() {
        let docs = vec![make_doc(
            "Alpha",
            &["alpha mentions Ghost here."],
            &[(0, "Ghost", "Ghost")],
        )];
        let corpus = Corpus::from_documents(docs).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.warnings().len(), 1);
        assert_eq!(corpus.warnings()[0].target.as_str(), "Ghost");
    }

    #[test]
    fn duplicate_docid_is_an_error() {
        let docs = vec![
            make_doc("Microsoft", &["one."], &[]),
            make_doc("Microsoft", &["two."], &[]),
        ];
        let err = Corpus::from_documents(docs).unwrap_err();
        assert!(err.to_string().contains("Microsoft"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"title\":\"A\",\"paragraphs\":[[\"x.\"]],\"anchors\":[]}\nnot json\n",
        )
        .unwrap();
        let err = Corpus::load(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn anchor_surface_must_match_span() {
        let mut doc = make_doc("Alpha", &["alpha text here."], &[(0, "text", "Beta")]);
        doc.anchors[0].surface_text = "wrong".into();
        let err = Corpus::from_documents(vec![doc]).unwrap_err();
        assert!(err.to_string().contains("surface"), "{err}");
    }

    #[test]
    fn corpus_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let docs = vec![
            make_doc("Alpha Beta", &["one two three.", "four Alpha five."], &[]),
            make_doc("Beta", &["beta likes Alpha Beta today."], &[(0, "Alpha Beta", "Alpha Beta")]),
        ];
        let corpus = Corpus::from_documents(docs).unwrap();
        corpus.save(&path).unwrap();
        let reloaded = Corpus::load(&path).unwrap();
        assert_eq!(corpus.docs(), reloaded.docs());
    }

    #[test]
    fn task_parse_error_lists_valid_tasks() {
        let err = "summarize".parse::<TaskId>().unwrap_err();
        let msg = err.to_string();
        for t in TaskId::ALL {
            assert!(msg.contains(t.name()), "{msg}");
        }
    }
}
