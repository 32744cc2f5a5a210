//! Session benchmark construction: base/incremental partitions and
//! provenance-gated query filtering.

use super::{load_examples, save_examples, Corpus, DatasetId, Docid, QueryExample};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Partition a corpus into a base set plus `t_sessions` incremental sets.
///
/// The base set holds `round(base_fraction * N)` docids sampled uniformly
/// without replacement; the remainder is divided into parts whose sizes
/// differ by at most one, leftovers going to the lowest-index sessions.
pub fn split_sessions(
    corpus: &Corpus,
    t_sessions: usize,
    base_fraction: f64,
    seed: u64,
) -> Result<Vec<BTreeSet<Docid>>> {
    if corpus.is_empty() {
        return Err(Error::Validation("corpus is empty".into()));
    }
    if t_sessions < 1 {
        return Err(Error::Validation("t_sessions must be >= 1".into()));
    }
    if !(base_fraction > 0.0 && base_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "base_fraction must lie in (0, 1), got {base_fraction}"
        )));
    }
    let n = corpus.len();
    if n < t_sessions + 1 {
        return Err(Error::Validation(format!(
            "corpus of {n} documents is smaller than t_sessions + 1 = {}",
            t_sessions + 1
        )));
    }

    let mut ids = corpus.docids();
    let mut rng = rng::rng_for(seed, "corpus.split");
    ids.shuffle(&mut rng);

    // round() is half-away-from-zero; documented as part of the contract.
    // Incremental sessions may end up empty on tiny corpora.
    let base_len = ((base_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let remainder = n - base_len;
    let per = remainder / t_sessions;
    let extra = remainder % t_sessions;

    let mut partitions = Vec::with_capacity(t_sessions + 1);
    let mut cursor = 0usize;
    let take = |len: usize, cursor: &mut usize| -> BTreeSet<Docid> {
        let set: BTreeSet<Docid> = ids[*cursor..*cursor + len].iter().cloned().collect();
        *cursor += len;
        set
    };
    partitions.push(take(base_len, &mut cursor));
    for j in 0..t_sessions {
        let len = per + usize::from(j < extra);
        partitions.push(take(len, &mut cursor));
    }
    debug_assert_eq!(cursor, n);
    Ok(partitions)
}

/// Cumulative docid pools: `pools[i]` = union of partitions `0..=i`.
pub fn cumulative_pools(partitions: &[BTreeSet<Docid>]) -> Vec<BTreeSet<Docid>> {
    let mut pools: Vec<BTreeSet<Docid>> = Vec::with_capacity(partitions.len());
    let mut acc = BTreeSet::new();
    for part in partitions {
        acc.extend(part.iter().cloned());
        pools.push(acc.clone());
    }
    pools
}

/// Session a query is assigned to: the smallest `i` such that its provenance
/// is contained in the pool of session `i`. `None` when some provenance docid
/// never appears.
pub fn assigned_session(example: &QueryExample, pools: &[BTreeSet<Docid>]) -> Option<usize> {
    pools
        .iter()
        .position(|pool| example.provenance.iter().all(|d| pool.contains(d)))
}

/// Keep exactly the examples that belong to session `i`: provenance within
/// the session-`i` pool and not already claimed by an earlier session. This
/// is the remaining-set semantics of iterative dev-set filtering.
pub fn filter_examples(
    examples: &[QueryExample],
    partitions: &[BTreeSet<Docid>],
    i: usize,
) -> Vec<QueryExample> {
    let pools = cumulative_pools(partitions);
    examples
        .iter()
        .filter(|ex| assigned_session(ex, &pools) == Some(i))
        .cloned()
        .collect()
}

/// The full benchmark: partitions, session-0 training pairs, per-session
/// test sets keyed by (session, dataset).
#[derive(Debug, Clone)]
pub struct SessionPlan {
    pub partitions: Vec<BTreeSet<Docid>>,
    pub train_pairs_r0: Vec<QueryExample>,
    pub test_sets: BTreeMap<(usize, DatasetId), Vec<QueryExample>>,
}

impl SessionPlan {
    /// Number of incremental sessions (T).
    pub fn t_sessions(&self) -> usize {
        self.partitions.len().saturating_sub(1)
    }

    pub fn pool(&self, i: usize) -> BTreeSet<Docid> {
        let mut out = BTreeSet::new();
        for part in &self.partitions[..=i] {
            out.extend(part.iter().cloned());
        }
        out
    }

    pub fn test_examples(&self, session: usize) -> Vec<&QueryExample> {
        self.test_sets
            .iter()
            .filter(|((i, _), _)| *i == session)
            .flat_map(|(_, v)| v.iter())
            .collect()
    }

    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        if self.partitions.len() < 2 {
            return Err(Error::Validation("plan needs at least sessions 0 and 1".into()));
        }
        // Disjointness and coverage.
        let mut seen: BTreeSet<&Docid> = BTreeSet::new();
        for (j, part) in self.partitions.iter().enumerate() {
            for d in part {
                if !corpus.contains(d) {
                    return Err(Error::Validation(format!(
                        "partition {j} references unknown docid {d:?}"
                    )));
                }
                if !seen.insert(d) {
                    return Err(Error::Validation(format!(
                        "docid {d:?} appears in more than one partition"
                    )));
                }
            }
        }
        if seen.len() != corpus.len() {
            return Err(Error::Validation(format!(
                "partitions cover {} of {} corpus docids",
                seen.len(),
                corpus.len()
            )));
        }
        // Provenance gating.
        let pools = cumulative_pools(&self.partitions);
        for ex in &self.train_pairs_r0 {
            ex.validate()?;
            if !ex.provenance.iter().all(|d| pools[0].contains(d)) {
                return Err(Error::Validation(format!(
                    "train query {:?} has provenance outside the base set",
                    ex.query_id
                )));
            }
        }
        let mut ids_by_session: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
        for ((i, ds), examples) in &self.test_sets {
            for ex in examples {
                ex.validate()?;
                if ex.dataset != *ds {
                    return Err(Error::Validation(format!(
                        "query {:?} filed under dataset {ds} but labeled {}",
                        ex.query_id, ex.dataset
                    )));
                }
                if !ex.provenance.iter().all(|d| pools[*i].contains(d)) {
                    return Err(Error::Validation(format!(
                        "test query {:?} at session {i} references later docids",
                        ex.query_id
                    )));
                }
                ids_by_session.entry(*i).or_default().insert(&ex.query_id);
            }
        }
        // Distinct sessions must not share query ids.
        let mut all: BTreeSet<&str> = BTreeSet::new();
        for (_, ids) in ids_by_session {
            for id in ids {
                if !all.insert(id) {
                    return Err(Error::Validation(format!(
                        "query id {id:?} appears in multiple sessions"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Write the plan into `dir`: one title-per-line file per partition,
    /// JSONL query files, and a single `plan.json` tying them together.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut partition_files = Vec::new();
        for (j, part) in self.partitions.iter().enumerate() {
            let name = format!("d{j}.txt");
            let mut body = String::new();
            for d in part {
                body.push_str(d.as_str());
                body.push('\n');
            }
            std::fs::write(dir.join(&name), body).map_err(|e| Error::io(dir.join(&name), e))?;
            partition_files.push(name);
        }
        save_examples(dir.join("r0.jsonl"), &self.train_pairs_r0)?;
        let mut test_files = Vec::new();
        for i in 0..=self.t_sessions() {
            let name = format!("q{i}.jsonl");
            let mut examples: Vec<QueryExample> = Vec::new();
            for ((s, _), v) in &self.test_sets {
                if *s == i {
                    examples.extend(v.iter().cloned());
                }
            }
            save_examples(dir.join(&name), &examples)?;
            test_files.push(name);
        }
        let record = PlanRecord {
            version: 1,
            t_sessions: self.t_sessions(),
            partitions: self
                .partitions
                .iter()
                .map(|p| p.iter().map(|d| d.as_str().to_string()).collect())
                .collect(),
            partition_files,
            train_file: "r0.jsonl".into(),
            test_files,
        };
        let json = serde_json::to_string_pretty(&record)
            .map_err(|e| Error::Validation(format!("serialize plan: {e}")))?;
        std::fs::write(dir.join("plan.json"), json)
            .map_err(|e| Error::io(dir.join("plan.json"), e))
    }

    /// Load a plan previously written by [`SessionPlan::save`].
    pub fn load(plan_path: impl AsRef<Path>) -> Result<Self> {
        let plan_path = plan_path.as_ref();
        let dir = plan_path.parent().unwrap_or_else(|| Path::new("."));
        let body = std::fs::read_to_string(plan_path).map_err(|e| Error::io(plan_path, e))?;
        let record: PlanRecord = serde_json::from_str(&body).map_err(|e| Error::Parse {
            path: plan_path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        if record.version != 1 {
            return Err(Error::Validation(format!(
                "unsupported plan version {}",
                record.version
            )));
        }
        let mut partitions = Vec::with_capacity(record.partitions.len());
        for titles in record.partitions {
            let mut set = BTreeSet::new();
            for t in titles {
                set.insert(Docid::new(t)?);
            }
            partitions.push(set);
        }
        let train_pairs_r0 = load_examples(dir.join(&record.train_file))?;
        let mut test_sets: BTreeMap<(usize, DatasetId), Vec<QueryExample>> = BTreeMap::new();
        for (i, name) in record.test_files.iter().enumerate() {
            for ex in load_examples(dir.join(name))? {
                test_sets.entry((i, ex.dataset)).or_default().push(ex);
            }
        }
        Ok(SessionPlan {
            partitions,
            train_pairs_r0,
            test_sets,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PlanRecord {
    version: u32,
    t_sessions: usize,
    partitions: Vec<Vec<String>>,
    partition_files: Vec<String>,
    train_file: String,
    test_files: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{generate_corpus, SynthCorpusConfig};
    use crate::corpus::TaskId;

    fn toy_corpus(n: usize, seed: u64) -> Corpus {
        generate_corpus(
            &SynthCorpusConfig {
                num_docs: n,
                ..SynthCorpusConfig::default()
            },
            seed,
        )
        .unwrap()
    }

    fn example(id: &str, provenance: &[&str]) -> QueryExample {
        QueryExample {
            query_id: id.into(),
            dataset: DatasetId::Fev,
            task: TaskId::FactChecking,
            query_text: "q".into(),
            provenance: provenance.iter().map(|t| Docid::new(*t).unwrap()).collect(),
        }
    }

    #[test]
    fn split_sizes_match_balanced_rule() {
        let corpus = toy_corpus(100, 11);
        let parts = split_sessions(&corpus, 4, 0.6, 5).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        assert_eq!(sizes, vec![60, 10, 10, 10, 10]);
    }

    #[test]
    fn split_small_corpus_gives_leftovers_to_low_sessions() {
        // N=5, T=4: base round(3.0)=3, remainder 2 over 4 parts -> [1,1,0,0].
        let corpus = toy_corpus(5, 11);
        let parts = split_sessions(&corpus, 4, 0.6, 5).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        assert_eq!(sizes, vec![3, 1, 1, 0, 0]);
        let max = sizes[1..].iter().max().unwrap();
        let min = sizes[1..].iter().min().unwrap();
        assert!(max - min <= 1);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let corpus = toy_corpus(50, 3);
        let a = split_sessions(&corpus, 3, 0.6, 42).unwrap();
        let b = split_sessions(&corpus, 3, 0.6, 42).unwrap();
        let c = split_sessions(&corpus, 3, 0.6, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_tiny_corpus() {
        let corpus = toy_corpus(4, 1);
        assert!(split_sessions(&corpus, 4, 0.6, 0).is_err());
    }

    #[test]
    fn split_covers_disjointly() {
        let corpus = toy_corpus(37, 9);
        let parts = split_sessions(&corpus, 4, 0.6, 1).unwrap();
        let total: usize = parts.iter().map(|p| p.len()).sum();
        assert_eq!(total, 37);
        let union: BTreeSet<_> = parts.iter().flatten().cloned().collect();
        assert_eq!(union, corpus.docid_set());
    }

    #[test]
    fn filter_applies_subset_and_remaining_set_rules() {
        let d = |t: &str| Docid::new(t).unwrap();
        let partitions = vec![
            BTreeSet::from([d("A")]),
            BTreeSet::from([d("B")]),
            BTreeSet::from([d("C")]),
        ];
        let examples = vec![
            example("base", &["A"]),
            example("mixed", &["A", "C"]),
            example("first", &["B"]),
        ];
        // Base case: provenance {A} with A in D_0 is retained at i=0.
        let q0 = filter_examples(&examples, &partitions, 0);
        assert_eq!(q0.iter().map(|e| e.query_id.as_str()).collect::<Vec<_>>(), vec!["base"]);
        // {A, C} is excluded at i=1 (C arrives later), retained at i=2.
        let q1 = filter_examples(&examples, &partitions, 1);
        assert_eq!(q1.iter().map(|e| e.query_id.as_str()).collect::<Vec<_>>(), vec!["first"]);
        let q2 = filter_examples(&examples, &partitions, 2);
        assert_eq!(q2.iter().map(|e| e.query_id.as_str()).collect::<Vec<_>>(), vec!["mixed"]);
        // Remaining-set semantics: an example retained at i=1 is absent at i=2.
        assert!(!q2.iter().any(|e| e.query_id == "first"));
    }

    #[test]
    fn plan_round_trip() {
        let corpus = toy_corpus(30, 21);
        let partitions = split_sessions(&corpus, 2, 0.6, 21).unwrap();
        let (r0, tests) = crate::corpus::generate_examples(
            &corpus,
            &partitions,
            &crate::corpus::SynthQueryConfig {
                train_per_dataset: 2,
                test_per_dataset: 1,
                ..Default::default()
            },
            77,
        )
        .unwrap();
        let plan = SessionPlan {
            partitions,
            train_pairs_r0: r0,
            test_sets: tests,
        };
        plan.validate(&corpus).unwrap();
        let dir = tempfile::tempdir().unwrap();
        plan.save(dir.path()).unwrap();
        let loaded = SessionPlan::load(dir.path().join("plan.json")).unwrap();
        assert_eq!(plan.partitions, loaded.partitions);
        assert_eq!(plan.train_pairs_r0, loaded.train_pairs_r0);
        assert_eq!(plan.test_sets, loaded.test_sets);
    }
}
