//! Docid prefix tree and constrained beam search.
//!
//! Every trie node corresponds to a token; walking root-to-terminal spells a
//! document title. Decoding is restricted at each step to continuations that
//! stay inside the trie: at a terminal the sequence may end (EOS) or, when
//! multi-docid output is enabled, emit a separator and restart at the root.
//! Only inserted titles are reachable, so documents from future sessions
//! cannot be produced.

use crate::corpus::Docid;
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, Tokenizer, EOS_ID, SEP_ID};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: BTreeMap<TokenId, usize>,
    terminal: Option<Docid>,
}

#[derive(Debug, Clone)]
pub struct DocidTrie {
    nodes: Vec<TrieNode>,
    members: BTreeSet<Docid>,
}

impl Default for DocidTrie {
    fn default() -> Self {
        Self::new()
    }
}

impl DocidTrie {
    pub fn new() -> Self {
        DocidTrie {
            nodes: vec![TrieNode::default()],
            members: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, docid: &Docid) -> bool {
        self.members.contains(docid)
    }

    pub fn members(&self) -> &BTreeSet<Docid> {
        &self.members
    }

    /// Insert a title's token path; duplicate inserts are no-ops.
    pub fn insert(&mut self, docid: &Docid, tokenizer: &Tokenizer) -> Result<()> {
        let tokens = tokenizer.encode(docid.as_str());
        if tokens.is_empty() {
            return Err(Error::Validation(format!(
                "docid {:?} tokenizes to zero tokens",
                docid.as_str()
            )));
        }
        let mut node = 0usize;
        for tok in tokens {
            node = match self.nodes[node].children.get(&tok) {
                Some(&next) => next,
                None => {
                    self.nodes.push(TrieNode::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[node].children.insert(tok, next);
                    next
                }
            };
        }
        if let Some(existing) = &self.nodes[node].terminal {
            if existing != docid {
                return Err(Error::Validation(format!(
                    "titles {:?} and {:?} collide on the same token path",
                    existing.as_str(),
                    docid.as_str()
                )));
            }
        }
        self.nodes[node].terminal = Some(docid.clone());
        self.members.insert(docid.clone());
        Ok(())
    }

    /// Walk a decoded prefix through the title automaton; returns the node
    /// reached (separators restart at the root). Errors on prefixes the
    /// automaton could never have produced.
    fn walk(&self, prefix: &[TokenId], cfg: &BeamConfig) -> Result<usize> {
        let mut node = 0usize;
        for (i, &tok) in prefix.iter().enumerate() {
            if tok == SEP_ID {
                if !cfg.allow_multi_docid || self.nodes[node].terminal.is_none() {
                    return Err(Error::Decode(format!(
                        "inconsistent prefix: separator at position {i} outside a terminal"
                    )));
                }
                node = 0;
                continue;
            }
            node = match self.nodes[node].children.get(&tok) {
                Some(&next) => next,
                None => {
                    return Err(Error::Decode(format!(
                        "inconsistent prefix: token {tok} at position {i} leaves the trie"
                    )))
                }
            };
        }
        Ok(node)
    }

    /// Allowed continuations after `prefix`: children of the current node,
    /// plus EOS (and the separator, when enabled) at terminals.
    pub fn allowed_next(&self, prefix: &[TokenId], cfg: &BeamConfig) -> Result<BTreeSet<TokenId>> {
        let node = self.walk(prefix, cfg)?;
        let mut out: BTreeSet<TokenId> = self.nodes[node].children.keys().copied().collect();
        if self.nodes[node].terminal.is_some() {
            out.insert(EOS_ID);
            if cfg.allow_multi_docid {
                out.insert(SEP_ID);
            }
        }
        Ok(out)
    }

    /// Docid at the terminal reached by `tokens`, if any.
    pub fn terminal_of(&self, tokens: &[TokenId]) -> Option<&Docid> {
        let mut node = 0usize;
        for tok in tokens {
            node = *self.nodes[node].children.get(tok)?;
        }
        self.nodes[node].terminal.as_ref()
    }

    /// Snapshot: sorted member titles, one per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = String::new();
        for d in &self.members {
            body.push_str(d.as_str());
            body.push('\n');
        }
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// Rebuild deterministically from a snapshot.
    pub fn load(path: impl AsRef<Path>, tokenizer: &Tokenizer) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut trie = DocidTrie::new();
        for line in body.lines() {
            if !line.is_empty() {
                trie.insert(&Docid::new(line.to_string())?, tokenizer)?;
            }
        }
        Ok(trie)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub max_steps: usize,
    /// Permit `title [SEP] title ...` output sequences.
    pub allow_multi_docid: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 10,
            max_steps: 15,
            allow_multi_docid: true,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width < 1 || self.max_steps < 1 {
            return Err(Error::Config(
                "beam_width and max_steps must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamHypothesis {
    /// Generated tokens, excluding BOS and the final EOS.
    pub tokens: Vec<TokenId>,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub query_id: String,
    /// Order-preserving dedup of docids split at the separator, across beams
    /// from best to worst.
    pub ranked: Vec<Docid>,
    pub beams: Vec<BeamHypothesis>,
    pub warning: Option<String>,
}

/// Width-B beam search over the trie automaton. `score` maps a generated
/// prefix (no BOS) to next-token log-probabilities over the full vocabulary;
/// candidates outside the allowed set are discarded. Each hypothesis stops at
/// EOS or after `max_steps` generated tokens; unfinished hypotheses are
/// dropped. Ties break toward lexicographically smaller token sequences.
pub fn beam_search(
    score: impl Fn(&[TokenId]) -> Result<Vec<f64>>,
    trie: &DocidTrie,
    cfg: &BeamConfig,
    query_id: &str,
) -> Result<RankedResult> {
    cfg.validate()?;
    if trie.is_empty() {
        return Ok(RankedResult {
            query_id: query_id.to_string(),
            ranked: Vec::new(),
            beams: Vec::new(),
            warning: Some("empty trie".into()),
        });
    }

    let mut live: Vec<BeamHypothesis> = vec![BeamHypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
    }];
    let mut finished: Vec<BeamHypothesis> = Vec::new();

    for _ in 0..cfg.max_steps {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<(BeamHypothesis, bool)> = Vec::new();
        for hyp in &live {
            let allowed = trie.allowed_next(&hyp.tokens, cfg)?;
            let logprobs = score(&hyp.tokens)?;
            for &tok in &allowed {
                let lp = logprobs.get(tok as usize).copied().ok_or_else(|| {
                    Error::Decode(format!("token {tok} outside the model vocabulary"))
                })?;
                let mut tokens = hyp.tokens.clone();
                let is_eos = tok == EOS_ID;
                if !is_eos {
                    tokens.push(tok);
                }
                candidates.push((
                    BeamHypothesis {
                        tokens,
                        logprob: hyp.logprob + lp,
                    },
                    is_eos,
                ));
            }
        }
        sort_hypotheses_with_flag(&mut candidates);
        let mut next_live = Vec::with_capacity(cfg.beam_width);
        for (hyp, is_eos) in candidates {
            if is_eos {
                finished.push(hyp);
            } else if next_live.len() < cfg.beam_width {
                next_live.push(hyp);
            }
        }
        live = next_live;
    }

    let mut warning = None;
    if finished.is_empty() {
        warning = Some(format!(
            "no hypothesis reached EOS within {} steps",
            cfg.max_steps
        ));
    }
    let mut finished_sorted = finished;
    sort_hypotheses(&mut finished_sorted);
    finished_sorted.truncate(cfg.beam_width);

    let mut ranked: Vec<Docid> = Vec::new();
    for hyp in &finished_sorted {
        for segment in hyp.tokens.split(|&t| t == SEP_ID) {
            if segment.is_empty() {
                continue;
            }
            // Constraint soundness guarantees a terminal here.
            let docid = trie.terminal_of(segment).ok_or_else(|| {
                Error::Decode(format!("finished beam segment {segment:?} has no terminal"))
            })?;
            if !ranked.contains(docid) {
                ranked.push(docid.clone());
            }
        }
    }

    Ok(RankedResult {
        query_id: query_id.to_string(),
        ranked,
        beams: finished_sorted,
        warning,
    })
}

fn sort_hypotheses(hyps: &mut [BeamHypothesis]) {
    hyps.sort_by(|a, b| {
        b.logprob
            .partial_cmp(&a.logprob)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
}

fn sort_hypotheses_with_flag(hyps: &mut [(BeamHypothesis, bool)]) {
    hyps.sort_by(|(a, _), (b, _)| {
        b.logprob
            .partial_cmp(&a.logprob)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
}

/// Exhaustively enumerate every trie-valid sequence that reaches EOS within
/// `max_steps`, with its total log-probability. Test oracle for beam search;
/// only usable on tiny instances.
pub fn enumerate_valid_sequences(
    score: &impl Fn(&[TokenId]) -> Result<Vec<f64>>,
    trie: &DocidTrie,
    cfg: &BeamConfig,
) -> Result<Vec<BeamHypothesis>> {
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    while let Some((prefix, logprob)) = stack.pop() {
        if prefix.len() >= cfg.max_steps {
            continue;
        }
        let allowed = trie.allowed_next(&prefix, cfg)?;
        let logprobs = score(&prefix)?;
        for &tok in &allowed {
            let lp = logprobs[tok as usize];
            if tok == EOS_ID {
                out.push(BeamHypothesis {
                    tokens: prefix.clone(),
                    logprob: logprob + lp,
                });
            } else {
                let mut tokens = prefix.clone();
                tokens.push(tok);
                stack.push((tokens, logprob + lp));
            }
        }
    }
    sort_hypotheses(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tk(titles: &[&str]) -> Tokenizer {
        let mut t = Tokenizer::new();
        for title in titles {
            t.add_text(title);
        }
        t
    }

    fn trie_of(titles: &[&str], tokenizer: &Tokenizer) -> DocidTrie {
        let mut trie = DocidTrie::new();
        for title in titles {
            trie.insert(&Docid::new(*title).unwrap(), tokenizer).unwrap();
        }
        trie
    }

    #[test]
    fn shared_prefix_path_with_two_terminals() {
        let titles = ["Nelson Mandela", "Nelson Mandela 70th Birthday Tribute"];
        let tokenizer = tk(&titles);
        let trie = trie_of(&titles, &tokenizer);
        assert_eq!(trie.len(), 2);
        // Shared path: nodes = root + "Nelson Mandela" (2) + "70th Birthday
        // Tribute" (3) = 6.
        assert_eq!(trie.node_count(), 6);

        let cfg = BeamConfig::default();
        let prefix = tokenizer.encode("Nelson Mandela");
        let allowed = trie.allowed_next(&prefix, &cfg).unwrap();
        let seventy = tokenizer.id_of("70th").unwrap();
        assert_eq!(
            allowed,
            BTreeSet::from([seventy, EOS_ID, SEP_ID]),
            "terminal with one continuation"
        );
    }

    #[test]
    fn empty_trie_walks_nothing_and_insert_is_idempotent() {
        let tokenizer = tk(&["Alpha"]);
        let trie = DocidTrie::new();
        let cfg = BeamConfig::default();
        assert!(trie
            .allowed_next(&[tokenizer.id_of("Alpha").unwrap()], &cfg)
            .is_err());
        assert!(trie.allowed_next(&[], &cfg).unwrap().is_empty());

        let mut trie = trie_of(&["Alpha"], &tokenizer);
        let before = trie.node_count();
        trie.insert(&Docid::new("Alpha").unwrap(), &tokenizer).unwrap();
        assert_eq!(trie.node_count(), before);
        assert_eq!(trie.len(), 1);
    }

    #[test]
    fn root_prefix_offers_all_first_tokens_and_sep_restarts() {
        let titles = ["Amber Falls", "Quartz Ridge", "Quartz Basin"];
        let tokenizer = tk(&titles);
        let trie = trie_of(&titles, &tokenizer);
        let cfg = BeamConfig::default();
        let first: BTreeSet<TokenId> = trie.allowed_next(&[], &cfg).unwrap();
        assert_eq!(
            first,
            BTreeSet::from([
                tokenizer.id_of("Amber").unwrap(),
                tokenizer.id_of("Quartz").unwrap()
            ])
        );
        // After "Amber Falls [SEP]" the automaton is back at the root.
        let mut prefix = tokenizer.encode("Amber Falls");
        prefix.push(SEP_ID);
        assert_eq!(trie.allowed_next(&prefix, &cfg).unwrap(), first);
        // Separator not at a terminal is inconsistent.
        let bad = vec![tokenizer.id_of("Quartz").unwrap(), SEP_ID];
        assert!(trie.allowed_next(&bad, &cfg).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let titles = ["Amber Falls", "Quartz Ridge"];
        let tokenizer = tk(&titles);
        let trie = trie_of(&titles, &tokenizer);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trie.txt");
        trie.save(&path).unwrap();
        let loaded = DocidTrie::load(&path, &tokenizer).unwrap();
        assert_eq!(trie.members(), loaded.members());
        assert_eq!(trie.node_count(), loaded.node_count());
    }

    /// Fixed per-token log-probabilities, position independent.
    fn fixed_score(vocab: usize, favored: &[(TokenId, f64)]) -> impl Fn(&[TokenId]) -> Result<Vec<f64>> {
        let mut logits = vec![0.0f64; vocab];
        for &(tok, boost) in favored {
            logits[tok as usize] = boost;
        }
        move |_prefix: &[TokenId]| {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
            Ok(logits.iter().map(|l| l - log_sum).collect())
        }
    }

    #[test]
    fn beam_emits_only_trie_members_with_sorted_scores() {
        let titles = ["Amber Falls", "Quartz Ridge", "Quartz Basin"];
        let tokenizer = tk(&titles);
        let trie = trie_of(&titles, &tokenizer);
        let cfg = BeamConfig {
            beam_width: 8,
            max_steps: 8,
            allow_multi_docid: true,
        };
        let score = fixed_score(
            tokenizer.vocab_size(),
            &[(tokenizer.id_of("Quartz").unwrap(), 2.0), (EOS_ID, 1.0)],
        );
        let result = beam_search(score, &trie, &cfg, "q1").unwrap();
        assert!(!result.ranked.is_empty());
        for d in &result.ranked {
            assert!(trie.contains(d), "{d} not in trie");
        }
        for w in result.beams.windows(2) {
            assert!(w[0].logprob >= w[1].logprob);
        }
        assert_eq!(result.ranked.len(), {
            let mut seen = BTreeSet::new();
            result.ranked.iter().for_each(|d| {
                seen.insert(d.clone());
            });
            seen.len()
        });
    }

    #[test]
    fn beam_matches_exhaustive_argmax_when_wide_enough() {
        let titles = ["Amber", "Quartz Ridge", "Falls"];
        let tokenizer = tk(&titles);
        assert!(tokenizer.vocab_size() <= 12);
        let trie = trie_of(&titles, &tokenizer);
        let cfg = BeamConfig {
            beam_width: 512,
            max_steps: 5,
            allow_multi_docid: true,
        };
        let score = fixed_score(
            tokenizer.vocab_size(),
            &[
                (tokenizer.id_of("Quartz").unwrap(), 0.7),
                (tokenizer.id_of("Amber").unwrap(), 0.5),
                (EOS_ID, 1.2),
                (SEP_ID, 0.1),
            ],
        );
        let oracle = enumerate_valid_sequences(&score, &trie, &cfg).unwrap();
        assert!(oracle.len() <= cfg.beam_width);
        let result = beam_search(&score, &trie, &cfg, "q").unwrap();
        assert_eq!(result.beams[0].tokens, oracle[0].tokens);
        assert!((result.beams[0].logprob - oracle[0].logprob).abs() < 1e-12);
    }

    #[test]
    fn unreachable_eos_returns_empty_with_warning() {
        let titles = ["Amber Falls Quartz Ridge Basin Harbor"];
        let tokenizer = tk(&titles);
        let trie = trie_of(&titles, &tokenizer);
        // Title needs 6 tokens + EOS but only 3 steps are allowed.
        let cfg = BeamConfig {
            beam_width: 4,
            max_steps: 3,
            allow_multi_docid: false,
        };
        let score = fixed_score(tokenizer.vocab_size(), &[]);
        let result = beam_search(score, &trie, &cfg, "q").unwrap();
        assert!(result.ranked.is_empty());
        assert!(result.beams.is_empty());
        assert!(result.warning.is_some());
    }

    #[test]
    fn inserting_more_titles_never_removes_sequences() {
        let tokenizer = tk(&["Amber Falls", "Quartz Ridge", "Amber Ridge"]);
        let mut trie = trie_of(&["Amber Falls"], &tokenizer);
        let cfg = BeamConfig::default();
        let score = fixed_score(tokenizer.vocab_size(), &[(EOS_ID, 0.5)]);
        let before = enumerate_valid_sequences(&score, &trie, &BeamConfig {
            beam_width: 64,
            max_steps: 4,
            allow_multi_docid: false,
        })
        .unwrap();
        trie.insert(&Docid::new("Quartz Ridge").unwrap(), &tokenizer).unwrap();
        trie.insert(&Docid::new("Amber Ridge").unwrap(), &tokenizer).unwrap();
        let after = enumerate_valid_sequences(&score, &trie, &BeamConfig {
            beam_width: 64,
            max_steps: 4,
            allow_multi_docid: false,
        })
        .unwrap();
        let _ = cfg;
        let before_set: BTreeSet<Vec<TokenId>> = before.into_iter().map(|h| h.tokens).collect();
        let after_set: BTreeSet<Vec<TokenId>> = after.into_iter().map(|h| h.tokens).collect();
        assert!(before_set.is_subset(&after_set));
    }
}
