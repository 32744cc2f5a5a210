//! Whitespace + punctuation tokenizer with a corpus-built vocabulary.
//!
//! The vocabulary plays the role of a fixed subword inventory: it is built
//! once, over the whole corpus file plus all benchmark query text, so titles
//! from any session tokenize without loss. Special tokens are literal
//! strings and always occupy the same leading ids.

use crate::error::{Error, Result};
use indexmap::IndexMap;
use std::path::Path;

pub const PAD: &str = "[PAD]";
pub const BOS: &str = "[BOS]";
pub const EOS: &str = "[EOS]";
pub const UNK: &str = "[UNK]";
pub const SEP: &str = "[SEP]";
pub const START_ENT: &str = "[START_ENT]";
pub const END_ENT: &str = "[END_ENT]";

const SPECIALS: [&str; 7] = [PAD, BOS, EOS, UNK, SEP, START_ENT, END_ENT];

pub type TokenId = u32;

// Special tokens always occupy the leading ids, in SPECIALS order.
pub const PAD_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
pub const UNK_ID: TokenId = 3;
pub const SEP_ID: TokenId = 4;
pub const START_ENT_ID: TokenId = 5;
pub const END_ENT_ID: TokenId = 6;

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: IndexMap<String, TokenId>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Tokenizer {
    pub fn new() -> Self {
        let mut vocab = IndexMap::new();
        for s in SPECIALS {
            vocab.insert(s.to_string(), vocab.len() as TokenId);
        }
        Tokenizer { vocab }
    }

    /// Split text into surface tokens: special-token literals, alphanumeric
    /// runs, and single punctuation characters.
    pub fn split(text: &str) -> Vec<&str> {
        let mut out = Vec::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        'outer: while i < bytes.len() {
            let rest = &text[i..];
            let ch = rest.chars().next().unwrap();
            if ch.is_whitespace() {
                i += ch.len_utf8();
                continue;
            }
            for sp in SPECIALS {
                if rest.starts_with(sp) {
                    out.push(&text[i..i + sp.len()]);
                    i += sp.len();
                    continue 'outer;
                }
            }
            if ch.is_alphanumeric() {
                let mut end = i;
                for c in rest.chars() {
                    if c.is_alphanumeric() {
                        end += c.len_utf8();
                    } else {
                        break;
                    }
                }
                out.push(&text[i..end]);
                i = end;
            } else {
                out.push(&text[i..i + ch.len_utf8()]);
                i += ch.len_utf8();
            }
        }
        out
    }

    /// Add every token of `text` to the vocabulary (first-seen order).
    pub fn add_text(&mut self, text: &str) {
        for tok in Self::split(text) {
            if !self.vocab.contains_key(tok) {
                self.vocab.insert(tok.to_string(), self.vocab.len() as TokenId);
            }
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.vocab.get(token).copied()
    }

    pub fn token_str(&self, id: TokenId) -> Option<&str> {
        self.vocab.get_index(id as usize).map(|(k, _)| k.as_str())
    }

    pub fn pad_id(&self) -> TokenId {
        PAD_ID
    }
    pub fn bos_id(&self) -> TokenId {
        BOS_ID
    }
    pub fn eos_id(&self) -> TokenId {
        EOS_ID
    }
    pub fn unk_id(&self) -> TokenId {
        UNK_ID
    }
    pub fn sep_id(&self) -> TokenId {
        SEP_ID
    }
    pub fn start_ent_id(&self) -> TokenId {
        START_ENT_ID
    }
    pub fn end_ent_id(&self) -> TokenId {
        END_ENT_ID
    }

    /// Encode text to token ids; out-of-vocabulary tokens map to `[UNK]`.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        Self::split(text)
            .into_iter()
            .map(|t| self.id_of(t).unwrap_or_else(|| self.unk_id()))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.token_str(id).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line, line number = id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = String::new();
        for (tok, _) in &self.vocab {
            body.push_str(tok);
            body.push('\n');
        }
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vocab = IndexMap::new();
        for line in body.lines() {
            if vocab.insert(line.to_string(), vocab.len() as TokenId).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate vocab token {line:?} in {}",
                    path.display()
                )));
            }
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if vocab.get_index(i).map(|(k, _)| k.as_str()) != Some(*s) {
                return Err(Error::Validation(format!(
                    "vocab file {} missing special token {s} at id {i}",
                    path.display()
                )));
            }
        }
        Ok(Tokenizer { vocab })
    }
}
