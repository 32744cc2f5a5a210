//! Continual generative retrieval over an evolving corpus.
//!
//! The engine retrieves documents by generating their titles with a small
//! encoder-decoder transformer under a title prefix-tree constraint. New
//! document batches arrive in sessions; per-task low-rank adapters are
//! continually pre-trained on pseudo-queries from the new documents plus a
//! cluster-selected rehearsal set of old ones, while the shared backbone
//! stays frozen. An evaluation harness tracks per-session retrieval quality
//! and the forgetting/transfer summary metrics.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod optim;
pub mod pseudoquery;
pub mod rehearsal;
pub mod rng;
pub mod tensor;
pub mod tokenizer;
pub mod trainer;

pub use corpus::{Corpus, DatasetId, Docid, Document, QueryExample, SessionPlan, TaskId};
pub use error::{Error, Result};
pub use tensor::{Mat, Real};
pub use tokenizer::Tokenizer;
