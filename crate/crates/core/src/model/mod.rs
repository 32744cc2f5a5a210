//! Miniature transformer encoder-decoder with inside-inserted low-rank
//! adapters.
//!
//! Parameter naming scheme (one named tensor group per architectural symbol):
//!
//! - `embed.tok`            shared token embedding, also the tied output head
//! - `embed.pos_enc/dec`    learned absolute positions, encoder/decoder
//! - `enc.{i}.mhsa.{wq,wk,wv,wo}`           encoder self-attention projections
//! - `enc.{i}.mhsa_ln.{scale,shift}`        its residual layer norm
//! - `enc.{i}.ffn.{w1,b1,w2,b2}`            position-wise FFN (w1: d x 4d)
//! - `enc.{i}.ffn_ln.{scale,shift}`
//! - `dec.{i}.mmhsa.*`, `dec.{i}.mhca.*`, `dec.{i}.ffn.*` and their `_ln`
//!   groups for the decoder (masked self-attention, cross-attention, FFN)
//!
//! Adapter stores use `{enc|dec}.{i}.{sublayer}.adapter.{down,up}`.

mod forward;

pub use forward::{
    adapter_apply, feed_forward, inside_sublayer, multi_head_attention, rcln, seq2seq_loss,
    AttentionKind, ForwardCtx, SeqModel, TrainOutput,
};

use crate::error::{Error, Result};
use crate::rng::{self, normal_f64};
use crate::tensor::{Mat, Real};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub num_heads: usize,
    /// Layer count, applied to both encoder and decoder.
    pub num_layers: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    /// FFN width multiplier; the architecture fixes this at 4.
    #[serde(default = "default_ffn_multiplier")]
    pub ffn_multiplier: usize,
}

fn default_ffn_multiplier() -> usize {
    4
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            num_heads: 4,
            num_layers: 2,
            vocab_size: 0, // filled from the tokenizer
            max_positions: 128,
            ffn_multiplier: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.num_heads == 0 || self.num_layers == 0 || self.vocab_size == 0
        {
            return Err(Error::Config("model dimensions must all be >= 1".into()));
        }
        if self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.max_positions == 0 {
            return Err(Error::Config("max_positions must be >= 1".into()));
        }
        if self.ffn_multiplier == 0 {
            return Err(Error::Config("ffn_multiplier must be >= 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn d_ffn(&self) -> usize {
        self.d_model * self.ffn_multiplier
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    /// Down-projection width r (W_down: d x r, W_up: r x d).
    pub rank: usize,
    /// Keep a residual path inside the adapter so a zero-initialized adapter
    /// reproduces the backbone exactly.
    #[serde(default = "default_true")]
    pub internal_residual: bool,
    #[serde(default = "default_true")]
    pub zero_init_up: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            rank: 8,
            internal_residual: true,
            zero_init_up: true,
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.rank == 0 || self.rank >= model.d_model {
            return Err(Error::Config(format!(
                "adapter rank must satisfy 1 <= rank < d_model, got {} vs {}",
                self.rank, model.d_model
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Real> {
    pub data: Mat<F>,
    pub frozen: bool,
}

/// Ordered collection of named tensors with freeze flags. Iteration order is
/// insertion order, which checkpoints and optimizers rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<F: Real> {
    tensors: IndexMap<String, Tensor<F>>,
}

impl<F: Real> Default for ParameterStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParameterStore<F> {
    pub fn new() -> Self {
        ParameterStore {
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, data: Mat<F>, frozen: bool) -> usize {
        let name = name.into();
        assert!(
            !self.tensors.contains_key(&name),
            "duplicate tensor name {name}"
        );
        self.tensors.insert(name, Tensor { data, frozen });
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn idx_of(&self, name: &str) -> Option<usize> {
        self.tensors.get_index_of(name)
    }

    pub fn name_of(&self, idx: usize) -> &str {
        self.tensors.get_index(idx).expect("tensor index").0
    }

    pub fn tensor(&self, idx: usize) -> &Tensor<F> {
        self.tensors.get_index(idx).expect("tensor index").1
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor<F> {
        self.tensors.get_index_mut(idx).expect("tensor index").1
    }

    pub fn get(&self, name: &str) -> Option<&Mat<F>> {
        self.tensors.get(name).map(|t| &t.data)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn freeze_all(&mut self) {
        for (_, t) in self.tensors.iter_mut() {
            t.frozen = true;
        }
    }

    pub fn unfreeze_all(&mut self) {
        for (_, t) in self.tensors.iter_mut() {
            t.frozen = false;
        }
    }

    pub fn all_frozen(&self) -> bool {
        self.tensors.values().all(|t| t.frozen)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.data.all_finite())
    }

    /// Total scalar parameter count.
    pub fn num_params(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }
}

fn normal_mat<F: Real>(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Mat<F> {
    Mat::from_fn(rows, cols, |_, _| F::from_f64c(normal_f64(rng) * std))
}

const INIT_STD: f64 = 0.02;

/// Fresh backbone parameters, deterministic given the seed.
pub fn init_backbone<F: Real>(cfg: &ModelConfig, seed: u64) -> Result<ParameterStore<F>> {
    cfg.validate()?;
    let mut rng = rng::rng_for(seed, "model.init.backbone");
    let d = cfg.d_model;
    let d_ffn = cfg.d_ffn();
    let mut store = ParameterStore::new();

    store.insert(
        "embed.tok",
        normal_mat(&mut rng, cfg.vocab_size, d, INIT_STD),
        false,
    );
    store.insert(
        "embed.pos_enc",
        normal_mat(&mut rng, cfg.max_positions, d, INIT_STD),
        false,
    );
    store.insert(
        "embed.pos_dec",
        normal_mat(&mut rng, cfg.max_positions, d, INIT_STD),
        false,
    );

    let attention = |store: &mut ParameterStore<F>, rng: &mut rand_chacha::ChaCha8Rng, prefix: &str| {
        for w in ["wq", "wk", "wv", "wo"] {
            store.insert(format!("{prefix}.{w}"), normal_mat(rng, d, d, INIT_STD), false);
        }
        store.insert(format!("{prefix}_ln.scale"), Mat::from_fn(1, d, |_, _| F::one()), false);
        store.insert(format!("{prefix}_ln.shift"), Mat::zeros(1, d), false);
    };
    let ffn = |store: &mut ParameterStore<F>, rng: &mut rand_chacha::ChaCha8Rng, prefix: &str| {
        store.insert(format!("{prefix}.w1"), normal_mat(rng, d, d_ffn, INIT_STD), false);
        store.insert(format!("{prefix}.b1"), Mat::zeros(1, d_ffn), false);
        store.insert(format!("{prefix}.w2"), normal_mat(rng, d_ffn, d, INIT_STD), false);
        store.insert(format!("{prefix}.b2"), Mat::zeros(1, d), false);
        store.insert(format!("{prefix}_ln.scale"), Mat::from_fn(1, d, |_, _| F::one()), false);
        store.insert(format!("{prefix}_ln.shift"), Mat::zeros(1, d), false);
    };

    for i in 0..cfg.num_layers {
        attention(&mut store, &mut rng, &format!("enc.{i}.mhsa"));
        ffn(&mut store, &mut rng, &format!("enc.{i}.ffn"));
    }
    for i in 0..cfg.num_layers {
        attention(&mut store, &mut rng, &format!("dec.{i}.mmhsa"));
        attention(&mut store, &mut rng, &format!("dec.{i}.mhca"));
        ffn(&mut store, &mut rng, &format!("dec.{i}.ffn"));
    }
    Ok(store)
}

/// Adapter sub-layer keys in application order, used both by init and the
/// forward pass.
pub fn adapter_sites(num_layers: usize) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..num_layers {
        out.push(format!("enc.{i}.mhsa"));
        out.push(format!("enc.{i}.ffn"));
    }
    for i in 0..num_layers {
        out.push(format!("dec.{i}.mmhsa"));
        out.push(format!("dec.{i}.mhca"));
        out.push(format!("dec.{i}.ffn"));
    }
    out
}

/// Fresh adapter parameters for one task: down-projections random, the
/// up-projections zero by default so the adapted model starts backbone-equal.
pub fn init_adapter<F: Real>(
    cfg: &ModelConfig,
    acfg: &AdapterConfig,
    seed: u64,
) -> Result<ParameterStore<F>> {
    cfg.validate()?;
    acfg.validate(cfg)?;
    let mut rng = rng::rng_for(seed, "model.init.adapter");
    let d = cfg.d_model;
    let r = acfg.rank;
    let mut store = ParameterStore::new();
    for site in adapter_sites(cfg.num_layers) {
        store.insert(
            format!("{site}.adapter.down"),
            normal_mat(&mut rng, d, r, INIT_STD),
            false,
        );
        let up = if acfg.zero_init_up {
            Mat::zeros(r, d)
        } else {
            normal_mat(&mut rng, r, d, INIT_STD)
        };
        store.insert(format!("{site}.adapter.up"), up, false);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            num_heads: 2,
            num_layers: 1,
            vocab_size: 11,
            max_positions: 16,
            ffn_multiplier: 4,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = tiny_cfg();
        let a: ParameterStore<f32> = init_backbone(&cfg, 5).unwrap();
        let b: ParameterStore<f32> = init_backbone(&cfg, 5).unwrap();
        let c: ParameterStore<f32> = init_backbone(&cfg, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn backbone_has_expected_groups() {
        let cfg = tiny_cfg();
        let store: ParameterStore<f32> = init_backbone(&cfg, 0).unwrap();
        for name in [
            "embed.tok",
            "embed.pos_enc",
            "embed.pos_dec",
            "enc.0.mhsa.wq",
            "enc.0.mhsa_ln.scale",
            "enc.0.ffn.w1",
            "dec.0.mmhsa.wo",
            "dec.0.mhca.wk",
            "dec.0.ffn.b2",
            "dec.0.ffn_ln.shift",
        ] {
            assert!(store.idx_of(name).is_some(), "missing {name}");
        }
        let w1 = store.get("enc.0.ffn.w1").unwrap();
        assert_eq!(w1.shape(), (8, 32), "w1 must be d x 4d");
    }

    #[test]
    fn adapter_shapes_and_zero_init() {
        let cfg = tiny_cfg();
        let acfg = AdapterConfig {
            rank: 3,
            ..Default::default()
        };
        let store: ParameterStore<f32> = init_adapter(&cfg, &acfg, 1).unwrap();
        // 2 encoder sites + 3 decoder sites per layer, down+up each.
        assert_eq!(store.len(), 5 * 2);
        let down = store.get("enc.0.mhsa.adapter.down").unwrap();
        let up = store.get("enc.0.mhsa.adapter.up").unwrap();
        assert_eq!(down.shape(), (8, 3));
        assert_eq!(up.shape(), (3, 8));
        assert!(up.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny_cfg();
        cfg.num_heads = 3; // does not divide 8
        assert!(cfg.validate().is_err());
        let cfg = tiny_cfg();
        let acfg = AdapterConfig {
            rank: 8,
            ..Default::default()
        };
        assert!(acfg.validate(&cfg).is_err());
    }
}
