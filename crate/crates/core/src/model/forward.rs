//! Forward passes: attention, FFN, residual layer norm, adapter insertion,
//! and the teacher-forced sequence loss with gradients.

use super::{AdapterConfig, ModelConfig, ParameterStore};
use crate::autodiff::{causal_mask, Gradients, Graph, NodeId, StoreKind};
use crate::error::{Error, Result};
use crate::tensor::{Mat, Real};
use crate::tokenizer::{TokenId, BOS_ID, EOS_ID};
use std::collections::HashMap;

/// Attention sub-layer flavors; the mask is employed only in the masked
/// decoder self-attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    SelfAttn,
    MaskedSelfAttn,
    CrossAttn,
}

/// A graph under construction against a backbone and an optional active
/// task adapter. Parameter nodes are created once and shared, so tied uses
/// (token embedding as output head) accumulate gradients correctly.
pub struct ForwardCtx<'a, F: Real> {
    pub graph: Graph<F>,
    pub backbone: &'a ParameterStore<F>,
    pub adapter: Option<&'a ParameterStore<F>>,
    pub cfg: &'a ModelConfig,
    pub acfg: &'a AdapterConfig,
    cache: HashMap<(StoreKind, usize), NodeId>,
}

impl<'a, F: Real> ForwardCtx<'a, F> {
    pub fn new(
        backbone: &'a ParameterStore<F>,
        adapter: Option<&'a ParameterStore<F>>,
        cfg: &'a ModelConfig,
        acfg: &'a AdapterConfig,
    ) -> Self {
        ForwardCtx {
            graph: Graph::new(),
            backbone,
            adapter,
            cfg,
            acfg,
            cache: HashMap::new(),
        }
    }

    pub fn param(&mut self, name: &str) -> Result<NodeId> {
        let idx = self
            .backbone
            .idx_of(name)
            .ok_or_else(|| Error::Shape(format!("missing backbone tensor {name}")))?;
        Ok(*self
            .cache
            .entry((StoreKind::Backbone, idx))
            .or_insert_with(|| {
                self.graph
                    .param(StoreKind::Backbone, idx, self.backbone.tensor(idx).data.clone())
            }))
    }

    fn adapter_param(&mut self, name: &str) -> Option<NodeId> {
        let store = self.adapter?;
        let idx = store.idx_of(name)?;
        Some(*self.cache.entry((StoreKind::Adapter, idx)).or_insert_with(|| {
            self.graph
                .param(StoreKind::Adapter, idx, store.tensor(idx).data.clone())
        }))
    }

    pub fn input(&mut self, m: Mat<F>) -> NodeId {
        self.graph.input(m)
    }
}

/// Scaled dot-product attention with `num_heads` column-block heads,
/// concatenated and projected by `wo`. `prefix` names the parameter group,
/// e.g. `enc.0.mhsa`.
pub fn multi_head_attention<F: Real>(
    ctx: &mut ForwardCtx<'_, F>,
    h_q: NodeId,
    h_k: NodeId,
    h_v: NodeId,
    prefix: &str,
    mask: Option<Mat<F>>,
) -> Result<NodeId> {
    let d = ctx.cfg.d_model;
    let heads = ctx.cfg.num_heads;
    let hd = ctx.cfg.head_dim();
    let (n_q, dq) = ctx.graph.value(h_q).shape();
    let (n_k, dk) = ctx.graph.value(h_k).shape();
    let (n_v, dv) = ctx.graph.value(h_v).shape();
    if dq != d || dk != d || dv != d {
        return Err(Error::Shape(format!(
            "attention inputs must have width {d}, got {dq}/{dk}/{dv}"
        )));
    }
    if n_k != n_v {
        return Err(Error::Shape(format!(
            "key/value length mismatch: {n_k} vs {n_v}"
        )));
    }
    if let Some(m) = &mask {
        if m.shape() != (n_q, n_k) {
            return Err(Error::Shape(format!(
                "mask shape {:?} vs scores ({n_q}, {n_k})",
                m.shape()
            )));
        }
    }

    let wq = ctx.param(&format!("{prefix}.wq"))?;
    let wk = ctx.param(&format!("{prefix}.wk"))?;
    let wv = ctx.param(&format!("{prefix}.wv"))?;
    let wo = ctx.param(&format!("{prefix}.wo"))?;

    let q = ctx.graph.matmul(h_q, wq);
    let k = ctx.graph.matmul(h_k, wk);
    let v = ctx.graph.matmul(h_v, wv);

    let scale = F::from_f64c(1.0 / (hd as f64).sqrt());
    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qi = ctx.graph.slice_cols(q, h * hd, hd);
        let ki = ctx.graph.slice_cols(k, h * hd, hd);
        let vi = ctx.graph.slice_cols(v, h * hd, hd);
        let scores = ctx.graph.matmul_nt(qi, ki);
        let scaled = ctx.graph.scale(scores, scale);
        let probs = ctx.graph.softmax_rows(scaled, mask.clone());
        head_outputs.push(ctx.graph.matmul(probs, vi));
    }
    let concat = ctx.graph.concat_cols(&head_outputs);
    Ok(ctx.graph.matmul(concat, wo))
}

/// Position-wise FFN: gelu(h W1 + b1) W2 + b2.
pub fn feed_forward<F: Real>(ctx: &mut ForwardCtx<'_, F>, h: NodeId, prefix: &str) -> Result<NodeId> {
    let w1 = ctx.param(&format!("{prefix}.w1"))?;
    let b1 = ctx.param(&format!("{prefix}.b1"))?;
    let w2 = ctx.param(&format!("{prefix}.w2"))?;
    let b2 = ctx.param(&format!("{prefix}.b2"))?;
    let x = ctx.graph.matmul(h, w1);
    let x = ctx.graph.add_bias(x, b1);
    let x = ctx.graph.gelu(x);
    let x = ctx.graph.matmul(x, w2);
    Ok(ctx.graph.add_bias(x, b2))
}

/// Residual connection followed by layer normalization: LN(S(h) + h).
pub fn rcln<F: Real>(
    ctx: &mut ForwardCtx<'_, F>,
    h: NodeId,
    sublayer_out: NodeId,
    ln_prefix: &str,
) -> Result<NodeId> {
    if ctx.graph.value(h).shape() != ctx.graph.value(sublayer_out).shape() {
        return Err(Error::Shape("rcln operand shapes differ".into()));
    }
    let scale = ctx.param(&format!("{ln_prefix}.scale"))?;
    let shift = ctx.param(&format!("{ln_prefix}.shift"))?;
    let sum = ctx.graph.add(sublayer_out, h);
    Ok(ctx.graph.layer_norm(sum, scale, shift))
}

/// Low-rank adapter: (h W_down) W_up, with an optional internal residual.
/// Errors when no adapter store is active or the site has no tensors.
pub fn adapter_apply<F: Real>(ctx: &mut ForwardCtx<'_, F>, h: NodeId, site: &str) -> Result<NodeId> {
    let down = ctx
        .adapter_param(&format!("{site}.adapter.down"))
        .ok_or_else(|| Error::Shape(format!("no adapter tensors for site {site}")))?;
    let up = ctx
        .adapter_param(&format!("{site}.adapter.up"))
        .ok_or_else(|| Error::Shape(format!("no adapter tensors for site {site}")))?;
    let mid = ctx.graph.matmul(h, down);
    let core = ctx.graph.matmul(mid, up);
    Ok(if ctx.acfg.internal_residual {
        ctx.graph.add(h, core)
    } else {
        core
    })
}

/// Inside insertion: LN(Adapter(S(h)) + h) when a task adapter is active,
/// plain rcln otherwise. `site` is the sub-layer key, e.g. `dec.1.mhca`.
pub fn inside_sublayer<F: Real>(
    ctx: &mut ForwardCtx<'_, F>,
    h: NodeId,
    sublayer_out: NodeId,
    site: &str,
) -> Result<NodeId> {
    let has_adapter = ctx
        .adapter
        .map(|a| a.idx_of(&format!("{site}.adapter.down")).is_some())
        .unwrap_or(false);
    let inner = if has_adapter {
        adapter_apply(ctx, sublayer_out, site)?
    } else {
        sublayer_out
    };
    rcln(ctx, h, inner, &format!("{site}_ln"))
}

fn check_ids<F: Real>(ctx: &ForwardCtx<'_, F>, ids: &[TokenId], what: &str) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::Shape(format!("{what} token sequence is empty")));
    }
    if ids.len() > ctx.cfg.max_positions {
        return Err(Error::Shape(format!(
            "{what} length {} exceeds max_positions {}",
            ids.len(),
            ctx.cfg.max_positions
        )));
    }
    if let Some(&bad) = ids.iter().find(|&&t| (t as usize) >= ctx.cfg.vocab_size) {
        return Err(Error::Shape(format!(
            "{what} token id {bad} out of vocab {}",
            ctx.cfg.vocab_size
        )));
    }
    Ok(())
}

fn to_usize(ids: &[TokenId]) -> Vec<usize> {
    ids.iter().map(|&t| t as usize).collect()
}

/// Encoder stack over query tokens; returns the final hidden states node.
pub fn encoder_hidden<F: Real>(ctx: &mut ForwardCtx<'_, F>, ids: &[TokenId]) -> Result<NodeId> {
    check_ids(ctx, ids, "encoder input")?;
    let tok = ctx.param("embed.tok")?;
    let pos = ctx.param("embed.pos_enc")?;
    let te = ctx.graph.embed(tok, &to_usize(ids));
    let positions: Vec<usize> = (0..ids.len()).collect();
    let pe = ctx.graph.embed(pos, &positions);
    let mut h = ctx.graph.add(te, pe);
    for i in 0..ctx.cfg.num_layers {
        let site = format!("enc.{i}.mhsa");
        let s = multi_head_attention(ctx, h, h, h, &site, None)?;
        h = inside_sublayer(ctx, h, s, &site)?;
        let site = format!("enc.{i}.ffn");
        let f = feed_forward(ctx, h, &site)?;
        h = inside_sublayer(ctx, h, f, &site)?;
    }
    Ok(h)
}

/// Decoder stack over (BOS-prefixed) target tokens given encoder output.
pub fn decoder_hidden<F: Real>(
    ctx: &mut ForwardCtx<'_, F>,
    enc_out: NodeId,
    dec_ids: &[TokenId],
) -> Result<NodeId> {
    check_ids(ctx, dec_ids, "decoder input")?;
    let tok = ctx.param("embed.tok")?;
    let pos = ctx.param("embed.pos_dec")?;
    let te = ctx.graph.embed(tok, &to_usize(dec_ids));
    let positions: Vec<usize> = (0..dec_ids.len()).collect();
    let pe = ctx.graph.embed(pos, &positions);
    let mut h = ctx.graph.add(te, pe);
    let n = dec_ids.len();
    for i in 0..ctx.cfg.num_layers {
        let site = format!("dec.{i}.mmhsa");
        let s = multi_head_attention(ctx, h, h, h, &site, Some(causal_mask(n)))?;
        h = inside_sublayer(ctx, h, s, &site)?;
        let site = format!("dec.{i}.mhca");
        let s = multi_head_attention(ctx, h, enc_out, enc_out, &site, None)?;
        h = inside_sublayer(ctx, h, s, &site)?;
        let site = format!("dec.{i}.ffn");
        let f = feed_forward(ctx, h, &site)?;
        h = inside_sublayer(ctx, h, f, &site)?;
    }
    Ok(h)
}

/// Output logits via the tied token embedding.
pub fn output_logits<F: Real>(ctx: &mut ForwardCtx<'_, F>, hidden: NodeId) -> Result<NodeId> {
    let tok = ctx.param("embed.tok")?;
    Ok(ctx.graph.matmul_nt(hidden, tok))
}

pub struct TrainOutput<F: Real> {
    pub loss: f64,
    pub grads: Gradients<F>,
}

/// Teacher-forced sequence loss: mean token NLL of `target_ids ++ [EOS]`
/// given `[BOS] ++ target_ids` on the decoder side, plus gradients for every
/// unfrozen tensor. Frozen tensors produce no gradient.
pub fn seq2seq_loss<F: Real>(
    backbone: &ParameterStore<F>,
    adapter: Option<&ParameterStore<F>>,
    cfg: &ModelConfig,
    acfg: &AdapterConfig,
    query_ids: &[TokenId],
    target_ids: &[TokenId],
    label_smoothing: f64,
) -> Result<TrainOutput<F>> {
    if target_ids.is_empty() {
        return Err(Error::Shape("empty target sequence".into()));
    }
    let mut ctx = ForwardCtx::new(backbone, adapter, cfg, acfg);
    let mut dec_in = Vec::with_capacity(target_ids.len() + 1);
    dec_in.push(BOS_ID);
    dec_in.extend_from_slice(target_ids);
    let mut labels = to_usize(target_ids);
    labels.push(EOS_ID as usize);

    let enc = encoder_hidden(&mut ctx, query_ids)?;
    let hidden = decoder_hidden(&mut ctx, enc, &dec_in)?;
    let logits = output_logits(&mut ctx, hidden)?;
    let loss_node = ctx
        .graph
        .cross_entropy(logits, &labels, F::from_f64c(label_smoothing))?;
    let loss = ctx.graph.scalar(loss_node).to_f64c();
    let grads = ctx.graph.backward(loss_node, backbone, adapter);
    Ok(TrainOutput { loss, grads })
}

/// Forward-only loss, used for logging and quick evaluation.
pub fn seq2seq_nll<F: Real>(
    backbone: &ParameterStore<F>,
    adapter: Option<&ParameterStore<F>>,
    cfg: &ModelConfig,
    acfg: &AdapterConfig,
    query_ids: &[TokenId],
    target_ids: &[TokenId],
) -> Result<f64> {
    let mut ctx = ForwardCtx::new(backbone, adapter, cfg, acfg);
    let mut dec_in = Vec::with_capacity(target_ids.len() + 1);
    dec_in.push(BOS_ID);
    dec_in.extend_from_slice(target_ids);
    let mut labels = to_usize(target_ids);
    labels.push(EOS_ID as usize);
    let enc = encoder_hidden(&mut ctx, query_ids)?;
    let hidden = decoder_hidden(&mut ctx, enc, &dec_in)?;
    let logits = output_logits(&mut ctx, hidden)?;
    let loss_node = ctx.graph.cross_entropy(logits, &labels, F::zero())?;
    Ok(ctx.graph.scalar(loss_node).to_f64c())
}

/// Bundled model view for inference.
#[derive(Clone, Copy)]
pub struct SeqModel<'a, F: Real> {
    pub backbone: &'a ParameterStore<F>,
    pub adapter: Option<&'a ParameterStore<F>>,
    pub cfg: &'a ModelConfig,
    pub acfg: &'a AdapterConfig,
}

impl<'a, F: Real> SeqModel<'a, F> {
    /// Run the encoder once; the returned matrix can be reused across all
    /// decode steps of a query.
    pub fn encode(&self, query_ids: &[TokenId]) -> Result<Mat<F>> {
        let mut ctx = ForwardCtx::new(self.backbone, self.adapter, self.cfg, self.acfg);
        let enc = encoder_hidden(&mut ctx, query_ids)?;
        Ok(ctx.graph.value(enc).clone())
    }

    /// Log-probabilities of the next token after `prefix` (generated tokens
    /// so far, no BOS). Computed in f64 for stable, comparable scores.
    pub fn next_logprobs(&self, enc_out: &Mat<F>, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let mut ctx = ForwardCtx::new(self.backbone, self.adapter, self.cfg, self.acfg);
        let enc = ctx.input(enc_out.clone());
        let mut dec_in = Vec::with_capacity(prefix.len() + 1);
        dec_in.push(BOS_ID);
        dec_in.extend_from_slice(prefix);
        let hidden = decoder_hidden(&mut ctx, enc, &dec_in)?;
        // Only the last position feeds the next-token distribution.
        let h = ctx.graph.value(hidden);
        let last = Mat::from_vec(1, h.cols(), h.row(h.rows() - 1).to_vec());
        let tok = self
            .backbone
            .get("embed.tok")
            .ok_or_else(|| Error::Shape("missing embed.tok".into()))?;
        let logits = last.matmul_nt(tok);
        let row: Vec<f64> = logits.row(0).iter().map(|x| x.to_f64c()).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        Ok(row.into_iter().map(|l| l - log_sum).collect())
    }

    /// Full teacher-forced logits, exposed for tests.
    pub fn forward_logits(&self, query_ids: &[TokenId], dec_ids: &[TokenId]) -> Result<Mat<F>> {
        let mut ctx = ForwardCtx::new(self.backbone, self.adapter, self.cfg, self.acfg);
        let enc = encoder_hidden(&mut ctx, query_ids)?;
        let hidden = decoder_hidden(&mut ctx, enc, &dec_ids.to_vec())?;
        let logits = output_logits(&mut ctx, hidden)?;
        Ok(ctx.graph.value(logits).clone())
    }
}
