//! The transformer stack shared by the decoder language model and the
//! encoder classifier. Pre-norm blocks: `x + attn(ln(x))`, `x + mlp(ln(x))`.

use rand::Rng;

use super::config::ModelConfig;
use super::params::{Mat, ParamId, Parameters};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug)]
struct Block {
    ln1_g: ParamId,
    ln1_b: ParamId,
    w_qkv: ParamId,
    b_qkv: ParamId,
    w_o: ParamId,
    b_o: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w_fc: ParamId,
    b_fc: ParamId,
    w_proj: ParamId,
    b_proj: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct Stack {
    tok_emb: ParamId,
    pos_emb: ParamId,
    seg_emb: Option<ParamId>,
    blocks: Vec<Block>,
    lnf_g: ParamId,
    lnf_b: ParamId,
    n_heads: usize,
    max_len: usize,
}

/// Per-call switches for [`Stack::forward`].
pub(crate) struct Forward<'a, R> {
    pub causal: bool,
    pub dropout: Option<(f64, &'a mut R)>,
    pub attention: Option<&'a mut Vec<Var>>,
}

impl Stack {
    /// Registers freshly initialized tensors: N(0, 0.02) weights, zero
    /// biases, unit layer-norm scales.
    pub fn init(
        config: &ModelConfig,
        params: &mut Parameters,
        segments: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let d = config.d_model;
        let ones = || Mat::ones((1, d));
        let zeros = |n| Mat::zeros((1, n));
        let tok_emb = params.add_normal("tok_emb", (config.vocab_size, d), INIT_STD, rng);
        let pos_emb = params.add_normal("pos_emb", (config.max_len, d), INIT_STD, rng);
        let seg_emb = segments.then(|| params.add_normal("seg_emb", (2, d), INIT_STD, rng));
        let blocks = (0..config.n_layers)
            .map(|i| {
                let p = |s: &str| format!("h{i}.{s}");
                Block {
                    ln1_g: params.add(p("ln1.g"), ones()),
                    ln1_b: params.add(p("ln1.b"), zeros(d)),
                    w_qkv: params.add_normal(&p("attn.w_qkv"), (d, 3 * d), INIT_STD, rng),
                    b_qkv: params.add(p("attn.b_qkv"), zeros(3 * d)),
                    w_o: params.add_normal(&p("attn.w_o"), (d, d), INIT_STD, rng),
                    b_o: params.add(p("attn.b_o"), zeros(d)),
                    ln2_g: params.add(p("ln2.g"), ones()),
                    ln2_b: params.add(p("ln2.b"), zeros(d)),
                    w_fc: params.add_normal(&p("mlp.w_fc"), (d, config.d_ff), INIT_STD, rng),
                    b_fc: params.add(p("mlp.b_fc"), zeros(config.d_ff)),
                    w_proj: params.add_normal(&p("mlp.w_proj"), (config.d_ff, d), INIT_STD, rng),
                    b_proj: params.add(p("mlp.b_proj"), zeros(d)),
                }
            })
            .collect();
        Stack {
            tok_emb,
            pos_emb,
            seg_emb,
            blocks,
            lnf_g: params.add("ln_f.g", ones()),
            lnf_b: params.add("ln_f.b", zeros(d)),
            n_heads: config.n_heads,
            max_len: config.max_len,
        }
    }

    /// Hidden states `T × d_model` after the final layer norm.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape<'_>,
        tokens: &[usize],
        segments: Option<&[usize]>,
        mut opts: Forward<'_, R>,
    ) -> Result<Var> {
        let t = tokens.len();
        if t > self.max_len {
            return Err(Error::Length { len: t, limit: self.max_len });
        }
        let tok_table = tape.param(self.tok_emb);
        let vocab = tape.value(tok_table).nrows();
        if let Some(&bad) = tokens.iter().find(|&&id| id >= vocab) {
            return Err(Error::Range(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        let pos_table = tape.param(self.pos_emb);
        let tok = tape.gather(tok_table, tokens);
        let positions: Vec<usize> = (0..t).collect();
        let pos = tape.gather(pos_table, &positions);
        let mut x = tape.add(tok, pos);
        if let (Some(seg_id), Some(segs)) = (self.seg_emb, segments) {
            let seg_table = tape.param(seg_id);
            let seg = tape.gather(seg_table, segs);
            x = tape.add(x, seg);
        }
        x = maybe_dropout(tape, x, &mut opts);

        for block in &self.blocks {
            let (g, b) = (tape.param(block.ln1_g), tape.param(block.ln1_b));
            let h = tape.layer_norm(x, g, b);
            let a = self.attention(tape, h, block, &mut opts);
            let a = maybe_dropout(tape, a, &mut opts);
            x = tape.add(x, a);

            let (g, b) = (tape.param(block.ln2_g), tape.param(block.ln2_b));
            let h = tape.layer_norm(x, g, b);
            let (w, bias) = (tape.param(block.w_fc), tape.param(block.b_fc));
            let h = tape.linear(h, w, bias);
            let h = tape.gelu(h);
            let (w, bias) = (tape.param(block.w_proj), tape.param(block.b_proj));
            let h = tape.linear(h, w, bias);
            let h = maybe_dropout(tape, h, &mut opts);
            x = tape.add(x, h);
        }
        let (g, b) = (tape.param(self.lnf_g), tape.param(self.lnf_b));
        Ok(tape.layer_norm(x, g, b))
    }

    fn attention<R: Rng>(
        &self,
        tape: &mut Tape<'_>,
        h: Var,
        block: &Block,
        opts: &mut Forward<'_, R>,
    ) -> Var {
        let d = tape.value(h).ncols();
        let dh = d / self.n_heads;
        let (w, b) = (tape.param(block.w_qkv), tape.param(block.b_qkv));
        let qkv = tape.linear(h, w, b);
        let scale = 1.0 / (dh as f64).sqrt();
        let heads: Vec<Var> = (0..self.n_heads)
            .map(|head| {
                let q = tape.slice_cols(qkv, head * dh, dh);
                let k = tape.slice_cols(qkv, d + head * dh, dh);
                let v = tape.slice_cols(qkv, 2 * d + head * dh, dh);
                let scores = tape.matmul_t(q, k, scale);
                let probs = tape.softmax(scores, opts.causal);
                if let Some(probe) = opts.attention.as_deref_mut() {
                    probe.push(probs);
                }
                tape.matmul(probs, v)
            })
            .collect();
        let merged = tape.concat_cols(&heads);
        let (w, b) = (tape.param(block.w_o), tape.param(block.b_o));
        tape.linear(merged, w, b)
    }
}

fn maybe_dropout<R: Rng>(tape: &mut Tape<'_>, x: Var, opts: &mut Forward<'_, R>) -> Var {
    match opts.dropout.as_mut() {
        Some((p, rng)) => tape.dropout(x, *p, *rng),
        None => x,
    }
}

/// Looks up every tensor a fresh model would register and checks shapes.
pub(crate) fn check_layout(expected: &Parameters, found: &Parameters) -> Result<()> {
    for (_, name, tensor) in expected.iter() {
        let other = found
            .by_name(name)
            .ok_or_else(|| Error::Input(format!("checkpoint lacks tensor {name}")))?;
        if other.dim() != tensor.dim() {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: tensor.dim(),
                found: other.dim(),
            });
        }
    }
    Ok(())
}
