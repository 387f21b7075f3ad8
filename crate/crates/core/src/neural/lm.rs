//! Causal transformer language model over explanation text.

use ndarray::Axis;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::params::{Gradients, Mat, ParamId, Parameters};
use super::tape::{log_softmax_at, softmax_rows, Tape, Var};
use super::transformer::{check_layout, Forward, Stack};
use crate::error::{Error, Result};
use crate::tokenizer::EOS;

/// Decoding rule for [`LanguageModel::generate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    /// Most likely token; ties go to the lowest id.
    Greedy,
    Sample { temperature: f64, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct LanguageModel {
    config: ModelConfig,
    params: Parameters,
    stack: Stack,
    w_out: ParamId,
    b_out: ParamId,
}

impl LanguageModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Parameters::new();
        let stack = Stack::init(&config, &mut params, false, &mut rng);
        let w_out = params.add_normal("lm_head.w", (config.d_model, config.vocab_size), 0.02, &mut rng);
        let b_out = params.add("lm_head.b", Mat::zeros((1, config.vocab_size)));
        Ok(LanguageModel { config, params, stack, w_out, b_out })
    }

    /// Builds a model for `config` and loads `params` into it.
    pub fn with_parameters(config: ModelConfig, params: &Parameters) -> Result<Self> {
        let mut model = Self::new(config)?;
        check_layout(&model.params, params)?;
        model.params.copy_from(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    fn hidden<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        tokens: &[usize],
        dropout: Option<&mut ChaCha8Rng>,
        attention: Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let dropout = match dropout {
            Some(rng) if self.config.dropout > 0.0 => Some((self.config.dropout, rng)),
            _ => None,
        };
        self.stack.forward(
            tape,
            tokens,
            None,
            Forward { causal: true, dropout, attention },
        )
    }

    fn project(&self, tape: &mut Tape<'_>, hidden: Var) -> Var {
        let (w, b) = (tape.param(self.w_out), tape.param(self.b_out));
        tape.linear(hidden, w, b)
    }

    /// Next-token logits for every position: row `t` conditions on tokens `0..=t`.
    pub fn logits(&self, tokens: &[usize]) -> Result<Mat> {
        let mut tape = Tape::new(&self.params);
        let h = self.hidden(&mut tape, tokens, None, None)?;
        let out = self.project(&mut tape, h);
        Ok(tape.value(out).clone())
    }

    fn last_logits(&self, tokens: &[usize]) -> Result<Mat> {
        let mut tape = Tape::new(&self.params);
        let h = self.hidden(&mut tape, tokens, None, None)?;
        let last = tape.select_rows(h, &[tokens.len() - 1]);
        let out = self.project(&mut tape, last);
        Ok(tape.value(out).clone())
    }

    /// Attention weights of every layer and head, in that order.
    pub fn attention_maps(&self, tokens: &[usize]) -> Result<Vec<Mat>> {
        let mut tape = Tape::new(&self.params);
        let mut probe = Vec::new();
        self.hidden(&mut tape, tokens, None, Some(&mut probe))?;
        Ok(probe.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    /// Input sequence and the rows whose predictions are scored.
    fn loss_layout(&self, context: &[usize], explanation: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        if explanation.is_empty() {
            return Err(Error::Empty("explanation"));
        }
        if context.is_empty() {
            return Err(Error::Empty("context"));
        }
        let total = context.len() + explanation.len();
        if total > self.config.max_len {
            return Err(Error::Length { len: total, limit: self.config.max_len });
        }
        let mut input = context.to_vec();
        input.extend_from_slice(&explanation[..explanation.len() - 1]);
        let rows = (context.len() - 1..input.len()).collect();
        Ok((input, rows))
    }

    fn loss_var<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        context: &[usize],
        explanation: &[usize],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let (input, rows) = self.loss_layout(context, explanation)?;
        let h = self.hidden(tape, &input, dropout, None)?;
        let h = tape.select_rows(h, &rows);
        let logits = self.project(tape, h);
        Ok(tape.cross_entropy(logits, explanation))
    }

    /// Mean negative log-likelihood of the explanation tokens given the
    /// context. Context positions condition but are never scored.
    pub fn loss(&self, context: &[usize], explanation: &[usize]) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let loss = self.loss_var(&mut tape, context, explanation, None)?;
        Ok(tape.scalar(loss))
    }

    /// Adds `scale * d loss / d params` into `grads` and returns the loss.
    pub fn accumulate_gradients(
        &self,
        context: &[usize],
        explanation: &[usize],
        grads: &mut Gradients,
        scale: f64,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let loss = self.loss_var(&mut tape, context, explanation, dropout)?;
        tape.backward(loss, grads, scale);
        Ok(tape.scalar(loss))
    }

    /// `log P(e_i | context, e_<i)` for every explanation token.
    pub fn explanation_log_probs(&self, context: &[usize], explanation: &[usize]) -> Result<Vec<f64>> {
        let (input, rows) = self.loss_layout(context, explanation)?;
        let mut tape = Tape::new(&self.params);
        let h = self.hidden(&mut tape, &input, None, None)?;
        let h = tape.select_rows(h, &rows);
        let logits = self.project(&mut tape, h);
        let logits = tape.value(logits);
        Ok(logits
            .axis_iter(Axis(0))
            .zip(explanation)
            .map(|(row, &t)| log_softmax_at(row, t))
            .collect())
    }

    /// Continues `context` until EOS or `max_len` new tokens. The returned
    /// continuation includes the EOS when one is produced.
    pub fn generate(&self, context: &[usize], max_len: usize, strategy: Strategy) -> Result<Vec<usize>> {
        if max_len == 0 {
            return Ok(Vec::new());
        }
        if context.is_empty() {
            return Err(Error::Empty("context"));
        }
        if context.len() + max_len > self.config.max_len {
            return Err(Error::Length {
                len: context.len() + max_len,
                limit: self.config.max_len,
            });
        }
        let mut rng = match strategy {
            Strategy::Sample { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Strategy::Greedy => None,
        };
        let mut seq = context.to_vec();
        let mut out = Vec::with_capacity(max_len);
        while out.len() < max_len {
            let logits = self.last_logits(&seq)?;
            let row = logits.row(0);
            let next = match (strategy, rng.as_mut()) {
                (Strategy::Sample { temperature, .. }, Some(rng)) => {
                    let scaled = row.mapv(|v| v / temperature.max(1e-8)).insert_axis(Axis(0));
                    let probs = softmax_rows(&scaled, false);
                    WeightedIndex::new(probs.row(0).iter().copied())
                        .map_err(|e| Error::Input(format!("sampling distribution: {e}")))?
                        .sample(rng)
                }
                _ => argmax(row.iter().copied()),
            };
            out.push(next);
            if next == EOS {
                break;
            }
            seq.push(next);
        }
        Ok(out)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
