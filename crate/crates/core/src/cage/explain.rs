//! Fine-tuning the explanation LM and generating explanations with it.

use std::collections::HashMap;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::context::{encode_context, ConditioningMode};
use crate::corpus::{Annotation, Example};
use crate::error::{Error, Result};
use crate::metrics::{bleu, perplexity};
use crate::neural::{AdamW, LanguageModel, LmHyper, Parameters, Strategy, TrainSchedule};
use crate::text::normalize;
use crate::tokenizer::{Vocabulary, EOS};

/// Maximum number of generated explanation tokens.
pub const MAX_GENERATE: usize = 20;

/// A tokenized training pair: `[BOS] context` and `explanation [EOS]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LmPair {
    pub id: String,
    pub context: Vec<usize>,
    pub explanation: Vec<usize>,
}

/// Tokenizes `(example, annotation)` pairs for the LM. Rationalization uses
/// the gold label. Explanations longer than half the window are cut.
pub fn lm_pairs(
    vocab: &Vocabulary,
    data: &[(Example, Annotation)],
    mode: ConditioningMode,
    window: usize,
) -> Result<Vec<LmPair>> {
    let cap = (window / 2).max(2);
    data.iter()
        .map(|(example, annotation)| {
            let mut explanation = vocab.encode(&annotation.open_ended);
            if explanation.len() + 1 > cap {
                warn!("explanation of {} cut to {} tokens", example.id, cap - 1);
                explanation.truncate(cap - 1);
            }
            explanation.push(EOS);
            let label = match mode {
                ConditioningMode::Reasoning => None,
                ConditioningMode::Rationalization => Some(example.answer_index.ok_or_else(|| {
                    Error::Input(format!("rationalization training needs a gold answer for {}", example.id))
                })?),
            };
            let context = encode_context(vocab, example, mode, label, window, explanation.len())?;
            Ok(LmPair { id: example.id.clone(), context, explanation })
        })
        .collect()
}

/// Mini-batch trainer: token-weighted mean loss per batch, AdamW on a
/// warmup-then-linear-decay schedule.
pub struct LmTrainer {
    pub model: LanguageModel,
    optim: AdamW,
    schedule: TrainSchedule,
    batch: usize,
    rng: ChaCha8Rng,
}

impl LmTrainer {
    pub fn new(model: LanguageModel, hyper: &LmHyper, total_steps: u64) -> Result<Self> {
        let schedule = TrainSchedule::new(hyper.peak_lr, hyper.warmup_proportion, hyper.weight_decay, total_steps);
        schedule.validate()?;
        let optim = AdamW::new(model.params());
        let rng = ChaCha8Rng::seed_from_u64(model.config().seed ^ 0x11_7e_a4);
        Ok(LmTrainer { model, optim, schedule, batch: hyper.batch_size.max(1), rng })
    }

    pub fn step_count(&self) -> u64 {
        self.model.params().step
    }

    /// One optimizer step on `batch`; returns its token-weighted mean loss.
    pub fn step(&mut self, batch: &[&LmPair]) -> Result<f64> {
        let tokens: usize = batch.iter().map(|p| p.explanation.len()).sum();
        if tokens == 0 {
            return Err(Error::Empty("batch explanation tokens"));
        }
        let mut grads = self.model.params().zeros_like();
        let mut loss = 0.0;
        for pair in batch {
            let w = pair.explanation.len() as f64 / tokens as f64;
            loss += w * self.model.accumulate_gradients(
                &pair.context,
                &pair.explanation,
                &mut grads,
                w,
                Some(&mut self.rng),
            )?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite { tensor: "language model loss".into(), step: self.step_count() });
        }
        self.optim.step(self.model.params_mut(), &grads, &self.schedule)?;
        Ok(loss)
    }

    /// One shuffled pass; returns the mean batch loss.
    pub fn epoch(&mut self, pairs: &[LmPair]) -> Result<f64> {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.batch) {
            let batch: Vec<&LmPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            total += self.step(&batch)?;
            batches += 1;
        }
        Ok(total / batches.max(1) as f64)
    }
}

/// Dev statistics recorded after each epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct LmEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_perplexity: f64,
    pub dev_bleu: f64,
}

pub struct FinetunedLm {
    pub model: LanguageModel,
    pub epochs: Vec<LmEpoch>,
    pub selected_epoch: usize,
}

/// Lowest perplexity, then higher BLEU, then the earlier epoch.
pub fn select_epoch(epochs: &[LmEpoch]) -> Option<usize> {
    epochs
        .iter()
        .min_by(|a, b| {
            a.dev_perplexity
                .total_cmp(&b.dev_perplexity)
                .then(b.dev_bleu.total_cmp(&a.dev_bleu))
                .then(a.epoch.cmp(&b.epoch))
        })
        .map(|e| e.epoch)
}

/// Greedy continuation of every dev context, decoded and normalized.
fn dev_bleu(model: &LanguageModel, vocab: &Vocabulary, dev: &[LmPair], max_generate: usize) -> Result<f64> {
    let mut cands = Vec::with_capacity(dev.len());
    let mut refs = Vec::with_capacity(dev.len());
    for pair in dev {
        let room = model.config().max_len.saturating_sub(pair.context.len()).min(max_generate);
        let out = model.generate(&pair.context, room, Strategy::Greedy)?;
        cands.push(normalize(&decode_explanation(vocab, &out)?));
        let reference = &pair.explanation[..pair.explanation.len() - 1];
        refs.push(normalize(&vocab.decode(reference)?));
    }
    bleu(&cands, &refs, 4)
}

/// Trains on `train` for `hyper.epochs` epochs, scoring dev perplexity and
/// greedy BLEU after each, and returns the selected epoch's weights.
pub fn finetune_lm(
    hyper: &LmHyper,
    vocab: &Vocabulary,
    train: &[(Example, Annotation)],
    dev: &[(Example, Annotation)],
    mode: ConditioningMode,
) -> Result<FinetunedLm> {
    if train.is_empty() {
        return Err(Error::Empty("language model training set"));
    }
    if dev.is_empty() {
        return Err(Error::Empty("language model dev set"));
    }
    if hyper.epochs == 0 {
        return Err(Error::Argument("at least one epoch is required".into()));
    }
    let window = hyper.model.max_len;
    let train_pairs = lm_pairs(vocab, train, mode, window)?;
    let dev_pairs = lm_pairs(vocab, dev, mode, window)?;
    let steps = (train_pairs.len().div_ceil(hyper.batch_size.max(1)) * hyper.epochs) as u64;
    let mut trainer = LmTrainer::new(LanguageModel::new(hyper.model.clone())?, hyper, steps)?;
    let dev_scored: Vec<(Vec<usize>, Vec<usize>)> =
        dev_pairs.iter().map(|p| (p.context.clone(), p.explanation.clone())).collect();

    let mut epochs = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(usize, Parameters)> = None;
    for epoch in 1..=hyper.epochs {
        let train_loss = trainer.epoch(&train_pairs)?;
        let dev_perplexity = perplexity(&trainer.model, &dev_scored)?;
        let dev_bleu = dev_bleu(&trainer.model, vocab, &dev_pairs, hyper.max_generate)?;
        info!("lm epoch {epoch}: loss {train_loss:.4}, dev perplexity {dev_perplexity:.3}, dev bleu {dev_bleu:.4}");
        epochs.push(LmEpoch { epoch, train_loss, dev_perplexity, dev_bleu });
        if select_epoch(&epochs) == Some(epoch) {
            best = Some((epoch, trainer.model.params().clone()));
        }
    }
    let (selected_epoch, params) = best.expect("at least one epoch ran");
    let model = LanguageModel::with_parameters(hyper.model.clone(), &params)?;
    Ok(FinetunedLm { model, epochs, selected_epoch })
}

/// Decodes a generation, dropping the trailing EOS.
pub fn decode_explanation(vocab: &Vocabulary, tokens: &[usize]) -> Result<String> {
    let body = match tokens.split_last() {
        Some((&EOS, init)) => init,
        _ => tokens,
    };
    vocab.decode(body)
}

/// Greedy explanations for every example. Rationalization reads labels from
/// `labels`, which must cover every example; gold answers are never read.
/// Empty generations are kept as empty strings.
pub fn generate_explanations(
    model: &LanguageModel,
    vocab: &Vocabulary,
    examples: &[Example],
    mode: ConditioningMode,
    labels: Option<&HashMap<String, usize>>,
) -> Result<HashMap<String, String>> {
    if mode == ConditioningMode::Rationalization && labels.is_none() {
        return Err(Error::Argument("rationalization needs a label source".into()));
    }
    let window = model.config().max_len;
    let mut out = HashMap::with_capacity(examples.len());
    for example in examples {
        let label = match (mode, labels) {
            (ConditioningMode::Rationalization, Some(map)) => Some(
                *map.get(&example.id)
                    .ok_or_else(|| Error::Input(format!("no label for {}", example.id)))?,
            ),
            _ => None,
        };
        let context = encode_context(vocab, example, mode, label, window, MAX_GENERATE)?;
        let tokens = model.generate(&context, MAX_GENERATE, Strategy::Greedy)?;
        out.insert(example.id.clone(), decode_explanation(vocab, &tokens)?);
    }
    Ok(out)
}

/// Reasoning-mode explanations for examples from another task. The model
/// is used as is.
pub fn transfer_explanations(
    model: &LanguageModel,
    vocab: &Vocabulary,
    out_of_domain: &[Example],
) -> Result<HashMap<String, String>> {
    generate_explanations(model, vocab, out_of_domain, ConditioningMode::Reasoning, None)
}
