//! Classifier input assembly, training and prediction.

use std::collections::HashMap;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::neural::{argmax, AdamW, Classifier, ClassifierHyper, ClassifierInput, TrainSchedule};
use crate::tokenizer::{Vocabulary, CLS, SEP};

/// Lays out `[CLS] q [SEP] c` or `[CLS] q [SEP] e [SEP] c` within `max_len`,
/// cutting the explanation tail first and then the question tail. Choice
/// tokens are never cut.
pub fn assemble_input(
    question: &[usize],
    explanation: Option<&[usize]>,
    choice: &[usize],
    max_len: usize,
) -> Result<ClassifierInput> {
    let fixed = 2 + explanation.map_or(0, |_| 1) + choice.len();
    if fixed > max_len {
        return Err(Error::Input(format!(
            "choice of {} tokens cannot fit in {max_len} positions",
            choice.len()
        )));
    }
    let room = max_len - fixed;
    let q_keep = question.len().min(room);
    let e_keep = explanation.map_or(0, |e| e.len()).min(room - q_keep);

    let mut tokens = Vec::with_capacity(fixed + q_keep + e_keep);
    tokens.push(CLS);
    tokens.extend_from_slice(&question[..q_keep]);
    tokens.push(SEP);
    if let Some(e) = explanation {
        tokens.extend_from_slice(&e[..e_keep]);
        tokens.push(SEP);
    }
    let first_choice = tokens.len();
    tokens.extend_from_slice(choice);
    let segments = (0..tokens.len()).map(|i| (i >= first_choice) as usize).collect();
    Ok(ClassifierInput { tokens, segments })
}

/// Text-level wrapper over [`assemble_input`].
pub fn build_classifier_input(
    vocab: &Vocabulary,
    question: &str,
    explanation: Option<&str>,
    choice: &str,
    max_len: usize,
) -> Result<ClassifierInput> {
    let e = explanation.map(|e| vocab.encode(e));
    assemble_input(&vocab.encode(question), e.as_deref(), &vocab.encode(choice), max_len)
}

/// One example ready for the classifier: an input per choice.
#[derive(Clone, Debug)]
pub struct ChoiceSet {
    pub id: String,
    pub inputs: Vec<ClassifierInput>,
    pub gold: Option<usize>,
}

impl ChoiceSet {
    pub fn new(
        vocab: &Vocabulary,
        example: &Example,
        context: &str,
        explanation: Option<&str>,
        max_len: usize,
    ) -> Result<Self> {
        let q = vocab.encode(context);
        let e = explanation.map(|e| vocab.encode(e));
        let inputs = example
            .choices
            .iter()
            .map(|c| assemble_input(&q, e.as_deref(), &vocab.encode(c), max_len))
            .collect::<Result<_>>()?;
        Ok(ChoiceSet { id: example.id.clone(), inputs, gold: example.answer_index })
    }
}

/// Per-epoch training record.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: Option<f64>,
}

pub struct TrainedClassifier {
    pub model: Classifier,
    pub epochs: Vec<ClassifierEpoch>,
}

/// Cross-entropy training over per-choice scores with AdamW and the warmup
/// schedule. Every example needs a gold answer. The model after the last
/// epoch is returned; `dev` accuracy is recorded per epoch.
pub fn train_classifier(
    hyper: &ClassifierHyper,
    train: &[ChoiceSet],
    dev: Option<&[ChoiceSet]>,
) -> Result<TrainedClassifier> {
    if train.is_empty() {
        return Err(Error::Empty("classifier training set"));
    }
    let golds = train
        .iter()
        .map(|s| s.gold.ok_or_else(|| Error::Input(format!("training example {} has no gold answer", s.id))))
        .collect::<Result<Vec<_>>>()?;
    let batch = hyper.train_batch.max(1);
    let steps_per_epoch = train.len().div_ceil(batch);
    let schedule = TrainSchedule::new(
        hyper.peak_lr,
        hyper.warmup_proportion,
        hyper.weight_decay,
        (steps_per_epoch * hyper.epochs) as u64,
    );
    schedule.validate()?;
    let mut model = Classifier::new(hyper.model.clone())?;
    let mut optim = AdamW::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.model.seed ^ 0x5eed_c1a5);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(hyper.epochs);
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = model.params().zeros_like();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                total += model.accumulate_gradients(&train[i].inputs, golds[i], &mut grads, scale, Some(&mut rng))?;
            }
            optim.step(model.params_mut(), &grads, &schedule)?;
        }
        let train_loss = total / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite { tensor: "classifier loss".into(), step: model.params().step });
        }
        let dev_accuracy = match dev {
            Some(dev) if dev.iter().any(|s| s.gold.is_some()) => Some(set_accuracy(&model, dev)?),
            _ => None,
        };
        info!("classifier epoch {epoch}: loss {train_loss:.4}, dev accuracy {dev_accuracy:?}");
        epochs.push(ClassifierEpoch { epoch, train_loss, dev_accuracy });
    }
    Ok(TrainedClassifier { model, epochs })
}

/// A predicted choice with its raw per-choice scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub scores: Vec<f64>,
}

/// Argmax of the choice scores, lowest index on ties.
pub fn predict(model: &Classifier, sets: &[ChoiceSet]) -> Result<HashMap<String, Prediction>> {
    sets.iter()
        .map(|s| {
            let scores = model.scores(&s.inputs)?;
            Ok((s.id.clone(), Prediction { index: argmax(scores.iter().copied()), scores }))
        })
        .collect()
}

/// Accuracy over the sets that carry a gold answer.
pub fn set_accuracy(model: &Classifier, sets: &[ChoiceSet]) -> Result<f64> {
    let labelled: Vec<&ChoiceSet> = sets.iter().filter(|s| s.gold.is_some()).collect();
    if labelled.is_empty() {
        return Err(Error::Empty("labelled examples"));
    }
    let mut right = 0;
    for s in &labelled {
        let scores = model.scores(&s.inputs)?;
        right += (Some(argmax(scores)) == s.gold) as usize;
    }
    Ok(right as f64 / labelled.len() as f64)
}

/// Builds choice sets for `examples`, questions as context. With
/// `explanations`, every example must have one; missing ids are listed.
pub fn choice_sets(
    vocab: &Vocabulary,
    examples: &[Example],
    explanations: Option<&HashMap<String, String>>,
    max_len: usize,
) -> Result<Vec<ChoiceSet>> {
    if let Some(map) = explanations {
        let missing: Vec<&str> = examples
            .iter()
            .filter(|e| !map.contains_key(&e.id))
            .map(|e| e.id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Input(format!("missing explanations for: {}", missing.join(", "))));
        }
    }
    examples
        .iter()
        .map(|e| {
            let expl = explanations.map(|m| m[&e.id].as_str());
            ChoiceSet::new(vocab, e, &e.question, expl, max_len)
        })
        .collect()
}
