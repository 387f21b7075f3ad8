//! The two-phase explain-then-predict run and its spec file.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::classify::{predict, train_classifier, ChoiceSet, Prediction};
use super::context::{choice_list, ConditioningMode};
use super::explain::{finetune_lm, generate_explanations, lm_pairs, LmEpoch};
use super::io::{generated_records, prediction_records, GeneratedRecord, PredictionRecord};
use crate::corpus::{join, load_annotations, load_examples, materialize, Annotation, DatasetVariant, Example};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, perplexity, text_bleu, Counts, MetricsReport};
use crate::neural::{Checkpoint, Classifier, ClassifierHyper, LanguageModel, LmHyper, Preset};
use crate::quality::{containment_stats, length_analysis, overlap_stats, ContainmentStats, OverlapStats};
use crate::tokenizer::Vocabulary;

/// Where classifier explanations come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplanationSource {
    None,
    Human,
    GeneratedReasoning,
    GeneratedRationalization,
}

impl ExplanationSource {
    pub fn mode(self) -> Option<ConditioningMode> {
        match self {
            ExplanationSource::GeneratedReasoning => Some(ConditioningMode::Reasoning),
            ExplanationSource::GeneratedRationalization => Some(ConditioningMode::Rationalization),
            _ => None,
        }
    }
}

fn desk() -> Preset {
    Preset::Desk
}

/// A pipeline run as a flat TOML document. Relative paths resolve against
/// the directory handed to [`Datasets::load`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub variant: DatasetVariant,
    pub explanation_source: ExplanationSource,
    #[serde(default)]
    pub use_explanations_at_train: bool,
    #[serde(default)]
    pub use_explanations_at_eval: bool,
    #[serde(default = "desk")]
    pub lm_preset: Preset,
    #[serde(default = "desk")]
    pub classifier_preset: Preset,
    #[serde(default)]
    pub seed: u64,
    pub train_examples: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_annotations: Option<String>,
    pub eval_examples: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_annotations: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lm_checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lm_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier_epochs: Option<usize>,
}

impl PipelineSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: PipelineSpec = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec(e.to_string()))
    }

    /// Human explanations shown at evaluation time.
    pub fn is_oracle(&self) -> bool {
        self.explanation_source == ExplanationSource::Human && self.use_explanations_at_eval
    }

    pub fn validate(&self) -> Result<()> {
        let uses = self.use_explanations_at_train || self.use_explanations_at_eval;
        let fail = |m: &str| Err(Error::Spec(m.to_string()));
        match self.explanation_source {
            ExplanationSource::None => {
                if uses {
                    return fail("explanation_source = \"none\" cannot use explanations");
                }
                if self.variant != DatasetVariant::Baseline {
                    return fail("explanation_source = \"none\" requires variant = \"baseline\"");
                }
            }
            ExplanationSource::Human => {
                if self.variant == DatasetVariant::Baseline {
                    return fail("human explanations need a non-baseline variant");
                }
                if !uses {
                    return fail("human explanations are enabled in neither phase");
                }
                if self.use_explanations_at_train && self.train_annotations.is_none() {
                    return fail("explanations at train need train_annotations");
                }
                if self.use_explanations_at_eval && self.eval_annotations.is_none() {
                    return fail("explanations at eval need eval_annotations");
                }
            }
            ExplanationSource::GeneratedReasoning | ExplanationSource::GeneratedRationalization => {
                if self.variant != DatasetVariant::OpenEnded {
                    return fail("generated explanations require variant = \"open_ended\"");
                }
                if !uses {
                    return fail("generated explanations are enabled in neither phase");
                }
                if self.lm_checkpoint.is_none() && self.train_annotations.is_none() {
                    return fail("generated explanations need lm_checkpoint or train_annotations");
                }
            }
        }
        if self.lm_epochs == Some(0) || self.classifier_epochs == Some(0) {
            return fail("epoch overrides must be positive");
        }
        Ok(())
    }

    pub fn lm_hyper(&self, vocab_size: usize) -> LmHyper {
        let mut h = self.lm_preset.lm(vocab_size, self.seed);
        if let Some(e) = self.lm_epochs {
            h.epochs = e;
        }
        h
    }

    pub fn classifier_hyper(&self, vocab_size: usize) -> ClassifierHyper {
        let mut h = self.classifier_preset.classifier(vocab_size, self.seed);
        if let Some(e) = self.classifier_epochs {
            h.epochs = e;
        }
        h
    }
}

/// The data a run reads.
#[derive(Clone, Debug, Default)]
pub struct Datasets {
    pub train: Vec<Example>,
    pub train_annotations: HashMap<String, Annotation>,
    pub eval: Vec<Example>,
    pub eval_annotations: HashMap<String, Annotation>,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Datasets {
    pub fn load(spec: &PipelineSpec, base: &Path) -> Result<Self> {
        let anns = |p: &Option<String>| match p {
            Some(p) => load_annotations(resolve(base, p)),
            None => Ok(HashMap::new()),
        };
        Ok(Datasets {
            train: load_examples(resolve(base, &spec.train_examples))?,
            train_annotations: anns(&spec.train_annotations)?,
            eval: load_examples(resolve(base, &spec.eval_examples))?,
            eval_annotations: anns(&spec.eval_annotations)?,
        })
    }

    /// Every question and choice, the train explanations, the eval
    /// explanations when `with_eval_explanations`, and the prompt words.
    pub fn vocabulary(&self, with_eval_explanations: bool) -> Vocabulary {
        let mut corpus: Vec<String> = vec!["commonsense says because or".into()];
        for e in self.train.iter().chain(&self.eval) {
            corpus.push(e.question.clone());
            corpus.push(choice_list(&e.choices));
        }
        let mut anns: Vec<&Annotation> = self.train_annotations.values().collect();
        if with_eval_explanations {
            anns.extend(self.eval_annotations.values());
        }
        anns.sort_by(|a, b| a.example_id.cmp(&b.example_id));
        corpus.extend(anns.into_iter().map(|a| a.open_ended.clone()));
        Vocabulary::build(&corpus, 1, usize::MAX)
    }
}

/// Everything a run produces.
pub struct PipelineRun {
    pub report: MetricsReport,
    pub vocabulary: Vocabulary,
    pub classifier: Classifier,
    pub language_model: Option<LanguageModel>,
    pub lm_epochs: Vec<LmEpoch>,
    pub generated: Vec<GeneratedRecord>,
    pub predictions: Vec<PredictionRecord>,
}

fn gold_map(examples: &[Example]) -> HashMap<String, usize> {
    examples
        .iter()
        .filter_map(|e| e.answer_index.map(|g| (e.id.clone(), g)))
        .collect()
}

/// What the classifier reads next to each question.
#[derive(Clone, Copy, Debug)]
pub enum ExplanationInput<'a> {
    None,
    /// Human annotations rendered under a dataset variant.
    Human(&'a HashMap<String, Annotation>, DatasetVariant),
    /// Generated explanation text per example id.
    Generated(&'a HashMap<String, String>),
}

/// Choice sets for one phase, plus the explanation text each kept example
/// was given. Without explanations every example keeps its question; with
/// them the variant decides the text, and limited variants may drop
/// examples. Missing explanations are an error listing every id.
pub fn variant_sets(
    vocab: &Vocabulary,
    hyper: &ClassifierHyper,
    examples: &[Example],
    input: ExplanationInput<'_>,
) -> Result<(Vec<ChoiceSet>, HashMap<String, String>)> {
    let mut used = HashMap::new();
    if let ExplanationInput::None = input {
        let sets = examples
            .iter()
            .map(|e| ChoiceSet::new(vocab, e, &e.question, None, hyper.max_len_plain))
            .collect::<Result<_>>()?;
        return Ok((sets, used));
    }
    let mut missing = Vec::new();
    let mut sets = Vec::with_capacity(examples.len());
    for e in examples {
        let (context, explanation) = match input {
            ExplanationInput::None => unreachable!(),
            ExplanationInput::Generated(map) => match map.get(&e.id) {
                Some(text) => (e.question.clone(), Some(text.clone())),
                None => {
                    missing.push(e.id.as_str());
                    continue;
                }
            },
            ExplanationInput::Human(annotations, variant) => {
                let Some(ann) = annotations.get(&e.id) else {
                    missing.push(e.id.as_str());
                    continue;
                };
                match materialize(e, Some(ann), variant)? {
                    Some(m) => (m.context, m.explanation),
                    None => continue,
                }
            }
        };
        used.insert(e.id.clone(), explanation.clone().unwrap_or_else(|| context.clone()));
        sets.push(ChoiceSet::new(vocab, e, &context, explanation.as_deref(), hyper.max_len_explained)?);
    }
    if !missing.is_empty() {
        return Err(Error::Input(format!("missing explanations for: {}", missing.join(", "))));
    }
    Ok((sets, used))
}

fn phase_sets(
    spec: &PipelineSpec,
    vocab: &Vocabulary,
    hyper: &ClassifierHyper,
    examples: &[Example],
    annotations: &HashMap<String, Annotation>,
    generated: Option<&HashMap<String, String>>,
    use_explanations: bool,
) -> Result<(Vec<ChoiceSet>, HashMap<String, String>)> {
    let input = match (use_explanations, generated) {
        (false, _) => ExplanationInput::None,
        (true, Some(map)) => ExplanationInput::Generated(map),
        (true, None) => ExplanationInput::Human(annotations, spec.variant),
    };
    variant_sets(vocab, hyper, examples, input)
}

/// Overlap statistics over explanation texts, restricted to examples with a
/// gold answer.
fn text_overlap(examples: &[Example], texts: &HashMap<String, String>) -> Result<Option<OverlapStats>> {
    let anns: HashMap<String, Annotation> = examples
        .iter()
        .filter(|e| e.answer_index.is_some())
        .filter_map(|e| texts.get(&e.id).map(|t| (e.id.clone(), t)))
        .map(|(id, t)| Ok((id.clone(), Annotation::new(id, t.clone(), Vec::new())?)))
        .collect::<Result<_>>()?;
    if anns.is_empty() {
        return Ok(None);
    }
    overlap_stats(examples, &anns).map(Some)
}

/// Runs both phases: optional explanation generation, then classifier
/// training and evaluation.
pub fn run_pipeline(spec: &PipelineSpec, data: &Datasets) -> Result<PipelineRun> {
    run_with_base(spec, data, Path::new("."))
}

/// As [`run_pipeline`], resolving `lm_checkpoint` against `base`.
pub fn run_with_base(spec: &PipelineSpec, data: &Datasets, base: &Path) -> Result<PipelineRun> {
    spec.validate()?;
    if data.train.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    if data.eval.is_empty() {
        return Err(Error::Empty("evaluation examples"));
    }

    let mut language_model = None;
    let mut vocab = data.vocabulary(spec.use_explanations_at_eval);
    if let Some(path) = &spec.lm_checkpoint {
        let ckpt = Checkpoint::load(resolve(base, path))?;
        vocab = ckpt.vocabulary()?;
        language_model = Some(ckpt.language_model()?);
    }
    let clf_hyper = spec.classifier_hyper(vocab.len());

    // phase one: explanations from the LM
    let mut lm_epochs = Vec::new();
    let mut generated = Vec::new();
    let (mut train_generated, mut eval_generated) = (None, None);
    let (mut bleu, mut ppl) = (None, None);
    if let Some(mode) = spec.explanation_source.mode() {
        let eval_pairs = join(&data.eval, &data.eval_annotations)?;
        if language_model.is_none() {
            let train_pairs = join(&data.train, &data.train_annotations)?;
            // eval explanations steer the model only when the run reads them at eval
            let dev = if eval_pairs.is_empty() || !spec.use_explanations_at_eval { &train_pairs } else { &eval_pairs };
            let tuned = finetune_lm(&spec.lm_hyper(vocab.len()), &vocab, &train_pairs, dev, mode)?;
            info!("selected lm epoch {}", tuned.selected_epoch);
            lm_epochs = tuned.epochs;
            language_model = Some(tuned.model);
        }
        let lm = language_model.as_ref().expect("language model is present");
        if spec.use_explanations_at_train {
            let gold = gold_map(&data.train);
            let labels = (mode == ConditioningMode::Rationalization).then_some(&gold);
            let map = generate_explanations(lm, &vocab, &data.train, mode, labels)?;
            generated.extend(generated_records(&data.train, &map, mode));
            train_generated = Some(map);
        }
        if spec.use_explanations_at_eval {
            let labels = match mode {
                ConditioningMode::Reasoning => None,
                ConditioningMode::Rationalization => {
                    let (train_sets, _) =
                        phase_sets(spec, &vocab, &clf_hyper, &data.train, &HashMap::new(), None, false)?;
                    let (eval_sets, _) =
                        phase_sets(spec, &vocab, &clf_hyper, &data.eval, &HashMap::new(), None, false)?;
                    let baseline = train_classifier(&clf_hyper, &train_sets, None)?;
                    let preds = predict(&baseline.model, &eval_sets)?;
                    Some(preds.into_iter().map(|(id, p)| (id, p.index)).collect::<HashMap<_, _>>())
                }
            };
            let map = generate_explanations(lm, &vocab, &data.eval, mode, labels.as_ref())?;
            generated.extend(generated_records(&data.eval, &map, mode));
            let (cands, refs): (Vec<&str>, Vec<&str>) = data
                .eval
                .iter()
                .filter_map(|e| Some((map.get(&e.id)?.as_str(), data.eval_annotations.get(&e.id)?.open_ended.as_str())))
                .unzip();
            if !cands.is_empty() {
                bleu = Some(text_bleu(&cands, &refs)?);
            }
            eval_generated = Some(map);
        }
        if !eval_pairs.is_empty() {
            let pairs = lm_pairs(&vocab, &eval_pairs, mode, lm.config().max_len)?;
            let scored: Vec<_> = pairs.into_iter().map(|p| (p.context, p.explanation)).collect();
            ppl = Some(perplexity(lm, &scored)?);
        }
    }

    // phase two: the classifier
    let (train_sets, _) = phase_sets(
        spec,
        &vocab,
        &clf_hyper,
        &data.train,
        &data.train_annotations,
        train_generated.as_ref(),
        spec.use_explanations_at_train,
    )?;
    let (eval_sets, eval_used) = phase_sets(
        spec,
        &vocab,
        &clf_hyper,
        &data.eval,
        &data.eval_annotations,
        eval_generated.as_ref(),
        spec.use_explanations_at_eval,
    )?;
    let trained = train_classifier(&clf_hyper, &train_sets, None)?;
    let predictions: HashMap<String, Prediction> = predict(&trained.model, &eval_sets)?;
    let indices: HashMap<String, usize> = predictions.iter().map(|(k, p)| (k.clone(), p.index)).collect();
    let acc = accuracy(&indices, &gold_map(&data.eval))?;

    let evaluated: Vec<Example> = data.eval.iter().filter(|e| indices.contains_key(&e.id)).cloned().collect();
    let overlap = match spec.explanation_source {
        ExplanationSource::None => None,
        ExplanationSource::Human => {
            let texts: HashMap<String, String> = if data.eval_annotations.is_empty() {
                data.train_annotations.iter().map(|(k, a)| (k.clone(), a.open_ended.clone())).collect()
            } else {
                data.eval_annotations.iter().map(|(k, a)| (k.clone(), a.open_ended.clone())).collect()
            };
            let pool: Vec<Example> = if data.eval_annotations.is_empty() { data.train.clone() } else { data.eval.clone() };
            text_overlap(&pool, &texts)?
        }
        _ => match (&eval_generated, &train_generated) {
            (Some(map), _) => text_overlap(&data.eval, map)?,
            (None, Some(map)) => text_overlap(&data.train, map)?,
            (None, None) => None,
        },
    };
    let containment: Option<ContainmentStats> = if spec.use_explanations_at_eval && !eval_used.is_empty() {
        Some(containment_stats(&eval_used, &evaluated, &indices)?)
    } else {
        None
    };
    let lengths = length_analysis(&evaluated, &indices)?;

    let report = MetricsReport {
        spec: spec.clone(),
        accuracy: acc,
        bleu,
        perplexity: ppl,
        overlap,
        containment,
        length_analysis: Some(lengths),
        n: Counts { train: train_sets.len(), eval: eval_sets.len() },
    }
    .rounded();
    Ok(PipelineRun {
        report,
        vocabulary: vocab,
        classifier: trained.model,
        language_model,
        lm_epochs,
        generated,
        predictions: prediction_records(&data.eval, &predictions),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORACLE: &str = r#"
variant = "open_ended"
explanation_source = "human"
use_explanations_at_train = true
use_explanations_at_eval = true
classifier_preset = "tiny"
seed = 7
train_examples = "train.jsonl"
train_annotations = "train_annotations.jsonl"
eval_examples = "eval.jsonl"
eval_annotations = "eval_annotations.jsonl"
"#;

    #[test]
    fn spec_parses_and_round_trips() {
        let spec = PipelineSpec::from_toml(ORACLE).unwrap();
        assert!(spec.is_oracle());
        assert_eq!(spec.lm_preset, Preset::Desk);
        assert_eq!(spec.classifier_preset, Preset::Tiny);
        assert_eq!(PipelineSpec::from_toml(&spec.to_toml().unwrap()).unwrap(), spec);
    }

    #[test]
    fn spec_rejects_inconsistency() {
        let bad = ORACLE.replace("\"open_ended\"", "\"baseline\"");
        assert!(matches!(PipelineSpec::from_toml(&bad), Err(Error::Spec(_))));
        let bad = ORACLE.replace("\"human\"", "\"none\"");
        assert!(PipelineSpec::from_toml(&bad).is_err());
        let bad = format!("{ORACLE}\nmystery = 1\n");
        assert!(PipelineSpec::from_toml(&bad).is_err());
        let gen = ORACLE.replace("\"human\"", "\"generated-rationalization\"");
        let spec = PipelineSpec::from_toml(&gen).unwrap();
        assert_eq!(spec.explanation_source.mode(), Some(ConditioningMode::Rationalization));
    }
}
