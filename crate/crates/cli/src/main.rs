//! `cage`: every stage of the explain-then-predict pipeline from the shell.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or validation
//! errors. Relative input paths that do not exist are looked up under
//! `$CAGE_DATA_DIR`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use cage_annotate::{router, serve, AnnotationService, ServiceConfig};
use cage_core::cage::{
    generated_records, load_generated, load_predictions, perturb_misleading, predict, prediction_records,
    run_with_base, train_classifier, transfer_explanations, variant_sets, write_generated, write_predictions,
    ConditioningMode, Datasets, ExplanationInput, PipelineSpec,
};
use cage_core::cage::{choice_list, finetune_lm, generate_explanations};
use cage_core::corpus::{join, load_annotations, load_examples, write_annotations, Annotation, DatasetVariant, Example};
use cage_core::metrics::{accuracy, round6, text_bleu, to_fixed_json, write_report};
use cage_core::neural::{
    grad_check, Checkpoint, Classifier, ClassifierInput, GradCheckOptions, GradCheckReport, LanguageModel, ModelConfig,
    ModelKind, Preset,
};
use cage_core::quality::{containment_stats, length_analysis, overlap_stats, validate_annotation, Rule};
use cage_core::tokenizer::{Vocabulary, BOS, CLS, EOS, SEP};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

const DATA_DIR_ENV: &str = "CAGE_DATA_DIR";

#[derive(Parser)]
#[command(name = "cage", version, about = "Explain-then-predict commonsense question answering")]
struct Cli {
    /// Log progress (info level) to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check annotations against the collection rules; exits 2 if any fail.
    Validate(ValidateArgs),
    /// Overlap statistics between explanations and question/choices.
    Stats(StatsArgs),
    /// Fine-tune the explanation language model.
    TrainLm(TrainLmArgs),
    /// Generate explanations with a trained language model.
    Generate(GenerateArgs),
    /// Train the answer classifier.
    TrainClf(TrainClfArgs),
    /// Score a trained classifier on labelled examples.
    Eval(EvalArgs),
    /// Run both phases from a spec file and write a metrics report.
    Pipeline(PipelineArgs),
    /// Rewrite a sample of explanations so they argue for a distractor.
    Perturb(PerturbArgs),
    /// Reasoning-mode explanations for examples from another task.
    Transfer(TransferArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Compare analytic and finite-difference gradients of tiny models.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// examples.jsonl
    #[arg(long)]
    examples: PathBuf,
    /// annotations.jsonl
    #[arg(long)]
    annotations: PathBuf,
    /// Write the per-record report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    examples: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Output JSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainLmArgs {
    /// Training examples.
    #[arg(long)]
    examples: PathBuf,
    /// Training explanations.
    #[arg(long)]
    annotations: PathBuf,
    /// Examples for epoch selection (defaults to the training set).
    #[arg(long, requires = "dev_annotations")]
    dev_examples: Option<PathBuf>,
    #[arg(long, requires = "dev_examples")]
    dev_annotations: Option<PathBuf>,
    /// More examples whose words join the vocabulary (repeatable).
    #[arg(long)]
    extra_examples: Vec<PathBuf>,
    /// reasoning | rationalization
    #[arg(long, value_parser = enum_arg::<ConditioningMode>, default_value = "reasoning")]
    mode: ConditioningMode,
    /// paper | desk | tiny
    #[arg(long, value_parser = enum_arg::<Preset>, default_value = "desk")]
    preset: Preset,
    /// Override the preset's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Language model checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    examples: PathBuf,
    /// reasoning | rationalization
    #[arg(long, value_parser = enum_arg::<ConditioningMode>, default_value = "reasoning")]
    mode: ConditioningMode,
    /// predictions.jsonl supplying the answer that rationalization explains.
    #[arg(long, conflicts_with = "gold_labels")]
    labels: Option<PathBuf>,
    /// Rationalize the gold answers instead.
    #[arg(long)]
    gold_labels: bool,
    /// Reference explanations; reports BLEU when given.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// generated_explanations.jsonl to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifierInputArgs {
    /// Human explanations, rendered under --variant.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Generated explanations (generated_explanations.jsonl).
    #[arg(long, conflicts_with = "annotations")]
    explanations: Option<PathBuf>,
    /// baseline | open_ended | selected | limited_open_ended |
    /// open_ended_without_question | selected_without_question
    #[arg(long, value_parser = enum_arg::<DatasetVariant>, default_value = "baseline")]
    variant: DatasetVariant,
    /// paper | desk | tiny
    #[arg(long, value_parser = enum_arg::<Preset>, default_value = "desk")]
    preset: Preset,
}

#[derive(Args)]
struct TrainClfArgs {
    #[arg(long)]
    examples: PathBuf,
    #[command(flatten)]
    input: ClassifierInputArgs,
    /// More examples whose words join the vocabulary (repeatable).
    #[arg(long)]
    extra_examples: Vec<PathBuf>,
    /// Override the preset's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Classifier checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    examples: PathBuf,
    #[command(flatten)]
    input: ClassifierInputArgs,
    /// predictions.jsonl to write.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Metrics JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML spec file. Relative data paths resolve against $CAGE_DATA_DIR,
    /// else the directory holding the pipeline spec file.
    #[arg(long)]
    spec: PathBuf,
    /// Override the seed given in the pipeline spec file.
    #[arg(long)]
    seed: Option<u64>,
    /// report.json to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write generated_explanations.jsonl here.
    #[arg(long)]
    generated: Option<PathBuf>,
    /// Also write predictions.jsonl here.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Also save the language model checkpoint here.
    #[arg(long)]
    lm_out: Option<PathBuf>,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    examples: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Share of annotated examples to rewrite.
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturbed annotations.jsonl to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    /// Language model checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Out-of-domain examples, any number of choices.
    #[arg(long)]
    examples: PathBuf,
    /// generated_explanations.jsonl to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    examples: PathBuf,
    /// Accepted annotations, appended as JSONL.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 15)]
    lease_minutes: u64,
    /// Directory of UI assets served under /.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GradCheckArgs {
    /// lm | classifier | both
    #[arg(long, default_value = "both", value_parser = ["lm", "classifier", "both"])]
    model: String,
    /// Coordinates sampled per tensor.
    #[arg(long, default_value_t = 32)]
    coords: usize,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-tensor errors as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<cage_core::Error> for Failure {
    fn from(e: cage_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn enum_arg<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

/// Relative paths missing from the working directory fall back to the data
/// directory.
fn input(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            return Path::new(&dir).join(path);
        }
    }
    path.to_path_buf()
}

fn examples(path: &Path) -> Result<Vec<Example>, Failure> {
    Ok(load_examples(input(path))?)
}

fn annotations(path: &Path) -> Result<HashMap<String, Annotation>, Failure> {
    Ok(load_annotations(input(path))?)
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut text = to_fixed_json(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn pct(x: f64) -> String {
    format!("{x:.1}%")
}

fn validate(args: ValidateArgs) -> Outcome {
    let examples = examples(&args.examples)?;
    let anns = annotations(&args.annotations)?;
    let mut records = Vec::new();
    let mut failed = 0;
    for example in &examples {
        let Some(annotation) = anns.get(&example.id) else { continue };
        let (passed, failures) = match annotation.check_bounds(example) {
            Err(e) => (false, vec![json!({"rule": "bounds", "reason": e.to_string()})]),
            Ok(()) => {
                let report = validate_annotation(example, annotation);
                let failures = Rule::ALL
                    .iter()
                    .map(|&r| report.rule(r))
                    .filter(|r| !r.passed)
                    .map(|r| json!({"rule": r.rule, "reason": r.reason}))
                    .collect();
                (report.passed, failures)
            }
        };
        if !passed {
            failed += 1;
            let rules: Vec<String> = failures
                .iter()
                .map(|f| format!("{} ({})", f["rule"].as_str().unwrap_or_default(), f["reason"].as_str().unwrap_or_default()))
                .collect();
            println!("{}: {}", example.id, rules.join("; "));
        }
        records.push(json!({"id": example.id, "passed": passed, "failures": failures}));
    }
    let orphans = anns.keys().filter(|id| !examples.iter().any(|e| &e.id == *id)).count();
    println!("{} annotations checked, {} passed, {failed} failed, {orphans} without an example", records.len(), records.len() - failed);
    if let Some(out) = &args.out {
        let report = json!({"checked": records.len(), "failed": failed, "orphans": orphans, "records": records});
        write_json(out, &report)?;
    }
    if failed > 0 {
        return Err(Failure::Data(format!("{failed} annotations failed validation")));
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Outcome {
    let examples = examples(&args.examples)?;
    let joined = join(&examples, &annotations(&args.annotations)?)?;
    let anns: HashMap<String, Annotation> = joined.into_iter().map(|(e, a)| (e.id, a)).collect();
    let stats = overlap_stats(&examples, &anns)?;
    write_json(&args.out, &stats)?;
    println!("explanations:          {}", stats.n);
    println!("contain the answer:    {}", pct(stats.pct_contains_answer));
    println!("contain a distractor:  {}", pct(stats.pct_contains_distractor));
    println!("contain either:        {}", pct(stats.pct_contains_either));
    println!("share a question bigram:  {}", pct(stats.pct_bigram));
    println!("share a question trigram: {}", pct(stats.pct_trigram));
    Ok(())
}

/// Vocabulary over questions, choice lists, explanation texts and the
/// prompt words.
fn build_vocabulary<'a>(examples: impl IntoIterator<Item = &'a Example>, texts: impl IntoIterator<Item = String>) -> Vocabulary {
    let mut corpus: Vec<String> = vec!["commonsense says because or".into()];
    for e in examples {
        corpus.push(e.question.clone());
        corpus.push(choice_list(&e.choices));
    }
    let mut texts: Vec<String> = texts.into_iter().collect();
    texts.sort();
    corpus.extend(texts);
    Vocabulary::build(&corpus, 1, usize::MAX)
}

fn extra(paths: &[PathBuf]) -> Result<Vec<Example>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(examples(p)?);
    }
    Ok(out)
}

fn train_lm(args: TrainLmArgs) -> Outcome {
    let train_examples = examples(&args.examples)?;
    let train = join(&train_examples, &annotations(&args.annotations)?)?;
    let dev = match (&args.dev_examples, &args.dev_annotations) {
        (Some(e), Some(a)) => join(&examples(e)?, &annotations(a)?)?,
        _ => train.clone(),
    };
    let extra = extra(&args.extra_examples)?;
    let vocab = build_vocabulary(
        train.iter().chain(&dev).map(|(e, _)| e).chain(&extra),
        train.iter().chain(&dev).map(|(_, a)| a.open_ended.clone()),
    );
    let mut hyper = args.preset.lm(vocab.len(), args.seed);
    if let Some(n) = args.epochs {
        hyper.epochs = n;
    }
    let tuned = finetune_lm(&hyper, &vocab, &train, &dev, args.mode)?;
    Checkpoint::from_lm(&tuned.model, &vocab).save(&args.out)?;
    println!("epoch  train loss  dev perplexity  dev BLEU");
    for e in &tuned.epochs {
        println!("{:>5}  {:>10.4}  {:>14.3}  {:>8.2}", e.epoch, e.train_loss, e.dev_perplexity, 100.0 * e.dev_bleu);
    }
    println!("selected epoch {}; vocabulary {}; wrote {}", tuned.selected_epoch, vocab.len(), args.out.display());
    Ok(())
}

fn load_lm(path: &Path) -> Result<(LanguageModel, Vocabulary), Failure> {
    let ckpt = Checkpoint::load(input(path))?;
    if ckpt.kind != ModelKind::LanguageModel {
        return Err(Failure::Data(format!("{} is not a language model checkpoint", path.display())));
    }
    Ok((ckpt.language_model()?, ckpt.vocabulary()?))
}

fn label_map(examples: &[Example], path: &Path) -> Result<HashMap<String, usize>, Failure> {
    let by_id: HashMap<&str, &Example> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut out = HashMap::new();
    for p in load_predictions(input(path))? {
        let Some(example) = by_id.get(p.id.as_str()) else { continue };
        let index = example
            .choices
            .iter()
            .position(|c| *c == p.predicted)
            .ok_or_else(|| Failure::Data(format!("prediction {:?} is not a choice of {}", p.predicted, p.id)))?;
        out.insert(p.id, index);
    }
    Ok(out)
}

fn generate(args: GenerateArgs) -> Outcome {
    let (model, vocab) = load_lm(&args.checkpoint)?;
    let examples = examples(&args.examples)?;
    let labels = match (args.mode, &args.labels, args.gold_labels) {
        (ConditioningMode::Reasoning, None, false) => None,
        (ConditioningMode::Reasoning, _, _) => {
            return Err(Failure::Usage("labels only apply to rationalization".into()));
        }
        (ConditioningMode::Rationalization, Some(path), _) => Some(label_map(&examples, path)?),
        (ConditioningMode::Rationalization, None, true) => Some(
            examples
                .iter()
                .map(|e| e.answer_index.map(|g| (e.id.clone(), g)).ok_or_else(|| format!("{} has no gold answer", e.id)))
                .collect::<Result<_, _>>()
                .map_err(Failure::Data)?,
        ),
        (ConditioningMode::Rationalization, None, false) => {
            return Err(Failure::Usage("rationalization needs --labels or --gold-labels".into()));
        }
    };
    let map = generate_explanations(&model, &vocab, &examples, args.mode, labels.as_ref())?;
    write_generated(&args.out, &generated_records(&examples, &map, args.mode))?;
    println!("generated {} explanations ({}) into {}", map.len(), args.mode.as_str(), args.out.display());
    if let Some(path) = &args.annotations {
        let refs = annotations(path)?;
        let (cands, refs): (Vec<&str>, Vec<&str>) = examples
            .iter()
            .filter_map(|e| Some((map.get(&e.id)?.as_str(), refs.get(&e.id)?.open_ended.as_str())))
            .unzip();
        if !cands.is_empty() {
            println!("BLEU against {} references: {:.2}", cands.len(), 100.0 * text_bleu(&cands, &refs)?);
        }
    }
    Ok(())
}

fn transfer(args: TransferArgs) -> Outcome {
    let (model, vocab) = load_lm(&args.checkpoint)?;
    let examples = examples(&args.examples)?;
    let map = transfer_explanations(&model, &vocab, &examples)?;
    write_generated(&args.out, &generated_records(&examples, &map, ConditioningMode::Reasoning))?;
    let empty = map.values().filter(|t| t.is_empty()).count();
    println!("generated {} explanations into {} ({empty} empty)", map.len(), args.out.display());
    Ok(())
}

/// Explanation texts for the classifier, owned so `ExplanationInput` can
/// borrow them.
enum LoadedInput {
    None,
    Human(HashMap<String, Annotation>, DatasetVariant),
    Generated(HashMap<String, String>),
}

impl LoadedInput {
    fn load(args: &ClassifierInputArgs) -> Result<Self, Failure> {
        if let Some(path) = &args.explanations {
            let map = load_generated(input(path))?.into_iter().map(|r| (r.id, r.explanation)).collect();
            return Ok(LoadedInput::Generated(map));
        }
        match (&args.annotations, args.variant) {
            (_, DatasetVariant::Baseline) => Ok(LoadedInput::None),
            (Some(path), variant) => Ok(LoadedInput::Human(annotations(path)?, variant)),
            (None, variant) => Err(Failure::Usage(format!("variant {variant:?} needs --annotations"))),
        }
    }

    fn as_input(&self) -> ExplanationInput<'_> {
        match self {
            LoadedInput::None => ExplanationInput::None,
            LoadedInput::Human(map, variant) => ExplanationInput::Human(map, *variant),
            LoadedInput::Generated(map) => ExplanationInput::Generated(map),
        }
    }

    fn texts(&self) -> Vec<String> {
        match self {
            LoadedInput::None => Vec::new(),
            LoadedInput::Human(map, _) => map.values().map(|a| a.open_ended.clone()).collect(),
            LoadedInput::Generated(map) => map.values().cloned().collect(),
        }
    }
}

fn train_clf(args: TrainClfArgs) -> Outcome {
    let examples = examples(&args.examples)?;
    let extra = extra(&args.extra_examples)?;
    let loaded = LoadedInput::load(&args.input)?;
    let vocab = build_vocabulary(examples.iter().chain(&extra), loaded.texts());
    let mut hyper = args.input.preset.classifier(vocab.len(), args.seed);
    if let Some(n) = args.epochs {
        hyper.epochs = n;
    }
    let (sets, _) = variant_sets(&vocab, &hyper, &examples, loaded.as_input())?;
    let trained = train_classifier(&hyper, &sets, None)?;
    Checkpoint::from_classifier(&trained.model, &vocab).save(&args.out)?;
    println!("epoch  train loss");
    for e in &trained.epochs {
        println!("{:>5}  {:>10.4}", e.epoch, e.train_loss);
    }
    println!("trained on {} examples; vocabulary {}; wrote {}", sets.len(), vocab.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    accuracy: f64,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    containment: Option<cage_core::quality::ContainmentStats>,
    length_analysis: cage_core::quality::LengthAnalysis,
}

fn eval(args: EvalArgs) -> Outcome {
    let ckpt = Checkpoint::load(input(&args.checkpoint))?;
    if ckpt.kind != ModelKind::Classifier {
        return Err(Failure::Data(format!("{} is not a classifier checkpoint", args.checkpoint.display())));
    }
    let (model, vocab) = (ckpt.classifier()?, ckpt.vocabulary()?);
    let examples = examples(&args.examples)?;
    let loaded = LoadedInput::load(&args.input)?;
    let hyper = args.input.preset.classifier(vocab.len(), 0);
    let (sets, used) = variant_sets(&vocab, &hyper, &examples, loaded.as_input())?;
    let predictions = predict(&model, &sets)?;
    let indices: HashMap<String, usize> = predictions.iter().map(|(k, p)| (k.clone(), p.index)).collect();
    let gold: HashMap<String, usize> =
        examples.iter().filter_map(|e| e.answer_index.map(|g| (e.id.clone(), g))).collect();
    let acc = accuracy(&indices, &gold)?;
    let evaluated: Vec<Example> = examples.iter().filter(|e| indices.contains_key(&e.id)).cloned().collect();
    let containment = match loaded {
        LoadedInput::None => None,
        _ => Some(containment_stats(&used, &evaluated, &indices)?),
    };
    let report = EvalReport {
        accuracy: round6(acc),
        n: sets.len(),
        containment,
        length_analysis: length_analysis(&evaluated, &indices)?,
    };
    write_json(&args.out, &report)?;
    if let Some(path) = &args.predictions {
        write_predictions(path, &prediction_records(&examples, &predictions))?;
    }
    println!("accuracy {} on {} examples", pct(100.0 * acc), sets.len());
    Ok(())
}

fn pipeline(args: PipelineArgs) -> Outcome {
    let spec_path = input(&args.spec);
    let mut spec = PipelineSpec::load(&spec_path)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let base = match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => spec_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let data = Datasets::load(&spec, &base)?;
    let run = run_with_base(&spec, &data, &base)?;
    write_report(&run.report, &args.out)?;
    if let Some(path) = &args.generated {
        write_generated(path, &run.generated)?;
    }
    if let Some(path) = &args.predictions {
        write_predictions(path, &run.predictions)?;
    }
    if let Some(path) = &args.lm_out {
        match &run.language_model {
            Some(lm) => Checkpoint::from_lm(lm, &run.vocabulary).save(path)?,
            None => log::warn!("no language model in this run; {} not written", path.display()),
        }
    }
    let r = &run.report;
    println!("variant {:?}, explanations {:?}, seed {}", spec.variant, spec.explanation_source, spec.seed);
    println!("accuracy   {}  (train {}, eval {})", pct(100.0 * r.accuracy), r.n.train, r.n.eval);
    if let Some(b) = r.bleu {
        println!("BLEU       {:.2}", 100.0 * b);
    }
    if let Some(p) = r.perplexity {
        println!("perplexity {p:.3}");
    }
    if let Some(o) = &r.overlap {
        println!("explanations containing the answer {}", pct(o.pct_contains_answer));
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn perturb(args: PerturbArgs) -> Outcome {
    if !(0.0..=1.0).contains(&args.fraction) {
        return Err(Failure::Usage(format!("--fraction must lie in [0, 1], got {}", args.fraction)));
    }
    let examples = examples(&args.examples)?;
    let joined = join(&examples, &annotations(&args.annotations)?)?;
    let n = (args.fraction * joined.len() as f64).round() as usize;
    let (perturbed, ids) = perturb_misleading(&joined, n, args.seed)?;
    write_annotations(&args.out, perturbed.iter().map(|(_, a)| a))?;
    println!("rewrote {n} of {} explanations into {}", joined.len(), args.out.display());
    for id in ids.iter().take(5) {
        println!("  {id}");
    }
    if ids.len() > 5 {
        println!("  ... and {} more", ids.len() - 5);
    }
    Ok(())
}

fn serve_cmd(args: ServeArgs) -> Outcome {
    let examples = examples(&args.examples)?;
    let mut config = ServiceConfig::new(&args.store);
    config.lease = Duration::from_secs(args.lease_minutes * 60);
    let service = AnnotationService::open(examples, config)?;
    let progress = service.progress();
    let app = router(std::sync::Arc::new(service), args.static_dir.map(|d| input(&d)));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Data(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| Failure::Data(format!("cannot bind {}:{}: {e}", args.host, args.port)))?;
        let addr = listener.local_addr().map_err(|e| Failure::Data(e.to_string()))?;
        println!(
            "serving on http://{addr} ({} pending, {} accepted)",
            progress.pending, progress.accepted
        );
        serve(listener, app, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Failure::Data(e.to_string()))
    })
}

fn tiny_config(seed: u64) -> ModelConfig {
    ModelConfig { n_layers: 2, n_heads: 2, d_model: 16, d_ff: 32, max_len: 16, vocab_size: 50, dropout: 0.0, seed }
}

fn check_lm(options: GradCheckOptions) -> Result<GradCheckReport, Failure> {
    let mut lm = LanguageModel::new(tiny_config(options.seed))?;
    let (context, explanation) = ([BOS, 10, 11, 12, 13], [20, 21, 22, EOS]);
    let mut grads = lm.params().zeros_like();
    lm.accumulate_gradients(&context, &explanation, &mut grads, 1.0, None)?;
    Ok(grad_check(&mut lm, |m| m.params_mut(), |m| m.loss(&context, &explanation).unwrap_or(f64::NAN), &grads, options))
}

fn check_classifier(options: GradCheckOptions) -> Result<GradCheckReport, Failure> {
    let mut clf = Classifier::new(tiny_config(options.seed))?;
    let seq = |choice: usize| ClassifierInput {
        tokens: vec![CLS, 10, 11, SEP, 30, 31, SEP, choice],
        segments: vec![0, 0, 0, 0, 0, 0, 0, 1],
    };
    let inputs = [seq(40), seq(41), seq(42)];
    let mut grads = clf.params().zeros_like();
    clf.accumulate_gradients(&inputs, 1, &mut grads, 1.0, None)?;
    Ok(grad_check(&mut clf, |m| m.params_mut(), |m| m.loss(&inputs, 1).unwrap_or(f64::NAN), &grads, options))
}

fn grad_check_cmd(args: GradCheckArgs) -> Outcome {
    let options = GradCheckOptions { coords_per_tensor: args.coords, epsilon: args.epsilon, seed: args.seed, ..Default::default() };
    let mut results = Vec::new();
    if args.model != "classifier" {
        results.push(("lm", check_lm(options)?));
    }
    if args.model != "lm" {
        results.push(("classifier", check_classifier(options)?));
    }
    let mut worst: f64 = 0.0;
    let mut out = serde_json::Map::new();
    for (name, report) in &results {
        println!("{name}: max relative error {:.3e}", report.max_rel_error);
        for t in &report.tensors {
            println!("  {:<20} {:>4} coords  {:.3e}", t.name, t.coordinates, t.max_rel_error);
        }
        // NaN must fail the check
        worst = if report.max_rel_error.is_nan() { f64::NAN } else { worst.max(report.max_rel_error) };
        let tensors: Vec<_> = report
            .tensors
            .iter()
            .map(|t| json!({"name": t.name, "coordinates": t.coordinates, "max_rel_error": t.max_rel_error}))
            .collect();
        out.insert(name.to_string(), json!({"max_rel_error": report.max_rel_error, "tensors": tensors}));
    }
    if let Some(path) = &args.out {
        write_text(path, &(serde_json::to_string_pretty(&out).map_err(cage_core::Error::from)? + "\n"))?;
    }
    if !(worst < args.tolerance) {
        return Err(Failure::Data(format!("relative error {worst:.3e} exceeds {:.1e}", args.tolerance)));
    }
    println!("passed at tolerance {:.1e}", args.tolerance);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Stats(a) => stats(a),
        Command::TrainLm(a) => train_lm(a),
        Command::Generate(a) => generate(a),
        Command::TrainClf(a) => train_clf(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Perturb(a) => perturb(a),
        Command::Transfer(a) => transfer(a),
        Command::Serve(a) => serve_cmd(a),
        Command::GradCheck(a) => grad_check_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun with --help for usage.");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
