//! Acceptance criteria 1 to 12, one PASS/FAIL line each.
//!
//! Criterion 10 needs the public CoS-E v1.0 train split and reads its paths
//! from `COSE_EXAMPLES` (CommonsenseQA examples in examples.jsonl form) and
//! `COSE_ANNOTATIONS`; it is skipped when they are unset.

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use cage_annotate::{router, serve, AnnotationService, ServiceConfig};
use cage_core::cage::{
    build_context, lm_pairs, perturb_misleading, run_pipeline, set_accuracy, variant_sets, ConditioningMode, Datasets,
    ExplanationInput, ExplanationSource, LmTrainer, PipelineSpec, MAX_GENERATE,
};
use cage_core::corpus::{
    join, load_annotations, load_examples, write_annotations, write_examples, Annotation, DatasetVariant, Example, Span,
};
use cage_core::metrics::{bleu, perplexity};
use cage_core::neural::{
    grad_check, Classifier, ClassifierInput, GradCheckOptions, LanguageModel, ModelConfig, Preset, Strategy,
};
use cage_core::quality::{overlap_stats, validate_annotation, Rule};
use cage_core::synthetic;
use cage_core::tokenizer::{Vocabulary, BOS, CLS, EOS, SEP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn(&mut Shared) -> Verdict;

/// State reused across criteria: the synthetic task and its baseline.
#[derive(Default)]
struct Shared {
    baseline_accuracy: Option<f64>,
    oracle: Option<cage_core::cage::PipelineRun>,
    oracle_spec: Option<PipelineSpec>,
    data: Option<Datasets>,
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn hamburger_example() -> Example {
    Example::new(
        "q1",
        "While eating a hamburger with friends, what are people trying to do?",
        vec!["have fun".into(), "tasty".into(), "indigestion".into()],
        Some(0),
    )
    .unwrap()
}

fn template_strings(_: &mut Shared) -> Verdict {
    let ex = hamburger_example();
    let reasoning = build_context(&ex, ConditioningMode::Reasoning, None).unwrap();
    let rationalization = build_context(&ex, ConditioningMode::Rationalization, Some(0)).unwrap();
    let want_re = "While eating a hamburger with friends, what are people trying to do? have fun, tasty, or indigestion? commonsense says";
    let want_ra = "While eating a hamburger with friends, what are people trying to do? have fun, tasty, or indigestion? have fun because";
    verdict(
        reasoning == want_re && rationalization == want_ra,
        format!("reasoning {:?}, rationalization {:?}", reasoning == want_re, rationalization == want_ra),
    )
}

fn filter_suite(_: &mut Shared) -> Verdict {
    let good = "Usually a hamburger with friends indicates a good time.";
    let span = vec![Span(15, 37)];
    // (explanation, spans, failing rules)
    let cases: Vec<(&str, Vec<Span>, Vec<Rule>)> = vec![
        (good, span.clone(), vec![]),
        (good, vec![], vec![Rule::R1]),
        (good, vec![Span(0, 1)], vec![]),
        (good, span.clone(), vec![]),
        ("good time", span.clone(), vec![Rule::R2]),
        ("friends make eating fun", span.clone(), vec![]),
        ("people enjoy sharing food with friends", span.clone(), vec![]),
        ("eating a hamburger with friends", span.clone(), vec![Rule::R3]),
        ("eating a hamburger with friends happily", span.clone(), vec![]),
        ("friends laugh together while they eat", span.clone(), vec![]),
        ("have fun is the only option that is correct", span.clone(), vec![Rule::R4]),
        ("HAVE FUN is the only option that is obvious.", span.clone(), vec![Rule::R4]),
    ];
    let ex = hamburger_example();
    let mut wrong = Vec::new();
    for (i, (text, spans, expected)) in cases.iter().enumerate() {
        let ann = Annotation::new("q1", *text, spans.clone()).unwrap();
        let report = validate_annotation(&ex, &ann);
        let failed: Vec<Rule> = report.failed().collect();
        if &failed != expected || report.passed != expected.is_empty() {
            wrong.push(format!("case {i} {text:?}: failed {failed:?}, expected {expected:?}"));
        }
    }
    verdict(wrong.is_empty(), if wrong.is_empty() { format!("{} cases", cases.len()) } else { wrong.join("; ") })
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn bleu_oracle(_: &mut Shared) -> Verdict {
    let x = vec![words("the cat sat on the mat today")];
    let identity = bleu(&x, &x, 4).unwrap();
    let disjoint = bleu(&[words("a b c d e")], &[words("v w x y z")], 4).unwrap();
    let hand = bleu(&[words("a b c d e")], &[words("a b c d f")], 4).unwrap();
    let want = 0.2f64.powf(0.25);
    verdict(
        identity == 1.0 && disjoint == 0.0 && (hand - want).abs() < 1e-9,
        format!("identity {identity}, disjoint {disjoint}, hand {hand:.12} vs {want:.12}"),
    )
}

fn perplexity_oracle(_: &mut Shared) -> Verdict {
    let mut detail = Vec::new();
    let mut ok = true;
    for v in [10usize, 100] {
        let config = ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            max_len: 32,
            vocab_size: v,
            dropout: 0.0,
            seed: v as u64,
        };
        let mut lm = LanguageModel::new(config).unwrap();
        lm.params_mut().by_name_mut("lm_head.w").unwrap().fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(v as u64);
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = (0..8)
            .map(|_| {
                let mut ctx = vec![BOS];
                ctx.extend((0..rng.random_range(1..8)).map(|_| rng.random_range(6..v)));
                let expl = (0..rng.random_range(1..8)).map(|_| rng.random_range(0..v)).collect();
                (ctx, expl)
            })
            .collect();
        let ppl = perplexity(&lm, &pairs).unwrap();
        let rel = (ppl - v as f64).abs() / v as f64;
        ok &= rel < 1e-6;
        detail.push(format!("V={v}: {ppl:.9} (rel {rel:.1e})"));
    }
    verdict(ok, detail.join(", "))
}

fn tiny_config(vocab: usize) -> ModelConfig {
    ModelConfig { n_layers: 2, n_heads: 2, d_model: 16, d_ff: 32, max_len: 16, vocab_size: vocab, dropout: 0.0, seed: 42 }
}

fn gradient_check(_: &mut Shared) -> Verdict {
    let options = |seed| GradCheckOptions { seed, ..GradCheckOptions::default() };
    let mut lm = LanguageModel::new(tiny_config(50)).unwrap();
    let (ctx, expl) = ([BOS, 10, 11, 12, 13], [20, 21, 22, EOS]);
    let mut grads = lm.params().zeros_like();
    lm.accumulate_gradients(&ctx, &expl, &mut grads, 1.0, None).unwrap();
    let lm_report = grad_check(&mut lm, |m| m.params_mut(), |m| m.loss(&ctx, &expl).unwrap(), &grads, options(7));

    let mut clf = Classifier::new(tiny_config(50)).unwrap();
    let seq = |c: usize| ClassifierInput {
        tokens: vec![CLS, 10, 11, SEP, 30, 31, SEP, c],
        segments: vec![0, 0, 0, 0, 0, 0, 0, 1],
    };
    let inputs = [seq(40), seq(41), seq(42)];
    let mut grads = clf.params().zeros_like();
    clf.accumulate_gradients(&inputs, 1, &mut grads, 1.0, None).unwrap();
    let clf_report = grad_check(&mut clf, |m| m.params_mut(), |m| m.loss(&inputs, 1).unwrap(), &grads, options(8));

    let min_coords = lm_report
        .tensors
        .iter()
        .chain(&clf_report.tensors)
        .map(|t| t.coordinates)
        .min()
        .unwrap_or(0);
    verdict(
        lm_report.max_rel_error < 1e-4 && clf_report.max_rel_error < 1e-4,
        format!(
            "lm {:.2e}, classifier {:.2e}, fewest coordinates in a tensor {min_coords} (smaller tensors checked fully)",
            lm_report.max_rel_error, clf_report.max_rel_error
        ),
    )
}

fn causality(_: &mut Shared) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let mut config = tiny_config(50);
        config.max_len = 24;
        config.seed = trial;
        let lm = LanguageModel::new(config).unwrap();
        let len = rng.random_range(2..=24);
        let tokens: Vec<usize> = (0..len).map(|_| rng.random_range(0..50)).collect();
        let cut = rng.random_range(0..len - 1);
        let mut perturbed = tokens.clone();
        for t in perturbed.iter_mut().skip(cut + 1) {
            *t = rng.random_range(0..50);
        }
        let (a, b) = (lm.logits(&tokens).unwrap(), lm.logits(&perturbed).unwrap());
        for row in 0..=cut {
            for col in 0..50 {
                worst = worst.max((a[[row, col]] - b[[row, col]]).abs());
            }
        }
    }
    verdict(worst <= 1e-12, format!("largest past-logit change {worst:.1e} over 100 trials"))
}

fn memorization(_: &mut Shared) -> Verdict {
    let data = synthetic::memorization_set(0);
    let corpus: Vec<String> = std::iter::once("commonsense says because or".to_string())
        .chain(data.iter().flat_map(|(e, a)| {
            [e.question.clone(), cage_core::cage::choice_list(&e.choices), a.open_ended.clone()]
        }))
        .collect();
    let vocab = Vocabulary::build(&corpus, 1, usize::MAX);
    let hyper = Preset::Desk.lm(vocab.len(), 0);
    let pairs = lm_pairs(&vocab, &data, ConditioningMode::Reasoning, hyper.model.max_len).unwrap();
    let scored: Vec<(Vec<usize>, Vec<usize>)> = pairs.iter().map(|p| (p.context.clone(), p.explanation.clone())).collect();
    let mut trainer = LmTrainer::new(LanguageModel::new(hyper.model.clone()).unwrap(), &hyper, 2000).unwrap();
    let mut ppl = f64::INFINITY;
    while trainer.step_count() < 2000 {
        trainer.epoch(&pairs).unwrap();
        ppl = perplexity(&trainer.model, &scored).unwrap();
        if ppl < 1.5 {
            break;
        }
    }
    let verbatim = pairs
        .iter()
        .filter(|p| trainer.model.generate(&p.context, MAX_GENERATE, Strategy::Greedy).unwrap() == p.explanation)
        .count();
    verdict(
        ppl < 1.5 && verbatim >= 30,
        format!("train perplexity {ppl:.3} after {} steps, {verbatim}/32 verbatim", trainer.step_count()),
    )
}

fn synthetic_data() -> Datasets {
    let (train, eval) = synthetic::task(500, 200, 11);
    let split = |d: Vec<(Example, Annotation)>| -> (Vec<Example>, HashMap<String, Annotation>) {
        let anns = d.iter().map(|(e, a)| (e.id.clone(), a.clone())).collect();
        (d.into_iter().map(|(e, _)| e).collect(), anns)
    };
    let (train, train_annotations) = split(train);
    let (eval, eval_annotations) = split(eval);
    Datasets { train, train_annotations, eval, eval_annotations }
}

fn synthetic_spec(oracle: bool) -> PipelineSpec {
    PipelineSpec {
        variant: if oracle { DatasetVariant::OpenEnded } else { DatasetVariant::Baseline },
        explanation_source: if oracle { ExplanationSource::Human } else { ExplanationSource::None },
        use_explanations_at_train: oracle,
        use_explanations_at_eval: oracle,
        lm_preset: Preset::Desk,
        classifier_preset: Preset::Desk,
        seed: 7,
        train_examples: "synthetic-train".into(),
        train_annotations: oracle.then(|| "synthetic-train-explanations".into()),
        eval_examples: "synthetic-eval".into(),
        eval_annotations: oracle.then(|| "synthetic-eval-explanations".into()),
        lm_checkpoint: None,
        lm_epochs: None,
        classifier_epochs: Some(20),
    }
}

fn ensure_baseline(shared: &mut Shared) -> f64 {
    if shared.data.is_none() {
        shared.data = Some(synthetic_data());
    }
    if shared.baseline_accuracy.is_none() {
        let run = run_pipeline(&synthetic_spec(false), shared.data.as_ref().unwrap()).unwrap();
        shared.baseline_accuracy = Some(run.report.accuracy);
    }
    shared.baseline_accuracy.unwrap()
}

fn oracle_effect(shared: &mut Shared) -> Verdict {
    let baseline = ensure_baseline(shared);
    let spec = synthetic_spec(true);
    let run = run_pipeline(&spec, shared.data.as_ref().unwrap()).unwrap();
    let oracle = run.report.accuracy;
    shared.oracle = Some(run);
    shared.oracle_spec = Some(spec);
    verdict(oracle >= 0.95 && baseline <= 0.60, format!("oracle {oracle:.3}, baseline {baseline:.3}"))
}

fn misleading_effect(shared: &mut Shared) -> Verdict {
    let baseline = ensure_baseline(shared);
    if shared.oracle.is_none() {
        if let Verdict::Fail(d) = oracle_effect(shared) {
            return Verdict::Fail(format!("oracle run failed: {d}"));
        }
    }
    let data = shared.data.as_ref().unwrap();
    let run = shared.oracle.as_ref().unwrap();
    let spec = shared.oracle_spec.as_ref().unwrap();
    let eval = join(&data.eval, &data.eval_annotations).unwrap();
    let (perturbed, ids) = perturb_misleading(&eval, eval.len() / 2, 13).unwrap();
    let anns: HashMap<String, Annotation> = perturbed.iter().map(|(e, a)| (e.id.clone(), a.clone())).collect();
    let hyper = spec.classifier_hyper(run.vocabulary.len());
    let (sets, _) =
        variant_sets(&run.vocabulary, &hyper, &data.eval, ExplanationInput::Human(&anns, DatasetVariant::OpenEnded))
            .unwrap();
    let touched: std::collections::HashSet<&String> = ids.iter().collect();
    let subset: Vec<_> = sets.iter().filter(|s| touched.contains(&s.id)).cloned().collect();
    let on_perturbed = set_accuracy(&run.classifier, &subset).unwrap();
    let whole = set_accuracy(&run.classifier, &sets).unwrap();
    verdict(
        on_perturbed <= baseline - 0.10,
        format!(
            "perturbed subset ({} of {}) {on_perturbed:.3}, whole eval set {whole:.3}, baseline {baseline:.3}",
            subset.len(),
            sets.len()
        ),
    )
}

fn cose_statistics(_: &mut Shared) -> Verdict {
    let (Some(ex), Some(an)) = (std::env::var_os("COSE_EXAMPLES"), std::env::var_os("COSE_ANNOTATIONS")) else {
        return Verdict::Skip("set COSE_EXAMPLES and COSE_ANNOTATIONS to the CoS-E v1.0 train split to run".into());
    };
    let (ex, an) = (Path::new(&ex), Path::new(&an));
    if !ex.exists() || !an.exists() {
        return Verdict::Skip(format!("{} or {} not found", ex.display(), an.display()));
    }
    let examples = match load_examples(ex) {
        Ok(e) => e,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let joined = match load_annotations(an).and_then(|a| join(&examples, &a)) {
        Ok(j) => j,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let anns: HashMap<String, Annotation> = joined.into_iter().map(|(e, a)| (e.id, a)).collect();
    match overlap_stats(&examples, &anns) {
        Ok(s) => verdict(
            (s.pct_contains_answer - 58.0).abs() <= 3.0,
            format!("contains answer {:.2}% over {} explanations", s.pct_contains_answer, s.n),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn determinism(_: &mut Shared) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let (train, eval) = synthetic::task(60, 20, 4);
    let write = |name: &str, d: &[(Example, Annotation)]| {
        let (e, a): (Vec<Example>, Vec<Annotation>) = d.iter().cloned().unzip();
        write_examples(dir.path().join(format!("{name}.jsonl")), &e).unwrap();
        write_annotations(dir.path().join(format!("{name}_ann.jsonl")), &a).unwrap();
    };
    write("train", &train);
    write("eval", &eval);
    let spec = dir.path().join("run.toml");
    std::fs::write(
        &spec,
        "variant = \"open_ended\"\nexplanation_source = \"generated-reasoning\"\nuse_explanations_at_train = true\n\
         use_explanations_at_eval = true\nlm_preset = \"tiny\"\nclassifier_preset = \"tiny\"\nlm_epochs = 2\n\
         train_examples = \"train.jsonl\"\ntrain_annotations = \"train_ann.jsonl\"\n\
         eval_examples = \"eval.jsonl\"\neval_annotations = \"eval_ann.jsonl\"\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_cage"))
            .args(["pipeline", "--spec", spec.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        if !status.status.success() {
            return Verdict::Fail(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        outputs.push(std::fs::read(out).unwrap());
    }
    verdict(outputs[0] == outputs[1], format!("two runs, {} bytes each, identical: {}", outputs[0].len(), outputs[0] == outputs[1]))
}

struct Harness {
    base: String,
    client: reqwest::Client,
}

impl Harness {
    async fn next(&self, session: &str) -> (u16, Option<String>) {
        let r = self.client.get(format!("{}/api/tasks/next", self.base)).header("X-Session", session).send().await.unwrap();
        let code = r.status().as_u16();
        let id = if code == 200 {
            r.json::<Value>().await.unwrap()["task_id"].as_str().map(str::to_string)
        } else {
            None
        };
        (code, id)
    }

    async fn submit(&self, session: &str, id: &str, explanation: &str) -> (u16, Value) {
        let r = self
            .client
            .post(format!("{}/api/tasks/{id}", self.base))
            .header("X-Session", session)
            .json(&json!({"explanation": explanation, "selected": [[0, 5]]}))
            .send()
            .await
            .unwrap();
        let code = r.status().as_u16();
        (code, r.json().await.unwrap_or(Value::Null))
    }

    async fn progress(&self) -> (usize, usize, usize) {
        let p: Value = self.client.get(format!("{}/api/progress", self.base)).send().await.unwrap().json().await.unwrap();
        let n = |k: &str| p[k].as_u64().unwrap() as usize;
        (n("pending"), n("accepted"), n("flagged"))
    }
}

async fn service_walk() -> Result<String, String> {
    let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(what.to_string()) };
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("annotations.jsonl");
    let examples: Vec<Example> = synthetic::generate("t", 6, synthetic::SyntheticConfig::default())
        .into_iter()
        .map(|(e, _)| e)
        .collect();
    let total = examples.len();
    // one stored record that passes and one that fails the gates
    let stale = [
        Annotation::new("t0", "a perfectly reasonable stored explanation", vec![Span(0, 3)]).unwrap(),
        Annotation::new("t1", "too short", vec![Span(0, 3)]).unwrap(),
    ];
    write_annotations(&store, &stale).unwrap();
    let service = Arc::new(AnnotationService::open(examples.clone(), ServiceConfig::new(&store)).unwrap());
    let reloaded = load_annotations(&store).unwrap();
    let revalidated = reloaded.len() == 1
        && reloaded.values().all(|a| validate_annotation(&examples[examples.iter().position(|e| e.id == a.example_id).unwrap()], a).passed);
    check(revalidated, "store revalidation kept a failing record")?;

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let h = Harness { base: format!("http://{}", listener.local_addr().unwrap()), client: reqwest::Client::new() };
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(serve(listener, router(service.clone(), None), async {
        let _ = rx.await;
    }));
    let conserved = |p: (usize, usize, usize)| p.0 + p.1 + p.2 == total;
    check(conserved(h.progress().await), "conservation at start")?;

    // two clients draw concurrently until the queue is empty
    let mut probed = false;
    loop {
        let (a, b) = tokio::join!(h.next("alice"), h.next("bob"));
        let held: Vec<(&str, String)> = [("alice", a), ("bob", b)]
            .into_iter()
            .filter_map(|(session, (code, id))| (code == 200).then(|| (session, id.unwrap())))
            .collect();
        if held.is_empty() {
            break;
        }
        if let [(_, x), (_, y)] = held.as_slice() {
            check(x != y, &format!("task {x} leased to both sessions"))?;
        }
        for (session, id) in &held {
            if !probed {
                let bad = h.submit(session, id, "good time").await;
                check(bad.0 == 422, "invalid submit was not rejected with 422")?;
                check(bad.1["report"]["rules"][1]["passed"] == false, "422 report does not list R2")?;
                let other = if *session == "alice" { "bob" } else { "alice" };
                let stolen = h.submit(other, id, "a perfectly reasonable new explanation").await;
                check(stolen.0 == 409, "submit without the lease was not a conflict")?;
                probed = true;
            }
            check(h.submit(session, id, "a perfectly reasonable new explanation").await.0 == 200, "valid submit")?;
        }
        check(conserved(h.progress().await), "conservation while annotating")?;
    }
    check(probed, "no task was served")?;
    let (pending, accepted, flagged) = h.progress().await;
    check(pending == 0 && accepted == total && flagged == 0, "queue not exhausted")?;
    check(h.next("alice").await.0 == 204, "exhausted queue did not return 204")?;

    // flag a subset, reannotate it
    let targets = ["t2", "t4"];
    let flagged = service.flag_for_reannotation(|e, _| targets.contains(&e.id.as_str())).unwrap();
    check(flagged == 2, "flag count")?;
    check(conserved(h.progress().await) && h.progress().await.2 == 2, "conservation after flagging")?;
    let mut served = Vec::new();
    for session in ["alice", "bob"] {
        let (code, id) = h.next(session).await;
        check(code == 200, "flagged task not served again")?;
        let id = id.unwrap();
        check(h.submit(session, &id, "a fresh explanation after review").await.0 == 200, "reannotation")?;
        served.push(id);
    }
    served.sort();
    check(served == targets, "served tasks differ from the flagged ones")?;
    let final_progress = h.progress().await;
    check(final_progress == (0, total, 0), "final progress")?;
    let stored = load_annotations(&store).unwrap();
    check(stored.len() == total, "store size after cycle")?;
    let _ = tx.send(());
    Ok(format!("{total} tasks, progress {final_progress:?}, store {} records", stored.len()))
}

fn service_state_machine(_: &mut Shared) -> Verdict {
    let runtime = tokio::runtime::Runtime::new().unwrap();
    match runtime.block_on(service_walk()) {
        Ok(d) => Verdict::Pass(d),
        Err(d) => Verdict::Fail(d),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Check); 12] = [
        ("template byte-exactness", Duration::from_secs(1), template_strings),
        ("filter suite", Duration::from_secs(1), filter_suite),
        ("BLEU oracle", Duration::from_secs(1), bleu_oracle),
        ("perplexity oracle", Duration::from_secs(1), perplexity_oracle),
        ("gradient check", Duration::from_secs(60), gradient_check),
        ("causality", Duration::from_secs(10), causality),
        ("LM memorization", Duration::from_secs(120), memorization),
        ("synthetic oracle effect", Duration::from_secs(300), oracle_effect),
        ("misleading effect", Duration::from_secs(300), misleading_effect),
        ("CoS-E answer containment", Duration::from_secs(60), cose_statistics),
        ("determinism", Duration::from_secs(300), determinism),
        ("service state machine", Duration::from_secs(30), service_state_machine),
    ];
    let mut shared = Shared::default();
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check(&mut shared);
        let took = start.elapsed();
        let over = took > *budget;
        let (tag, detail) = match v {
            Verdict::Pass(d) if !over => ("PASS", d),
            Verdict::Pass(d) => ("FAIL", format!("{d}; exceeded the {budget:?} budget")),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Skip(d) => ("SKIP", d),
        };
        failures += (tag == "FAIL") as usize;
        println!("{tag} {:>2} {name} [{:.2}s]: {detail}", i + 1, took.as_secs_f64());
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
