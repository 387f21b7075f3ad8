//! Collection-time quality gates for human explanations and the corpus
//! statistics used to analyse them.

use std::collections::HashMap;
use std::fmt;

use regex::RegexBuilder;
use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, Example};
use crate::error::{Error, Result};
use crate::text::{contains_run, normalize, word_count};

/// Minimum number of words in an open-ended explanation.
pub const MIN_EXPLANATION_WORDS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// At least one question span is highlighted.
    R1,
    /// The explanation has at least four words.
    R2,
    /// The explanation is not a bare substring of the question or a choice.
    R3,
    /// The explanation is not the "only option" template.
    R4,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::R1, Rule::R2, Rule::R3, Rule::R4];
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleResult {
    pub rule: Rule,
    pub passed: bool,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rules: Vec<RuleResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failed(&self) -> impl Iterator<Item = Rule> + '_ {
        self.rules.iter().filter(|r| !r.passed).map(|r| r.rule)
    }

    pub fn rule(&self, rule: Rule) -> &RuleResult {
        self.rules.iter().find(|r| r.rule == rule).expect("every report lists all rules")
    }
}

/// Runs the four gates. Failures are reported, never raised.
pub fn validate_annotation(example: &Example, annotation: &Annotation) -> ValidationReport {
    let rules = vec![
        check_highlight(annotation),
        check_length(annotation),
        check_not_copied(example, annotation),
        check_template(example, annotation),
    ];
    let passed = rules.iter().all(|r| r.passed);
    ValidationReport { rules, passed }
}

fn result(rule: Rule, passed: bool, reason: impl Into<String>) -> RuleResult {
    RuleResult {
        rule,
        passed,
        reason: reason.into(),
    }
}

fn check_highlight(annotation: &Annotation) -> RuleResult {
    if annotation.selected_spans.is_empty() {
        result(Rule::R1, false, "highlight at least one relevant word in the question")
    } else {
        result(Rule::R1, true, "ok")
    }
}

fn check_length(annotation: &Annotation) -> RuleResult {
    let n = word_count(&annotation.open_ended);
    if n < MIN_EXPLANATION_WORDS {
        result(
            Rule::R2,
            false,
            format!("explanation has {n} words; at least {MIN_EXPLANATION_WORDS} are required"),
        )
    } else {
        result(Rule::R2, true, "ok")
    }
}

fn check_not_copied(example: &Example, annotation: &Annotation) -> RuleResult {
    let explanation = normalize(&annotation.open_ended);
    let sources = std::iter::once(("the question", &example.question))
        .chain(example.choices.iter().map(|c| ("an answer choice", c)));
    for (what, source) in sources {
        if contains_run(&normalize(source), &explanation) {
            return result(
                Rule::R3,
                false,
                format!("explanation only repeats words from {what}; add your own reasoning"),
            );
        }
    }
    result(Rule::R3, true, "ok")
}

fn check_template(example: &Example, annotation: &Annotation) -> RuleResult {
    let text = annotation.open_ended.split_whitespace().collect::<Vec<_>>().join(" ");
    for choice in &example.choices {
        let choice = choice.split_whitespace().map(regex::escape).collect::<Vec<_>>().join(r"\s+");
        let pattern = format!(
            r"^\W*{choice}\s+is\s+the\s+only\s+option\s+that\s+is\s+(correct|obvious)\W*$"
        );
        let re = RegexBuilder::new(&pattern)
            .case_insensitive(true)
            .build()
            .expect("escaped template pattern compiles");
        if re.is_match(&text) {
            return result(
                Rule::R4,
                false,
                "explanation is a template (\"<answer> is the only option that is correct\"); explain why",
            );
        }
    }
    result(Rule::R4, true, "ok")
}

/// Overlap between explanations and the question/choices, as percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub pct_contains_answer: f64,
    pub pct_contains_distractor: f64,
    pub pct_contains_either: f64,
    pub pct_bigram: f64,
    pub pct_trigram: f64,
    pub n: usize,
}

fn pct(count: usize, n: usize) -> f64 {
    100.0 * count as f64 / n as f64
}

fn shares_ngram(explanation: &[String], question: &[String], n: usize) -> bool {
    question.windows(n).any(|g| contains_run(explanation, g))
}

/// Containment statistics over every annotation. Each annotation needs an
/// example with a gold answer.
pub fn overlap_stats(
    examples: &[Example],
    annotations: &HashMap<String, Annotation>,
) -> Result<OverlapStats> {
    if annotations.is_empty() {
        return Err(Error::Empty("annotation set"));
    }
    let by_id: HashMap<&str, &Example> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let (mut answer, mut distractor, mut either, mut bigram, mut trigram) = (0, 0, 0, 0, 0);
    for annotation in annotations.values() {
        let example = by_id
            .get(annotation.example_id.as_str())
            .ok_or_else(|| Error::Input(format!("annotation {} has no example", annotation.example_id)))?;
        let gold = example
            .answer_index
            .ok_or_else(|| Error::Input(format!("example {} has no gold answer", example.id)))?;
        let expl = normalize(&annotation.open_ended);
        let contains = |choice: &str| {
            let c = normalize(choice);
            !c.is_empty() && contains_run(&expl, &c)
        };
        let has_answer = contains(&example.choices[gold]);
        let has_distractor = example
            .choices
            .iter()
            .enumerate()
            .any(|(i, c)| i != gold && contains(c));
        let question = normalize(&example.question);
        answer += has_answer as usize;
        distractor += has_distractor as usize;
        either += (has_answer || has_distractor) as usize;
        bigram += shares_ngram(&expl, &question, 2) as usize;
        trigram += shares_ngram(&expl, &question, 3) as usize;
    }
    let n = annotations.len();
    Ok(OverlapStats {
        pct_contains_answer: pct(answer, n),
        pct_contains_distractor: pct(distractor, n),
        pct_contains_either: pct(either, n),
        pct_bigram: pct(bigram, n),
        pct_trigram: pct(trigram, n),
        n,
    })
}

/// Mean question length (normalized words) for incorrectly and correctly
/// predicted examples. An empty partition yields `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthAnalysis {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_words_incorrect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_words_correct: Option<f64>,
}

pub fn length_analysis(
    examples: &[Example],
    predictions: &HashMap<String, usize>,
) -> Result<LengthAnalysis> {
    let (mut wrong, mut right) = (Vec::new(), Vec::new());
    for example in examples {
        let Some(gold) = example.answer_index else { continue };
        let predicted = predictions
            .get(&example.id)
            .ok_or_else(|| Error::Input(format!("no prediction for {}", example.id)))?;
        let words = word_count(&example.question) as f64;
        if *predicted == gold {
            right.push(words);
        } else {
            wrong.push(words);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(LengthAnalysis {
        mean_words_incorrect: mean(&wrong),
        mean_words_correct: mean(&right),
    })
}

/// How often explanations mention any choice, and the predicted choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentStats {
    pub pct_any_choice: f64,
    pub pct_predicted_choice: f64,
    pub n: usize,
}

pub fn containment_stats(
    explanations: &HashMap<String, String>,
    examples: &[Example],
    predictions: &HashMap<String, usize>,
) -> Result<ContainmentStats> {
    if explanations.is_empty() {
        return Err(Error::Empty("explanation set"));
    }
    let by_id: HashMap<&str, &Example> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let (mut any, mut predicted_hits) = (0, 0);
    for (id, text) in explanations {
        let example = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::Input(format!("explanation {id} has no example")))?;
        let predicted = *predictions
            .get(id)
            .ok_or_else(|| Error::Input(format!("no prediction for {id}")))?;
        let expl = normalize(text);
        let contains = |choice: &str| {
            let c = normalize(choice);
            !c.is_empty() && contains_run(&expl, &c)
        };
        let hit_predicted = contains(&example.choices[predicted]);
        any += (hit_predicted || example.choices.iter().any(|c| contains(c))) as usize;
        predicted_hits += hit_predicted as usize;
    }
    let n = explanations.len();
    Ok(ContainmentStats {
        pct_any_choice: pct(any, n),
        pct_predicted_choice: pct(predicted_hits, n),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Span;

    fn hamburger() -> Example {
        Example::new(
            "q1",
            "While eating a hamburger with friends, what are people trying to do?",
            vec!["have fun".into(), "tasty".into(), "indigestion".into()],
            Some(0),
        )
        .unwrap()
    }

    fn ann(text: &str, spans: Vec<Span>) -> Annotation {
        Annotation::new("q1", text, spans).unwrap()
    }

    fn failed(report: &ValidationReport) -> Vec<Rule> {
        report.failed().collect()
    }

    #[test]
    fn accepted_annotation_passes_all() {
        let r = validate_annotation(
            &hamburger(),
            &ann("Usually a hamburger with friends indicates a good time.", vec![Span(15, 37)]),
        );
        assert!(r.passed);
        assert_eq!(r.rules.len(), 4);
    }

    #[test]
    fn short_copy_fails_r2_and_r3() {
        let r = validate_annotation(&hamburger(), &ann("have fun", vec![Span(15, 37)]));
        assert_eq!(failed(&r), vec![Rule::R2, Rule::R3]);
        assert!(!r.passed);
    }

    #[test]
    fn template_fails_r4() {
        let r = validate_annotation(
            &hamburger(),
            &ann("have fun is the only option that is correct", vec![Span(15, 37)]),
        );
        assert_eq!(failed(&r), vec![Rule::R4]);
        let r = validate_annotation(
            &hamburger(),
            &ann("Have  Fun is the only option that is OBVIOUS.", vec![Span(15, 37)]),
        );
        assert_eq!(failed(&r), vec![Rule::R4]);
    }

    #[test]
    fn no_highlight_fails_r1_only() {
        let r = validate_annotation(
            &hamburger(),
            &ann("Usually a hamburger with friends indicates a good time.", vec![]),
        );
        assert_eq!(failed(&r), vec![Rule::R1]);
    }

    #[test]
    fn question_substring_fails_r3() {
        let r = validate_annotation(
            &hamburger(),
            &ann("eating a hamburger with friends", vec![Span(15, 24)]),
        );
        assert_eq!(failed(&r), vec![Rule::R3]);
        let r = validate_annotation(
            &hamburger(),
            &ann("eating a hamburger with friends rocks", vec![Span(15, 24)]),
        );
        assert!(r.passed);
    }

    #[test]
    fn overlap_single_annotation() {
        let ex = Example::new(
            "t",
            "People do what during their time off from work?",
            vec!["take trips".into(), "brow shorter".into(), "become hysterical".into()],
            Some(0),
        )
        .unwrap();
        let mut map = HashMap::new();
        map.insert("t".to_string(), Annotation::new("t", "people take trips to relax", vec![]).unwrap());
        let s = overlap_stats(&[ex], &map).unwrap();
        assert_eq!(s.pct_contains_answer, 100.0);
        assert_eq!(s.pct_contains_distractor, 0.0);
        assert_eq!(s.n, 1);
    }

    #[test]
    fn overlap_empty_is_error() {
        assert!(overlap_stats(&[hamburger()], &HashMap::new()).is_err());
    }

    #[test]
    fn length_analysis_partitions() {
        let q = |id: &str, words: usize| {
            let text = vec!["w"; words].join(" ");
            Example::new(id, text, vec!["a".into(), "b".into()], Some(0)).unwrap()
        };
        let examples = vec![q("a", 10), q("b", 20)];
        let preds: HashMap<String, usize> = [("a".to_string(), 0), ("b".to_string(), 1)].into();
        let la = length_analysis(&examples, &preds).unwrap();
        assert_eq!(la.mean_words_incorrect, Some(20.0));
        assert_eq!(la.mean_words_correct, Some(10.0));

        let all_right: HashMap<String, usize> = [("a".to_string(), 0), ("b".to_string(), 0)].into();
        assert_eq!(length_analysis(&examples, &all_right).unwrap().mean_words_incorrect, None);
    }

    #[test]
    fn containment_basic_cases() {
        let ex = hamburger();
        let preds: HashMap<String, usize> = [("q1".to_string(), 1)].into();
        let expl: HashMap<String, String> = [("q1".to_string(), "tasty".to_string())].into();
        let c = containment_stats(&expl, &[ex.clone()], &preds).unwrap();
        assert_eq!((c.pct_any_choice, c.pct_predicted_choice), (100.0, 100.0));

        let expl: HashMap<String, String> = [("q1".to_string(), "nothing shared here".to_string())].into();
        let c = containment_stats(&expl, &[ex.clone()], &preds).unwrap();
        assert_eq!((c.pct_any_choice, c.pct_predicted_choice), (0.0, 0.0));

        assert!(containment_stats(&HashMap::new(), &[ex], &preds).is_err());
    }
}
