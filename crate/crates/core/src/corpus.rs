//! Multiple-choice examples, human explanations, JSONL ingestion and the
//! dataset variants used by the ablation runs.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize;

/// One multiple-choice question.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub question: String,
    pub choices: Vec<String>,
    pub answer_index: Option<usize>,
}

impl Example {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        choices: Vec<String>,
        answer_index: Option<usize>,
    ) -> Result<Self> {
        let example = Example {
            id: id.into(),
            question: question.into(),
            choices,
            answer_index,
        };
        example.check()?;
        Ok(example)
    }

    fn check(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidExample {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.question.trim().is_empty() {
            return Err(invalid("empty question"));
        }
        if self.choices.len() < 2 {
            return Err(invalid("fewer than two choices"));
        }
        if self.choices.iter().any(|c| c.trim().is_empty()) {
            return Err(invalid("empty choice"));
        }
        let distinct: HashSet<&str> = self.choices.iter().map(String::as_str).collect();
        if distinct.len() != self.choices.len() {
            return Err(invalid("duplicate choices"));
        }
        if matches!(self.answer_index, Some(a) if a >= self.choices.len()) {
            return Err(invalid("answer index out of range"));
        }
        Ok(())
    }

    pub fn answer(&self) -> Option<&str> {
        self.answer_index.map(|a| self.choices[a].as_str())
    }

    /// Length of the question in characters; span offsets count characters.
    pub fn question_len(&self) -> usize {
        self.question.chars().count()
    }
}

/// Half-open character range `[start, end)` into a question.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span(pub usize, pub usize);

impl Span {
    pub fn start(self) -> usize {
        self.0
    }

    pub fn end(self) -> usize {
        self.1
    }

    /// The highlighted characters of `text`.
    pub fn slice(self, text: &str) -> String {
        text.chars().skip(self.0).take(self.1 - self.0).collect()
    }
}

/// A human explanation: free text plus highlighted question spans.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Annotation {
    pub example_id: String,
    pub open_ended: String,
    pub selected_spans: Vec<Span>,
}

impl Annotation {
    pub fn new(
        example_id: impl Into<String>,
        open_ended: impl Into<String>,
        selected_spans: Vec<Span>,
    ) -> Result<Self> {
        let annotation = Annotation {
            example_id: example_id.into(),
            open_ended: open_ended.into(),
            selected_spans,
        };
        annotation.check_structure()?;
        Ok(annotation)
    }

    /// Spans are non-empty, sorted and non-overlapping.
    pub fn check_structure(&self) -> Result<()> {
        for span in &self.selected_spans {
            if span.start() >= span.end() {
                return Err(Error::Range(format!(
                    "annotation {}: span [{}, {}) is empty or reversed",
                    self.example_id,
                    span.start(),
                    span.end()
                )));
            }
        }
        for pair in self.selected_spans.windows(2) {
            if pair[1].start() < pair[0].end() {
                return Err(Error::Range(format!(
                    "annotation {}: spans must be sorted and non-overlapping",
                    self.example_id
                )));
            }
        }
        Ok(())
    }

    /// Checks every span lies inside the paired question.
    pub fn check_bounds(&self, example: &Example) -> Result<()> {
        let len = example.question_len();
        match self.selected_spans.iter().find(|s| s.end() > len) {
            Some(span) => Err(Error::Range(format!(
                "annotation {}: span [{}, {}) exceeds question length {len}",
                self.example_id,
                span.start(),
                span.end()
            ))),
            None => Ok(()),
        }
    }

    /// Highlighted substrings in question order, joined by single spaces.
    pub fn selected_text(&self, question: &str) -> String {
        self.selected_spans
            .iter()
            .map(|s| s.slice(question))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// The explanation form fed to a pipeline run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetVariant {
    Baseline,
    OpenEnded,
    Selected,
    LimitedOpenEnded,
    OpenEndedWithoutQuestion,
    SelectedWithoutQuestion,
}

impl DatasetVariant {
    pub fn without_question(self) -> bool {
        matches!(
            self,
            DatasetVariant::OpenEndedWithoutQuestion | DatasetVariant::SelectedWithoutQuestion
        )
    }
}

/// Classifier-facing text for one example under a variant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Materialized {
    pub context: String,
    pub explanation: Option<String>,
}

/// Renders `example` under `variant`. `Ok(None)` means the example is
/// excluded from the variant (limited open-ended explanations that mention a
/// choice word).
pub fn materialize(
    example: &Example,
    annotation: Option<&Annotation>,
    variant: DatasetVariant,
) -> Result<Option<Materialized>> {
    if variant == DatasetVariant::Baseline {
        return Ok(Some(Materialized {
            context: example.question.clone(),
            explanation: None,
        }));
    }
    let annotation = annotation.ok_or_else(|| Error::MissingAnnotation(example.id.clone()))?;
    let question = || example.question.clone();
    let out = match variant {
        DatasetVariant::Baseline => unreachable!(),
        DatasetVariant::OpenEnded => Materialized {
            context: question(),
            explanation: Some(annotation.open_ended.clone()),
        },
        DatasetVariant::Selected => Materialized {
            context: question(),
            explanation: Some(annotation.selected_text(&example.question)),
        },
        DatasetVariant::LimitedOpenEnded => {
            if !is_limited(annotation, example) {
                return Ok(None);
            }
            Materialized {
                context: question(),
                explanation: Some(annotation.open_ended.clone()),
            }
        }
        DatasetVariant::OpenEndedWithoutQuestion => Materialized {
            context: annotation.open_ended.clone(),
            explanation: None,
        },
        DatasetVariant::SelectedWithoutQuestion => Materialized {
            context: annotation.selected_text(&example.question),
            explanation: None,
        },
    };
    Ok(Some(out))
}

/// True when the explanation shares no normalized word with any choice.
pub fn is_limited(annotation: &Annotation, example: &Example) -> bool {
    let choice_words: HashSet<String> = example.choices.iter().flat_map(|c| normalize(c)).collect();
    normalize(&annotation.open_ended)
        .iter()
        .all(|w| !choice_words.contains(w))
}

#[derive(Serialize, Deserialize)]
struct ExampleRecord {
    id: String,
    question: String,
    choices: Vec<String>,
    #[serde(default)]
    answer: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct AnnotationRecord {
    id: String,
    explanation: String,
    #[serde(default)]
    selected: Vec<Span>,
}

impl From<&Annotation> for AnnotationRecord {
    fn from(a: &Annotation) -> Self {
        AnnotationRecord {
            id: a.example_id.clone(),
            explanation: a.open_ended.clone(),
            selected: a.selected_spans.clone(),
        }
    }
}

/// Serializes one annotation as a single JSONL record (no trailing newline).
pub fn annotation_to_json(annotation: &Annotation) -> String {
    serde_json::to_string(&AnnotationRecord::from(annotation)).expect("annotation serializes")
}

/// Parses one annotation record.
pub fn annotation_from_json(line: &str) -> Result<Annotation> {
    let record: AnnotationRecord = serde_json::from_str(line)?;
    Annotation::new(record.id, record.explanation, record.selected)
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_error(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

/// Loads `examples.jsonl`, resolving gold answer text to an index by exact match.
pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut examples = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let record: ExampleRecord =
            serde_json::from_str(&line).map_err(|e| parse_error(path, line_no, e))?;
        let answer_index = match &record.answer {
            None => None,
            Some(answer) => Some(record.choices.iter().position(|c| c == answer).ok_or_else(
                || Error::LabelResolution {
                    path: path.to_path_buf(),
                    line: line_no,
                    id: record.id.clone(),
                    answer: answer.clone(),
                },
            )?),
        };
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        let example = Example::new(record.id, record.question, record.choices, answer_index)
            .map_err(|e| parse_error(path, line_no, e))?;
        examples.push(example);
    }
    Ok(examples)
}

/// Writes examples in the `examples.jsonl` format.
pub fn write_examples(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let path = path.as_ref();
    let lines = examples.iter().map(|e| {
        serde_json::to_string(&ExampleRecord {
            id: e.id.clone(),
            question: e.question.clone(),
            choices: e.choices.clone(),
            answer: e.answer().map(str::to_string),
        })
    });
    write_jsonl(path, lines)
}

/// Loads `annotations.jsonl`. A repeated id keeps the last record.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<HashMap<String, Annotation>> {
    let path = path.as_ref();
    let mut out = HashMap::new();
    for (line_no, line) in read_lines(path)? {
        let record: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| parse_error(path, line_no, e))?;
        let annotation = Annotation::new(record.id, record.explanation, record.selected)?;
        if out.contains_key(&annotation.example_id) {
            warn!(
                "{}:{line_no}: duplicate annotation for {}, keeping the later record",
                path.display(),
                annotation.example_id
            );
        }
        out.insert(annotation.example_id.clone(), annotation);
    }
    Ok(out)
}

/// Writes annotations in the `annotations.jsonl` format, in the given order.
pub fn write_annotations<'a>(
    path: impl AsRef<Path>,
    annotations: impl IntoIterator<Item = &'a Annotation>,
) -> Result<()> {
    let lines = annotations
        .into_iter()
        .map(|a| Ok::<_, serde_json::Error>(annotation_to_json(a)));
    write_jsonl(path.as_ref(), lines)
}

pub(crate) fn write_jsonl<E: Into<Error>>(
    path: &Path,
    lines: impl IntoIterator<Item = Result<String, E>>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        let line = line.map_err(Into::into)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pairs examples with their annotations in example order. Annotations whose
/// id matches no example are skipped with a warning; spans are bounds-checked.
pub fn join(
    examples: &[Example],
    annotations: &HashMap<String, Annotation>,
) -> Result<Vec<(Example, Annotation)>> {
    let ids: HashSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    let mut orphans: Vec<&String> = annotations
        .keys()
        .filter(|id| !ids.contains(id.as_str()))
        .collect();
    orphans.sort();
    for id in orphans {
        warn!("annotation {id} has no matching example, skipped");
    }
    let mut out = Vec::new();
    for example in examples {
        if let Some(annotation) = annotations.get(&example.id) {
            annotation.check_bounds(example)?;
            out.push((example.clone(), annotation.clone()));
        }
    }
    Ok(out)
}
