//! Prompt rendering for the explanation language model.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::tokenizer::{Vocabulary, BOS};

/// Whether the explanation precedes the answer or justifies a given one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// Explain, then predict: the LM never sees a label.
    Reasoning,
    /// Predict, then explain: the LM conditions on a chosen answer.
    Rationalization,
}

impl ConditioningMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditioningMode::Reasoning => "reasoning",
            ConditioningMode::Rationalization => "rationalization",
        }
    }
}

/// `"c0, c1, or c2"`; two choices render as `"c0 or c1"`.
pub fn choice_list(choices: &[String]) -> String {
    match choices {
        [] => String::new(),
        [only] => only.clone(),
        [a, b] => format!("{a} or {b}"),
        [init @ .., last] => format!("{}, or {last}", init.join(", ")),
    }
}

/// Renders the LM context.
///
/// Reasoning: `"{q} {c0}, {c1}, or {c2}? commonsense says"`.
/// Rationalization: `"{q} {c0}, {c1}, or {c2}? {a} because"`.
pub fn build_context(example: &Example, mode: ConditioningMode, label: Option<usize>) -> Result<String> {
    let head = format!("{} {}?", example.question, choice_list(&example.choices));
    match mode {
        ConditioningMode::Reasoning => Ok(format!("{head} commonsense says")),
        ConditioningMode::Rationalization => {
            let label = label.ok_or_else(|| {
                Error::Argument(format!("rationalization of {} needs a label", example.id))
            })?;
            let answer = example.choices.get(label).ok_or_else(|| {
                Error::Range(format!("label {label} for {} with {} choices", example.id, example.choices.len()))
            })?;
            Ok(format!("{head} {answer} because"))
        }
    }
}

/// `[BOS]` plus the encoded context, shortened from the head of the question
/// until `reserve` more positions fit in a window of `window` tokens.
pub fn encode_context(
    vocab: &Vocabulary,
    example: &Example,
    mode: ConditioningMode,
    label: Option<usize>,
    window: usize,
    reserve: usize,
) -> Result<Vec<usize>> {
    let mut ids = vec![BOS];
    ids.extend(vocab.encode(&build_context(example, mode, label)?));
    let budget = window.saturating_sub(reserve);
    if ids.len() > budget {
        let excess = ids.len() - budget;
        let question_len = vocab.encode(&example.question).len();
        if excess > question_len {
            return Err(Error::Length { len: ids.len() - question_len + reserve, limit: window });
        }
        warn!("context of {} dropped {excess} leading question tokens to fit the window", example.id);
        ids.drain(1..1 + excess);
    }
    Ok(ids)
}
