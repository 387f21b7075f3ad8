//! JSONL files for generated explanations and predictions.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classify::Prediction;
use super::context::ConditioningMode;
use crate::corpus::{read_lines, write_jsonl, Example};
use crate::error::{Error, Result};

/// One line of `generated_explanations.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub id: String,
    pub explanation: String,
    pub mode: ConditioningMode,
}

/// One line of `predictions.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub predicted: String,
    pub scores: Vec<f64>,
}

/// Records in example order; examples without an explanation are skipped.
pub fn generated_records(
    examples: &[Example],
    explanations: &HashMap<String, String>,
    mode: ConditioningMode,
) -> Vec<GeneratedRecord> {
    examples
        .iter()
        .filter_map(|e| {
            explanations.get(&e.id).map(|text| GeneratedRecord {
                id: e.id.clone(),
                explanation: text.clone(),
                mode,
            })
        })
        .collect()
}

pub fn write_generated(path: impl AsRef<Path>, records: &[GeneratedRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), records.iter().map(serde_json::to_string))
}

pub fn load_generated(path: impl AsRef<Path>) -> Result<Vec<GeneratedRecord>> {
    parse_lines(path.as_ref())
}

/// Records in example order, the predicted index rendered as choice text.
pub fn prediction_records(
    examples: &[Example],
    predictions: &HashMap<String, Prediction>,
) -> Vec<PredictionRecord> {
    examples
        .iter()
        .filter_map(|e| {
            predictions.get(&e.id).map(|p| PredictionRecord {
                id: e.id.clone(),
                predicted: e.choices[p.index].clone(),
                scores: p.scores.clone(),
            })
        })
        .collect()
}

pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), records.iter().map(serde_json::to_string))
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    parse_lines(path.as_ref())
}

fn parse_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })
        })
        .collect()
}
