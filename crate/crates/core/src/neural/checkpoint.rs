//! Self-describing JSON checkpoints: config, vocabulary, named tensors and
//! the step counter.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classifier::Classifier;
use super::config::ModelConfig;
use super::lm::LanguageModel;
use super::params::{Mat, Parameters};
use crate::error::{Error, Result};
use crate::tokenizer::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LanguageModel,
    Classifier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub vocabulary: Vec<String>,
    pub step: u64,
    tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    fn capture(kind: ModelKind, config: &ModelConfig, vocab: &Vocabulary, params: &Parameters) -> Self {
        Checkpoint {
            kind,
            config: config.clone(),
            vocabulary: vocab.tokens().to_vec(),
            step: params.step,
            tensors: params
                .iter()
                .map(|(_, name, t)| TensorRecord {
                    name: name.to_string(),
                    rows: t.nrows(),
                    cols: t.ncols(),
                    data: t.iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn from_lm(model: &LanguageModel, vocab: &Vocabulary) -> Self {
        Self::capture(ModelKind::LanguageModel, model.config(), vocab, model.params())
    }

    pub fn from_classifier(model: &Classifier, vocab: &Vocabulary) -> Self {
        Self::capture(ModelKind::Classifier, model.config(), vocab, model.params())
    }

    pub fn parameters(&self) -> Result<Parameters> {
        let mut params = Parameters::new();
        for t in &self.tensors {
            let m = Mat::from_shape_vec((t.rows, t.cols), t.data.clone()).map_err(|_| {
                Error::ShapeMismatch {
                    name: t.name.clone(),
                    expected: (t.rows, t.cols),
                    found: (t.data.len(), 1),
                }
            })?;
            params.add(t.name.clone(), m);
        }
        params.step = self.step;
        Ok(params)
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_tokens(self.vocabulary.clone())
    }

    fn expect(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Input(format!("checkpoint holds a {:?}, not a {kind:?}", self.kind)));
        }
        Ok(())
    }

    /// Rebuilds the language model; tensors must match `config` exactly.
    pub fn language_model(&self) -> Result<LanguageModel> {
        self.expect(ModelKind::LanguageModel)?;
        LanguageModel::with_parameters(self.config.clone(), &self.parameters()?)
    }

    pub fn classifier(&self) -> Result<Classifier> {
        self.expect(ModelKind::Classifier)?;
        Classifier::with_parameters(self.config.clone(), &self.parameters()?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
