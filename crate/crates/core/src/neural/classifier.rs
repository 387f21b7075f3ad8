//! Bidirectional encoder that scores each answer choice from its `[CLS]`
//! state and normalizes the scores across choices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::params::{Gradients, Mat, ParamId, Parameters};
use super::tape::{softmax_rows, Tape, Var};
use super::transformer::{check_layout, Forward, Stack};
use crate::error::{Error, Result};
use crate::tokenizer::CLS;

/// One encoded `(question, explanation, choice)` sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassifierInput {
    pub tokens: Vec<usize>,
    pub segments: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Classifier {
    config: ModelConfig,
    params: Parameters,
    stack: Stack,
    w_score: ParamId,
    b_score: ParamId,
}

/// Softmax of a score vector.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = Mat::from_shape_vec((1, scores.len()), scores.to_vec()).expect("row shape");
    softmax_rows(&m, false).into_raw_vec_and_offset().0
}

impl Classifier {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Parameters::new();
        let stack = Stack::init(&config, &mut params, true, &mut rng);
        let w_score = params.add_normal("score.w", (config.d_model, 1), 0.02, &mut rng);
        let b_score = params.add("score.b", Mat::zeros((1, 1)));
        Ok(Classifier { config, params, stack, w_score, b_score })
    }

    pub fn with_parameters(config: ModelConfig, params: &Parameters) -> Result<Self> {
        let mut model = Self::new(config)?;
        check_layout(&model.params, params)?;
        model.params.copy_from(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    fn check(&self, input: &ClassifierInput) -> Result<()> {
        if input.tokens.first() != Some(&CLS) {
            return Err(Error::Input("classifier input must start with [CLS]".into()));
        }
        if input.segments.len() != input.tokens.len() {
            return Err(Error::Input("segment ids must align with tokens".into()));
        }
        if input.segments.iter().any(|&s| s > 1) {
            return Err(Error::Input("segment ids must be 0 or 1".into()));
        }
        Ok(())
    }

    /// `1 × n_choices` row of scores.
    fn score_row<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        inputs: &[ClassifierInput],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::Empty("choice list"));
        }
        let mut scores = Vec::with_capacity(inputs.len());
        for input in inputs {
            self.check(input)?;
            let dropout = match dropout.as_deref_mut() {
                Some(rng) if self.config.dropout > 0.0 => Some((self.config.dropout, rng)),
                _ => None,
            };
            let h = self.stack.forward(
                tape,
                &input.tokens,
                Some(&input.segments),
                Forward { causal: false, dropout, attention: None },
            )?;
            let cls = tape.select_rows(h, &[0]);
            let (w, b) = (tape.param(self.w_score), tape.param(self.b_score));
            scores.push(tape.linear(cls, w, b));
        }
        Ok(tape.concat_cols(&scores))
    }

    /// One raw score per choice.
    pub fn scores(&self, inputs: &[ClassifierInput]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let row = self.score_row(&mut tape, inputs, None)?;
        Ok(tape.value(row).iter().copied().collect())
    }

    /// Probability of each choice.
    pub fn probabilities(&self, inputs: &[ClassifierInput]) -> Result<Vec<f64>> {
        Ok(softmax(&self.scores(inputs)?))
    }

    /// Cross-entropy against `gold`; adds `scale * gradient` into `grads`.
    pub fn accumulate_gradients(
        &self,
        inputs: &[ClassifierInput],
        gold: usize,
        grads: &mut Gradients,
        scale: f64,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<f64> {
        if gold >= inputs.len() {
            return Err(Error::Range(format!("gold index {gold} with {} choices", inputs.len())));
        }
        let mut tape = Tape::new(&self.params);
        let row = self.score_row(&mut tape, inputs, dropout)?;
        let loss = tape.cross_entropy(row, &[gold]);
        tape.backward(loss, grads, scale);
        Ok(tape.scalar(loss))
    }

    pub fn loss(&self, inputs: &[ClassifierInput], gold: usize) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let row = self.score_row(&mut tape, inputs, None)?;
        let loss = tape.cross_entropy(row, &[gold]);
        Ok(tape.scalar(loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::SEP;

    fn tiny() -> Classifier {
        Classifier::new(ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 8,
            d_ff: 16,
            max_len: 12,
            vocab_size: 20,
            dropout: 0.0,
            seed: 5,
        })
        .unwrap()
    }

    fn input(tokens: &[usize]) -> ClassifierInput {
        let sep = tokens.iter().position(|&t| t == SEP).unwrap();
        ClassifierInput {
            tokens: tokens.to_vec(),
            segments: (0..tokens.len()).map(|i| usize::from(i > sep)).collect(),
        }
    }

    #[test]
    fn closed_form_softmax() {
        let p = softmax(&[1.0, 0.0, 0.0]);
        let e = std::f64::consts::E;
        let expected = [e / (e + 2.0), 1.0 / (e + 2.0), 1.0 / (e + 2.0)];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_invariance() {
        let p = softmax(&[0.3, -1.2, 2.0]);
        let q = softmax(&[10.3, 8.8, 12.0]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_choices_tie() {
        let c = tiny();
        let x = input(&[CLS, 7, 8, SEP, 9]);
        let p = c.probabilities(&[x.clone(), x.clone(), x]).unwrap();
        assert!((p[0] - p[1]).abs() < 1e-15 && (p[1] - p[2]).abs() < 1e-15);
    }

    #[test]
    fn missing_cls_is_input_error() {
        let c = tiny();
        let bad = ClassifierInput { tokens: vec![7, SEP, 9], segments: vec![0, 0, 1] };
        assert!(matches!(c.scores(&[bad]), Err(Error::Input(_))));
        let long = input(&[CLS, 7, 7, 7, 7, 7, 7, 7, 7, 7, 7, SEP, 9]);
        assert!(matches!(c.scores(&[long]), Err(Error::Length { .. })));
    }
}
