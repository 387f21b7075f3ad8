use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and regularization of a transformer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Maximum number of positions (the context window).
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.to_string()));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("layer, head and width counts must be positive");
        }
        if self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1");
        }
        if self.vocab_size < 6 {
            return bad("vocab_size must cover the reserved tokens");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Learning-rate schedule and AdamW constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub peak_lr: f64,
    /// Fraction of `total_steps` spent warming up, in `(0, 1]`.
    pub warmup_proportion: f64,
    pub weight_decay: f64,
    pub total_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl TrainSchedule {
    pub fn new(peak_lr: f64, warmup_proportion: f64, weight_decay: f64, total_steps: u64) -> Self {
        TrainSchedule {
            peak_lr,
            warmup_proportion,
            weight_decay,
            total_steps,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_proportion > 0.0 && self.warmup_proportion <= 1.0) {
            return Err(Error::Argument("warmup_proportion must lie in (0, 1]".into()));
        }
        if self.weight_decay < 0.0 || self.peak_lr < 0.0 {
            return Err(Error::Argument("learning rate and weight decay must be non-negative".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Argument("total_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> u64 {
        ((self.warmup_proportion * self.total_steps as f64).ceil() as u64).max(1)
    }

    /// Linear ramp to `peak_lr` over the warmup steps, then linear decay to
    /// zero at `total_steps`. Step 0 already gets one warmup increment.
    pub fn lr(&self, step: u64) -> f64 {
        let warmup = self.warmup_steps();
        if step >= self.total_steps {
            0.0
        } else if step <= warmup {
            self.peak_lr * step.max(1) as f64 / warmup as f64
        } else {
            self.peak_lr * (self.total_steps - step) as f64 / (self.total_steps - warmup) as f64
        }
    }
}

/// Named hyperparameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Values for fine-tuning large pretrained models, kept verbatim.
    Paper,
    /// Training from scratch on a workstation.
    Desk,
    /// Smallest useful models, for smoke tests.
    Tiny,
}

/// Everything needed to train the explanation language model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmHyper {
    pub model: ModelConfig,
    pub peak_lr: f64,
    pub warmup_proportion: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Longest generated explanation, in tokens.
    pub max_generate: usize,
}

/// Everything needed to train the answer classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHyper {
    pub model: ModelConfig,
    pub peak_lr: f64,
    pub warmup_proportion: f64,
    pub weight_decay: f64,
    pub train_batch: usize,
    pub eval_batch: usize,
    pub epochs: usize,
    /// Sequence limit without explanations.
    pub max_len_plain: usize,
    /// Sequence limit when explanations are part of the input.
    pub max_len_explained: usize,
}

impl Preset {
    pub fn lm(self, vocab_size: usize, seed: u64) -> LmHyper {
        let model = |n_layers, n_heads, d_model, d_ff, max_len, dropout| ModelConfig {
            n_layers,
            n_heads,
            d_model,
            d_ff,
            max_len,
            vocab_size,
            dropout,
            seed,
        };
        match self {
            Preset::Paper => LmHyper {
                model: model(12, 12, 768, 3072, 512, 0.1),
                peak_lr: 1e-6,
                warmup_proportion: 0.002,
                weight_decay: 0.01,
                batch_size: 36,
                epochs: 10,
                max_generate: 20,
            },
            Preset::Desk => LmHyper {
                model: model(4, 4, 128, 512, 128, 0.0),
                peak_lr: 3e-4,
                warmup_proportion: 0.002,
                weight_decay: 0.01,
                batch_size: 8,
                epochs: 10,
                max_generate: 20,
            },
            Preset::Tiny => LmHyper {
                model: model(2, 2, 32, 64, 64, 0.0),
                peak_lr: 3e-3,
                warmup_proportion: 0.02,
                weight_decay: 0.01,
                batch_size: 8,
                epochs: 4,
                max_generate: 20,
            },
        }
    }

    pub fn classifier(self, vocab_size: usize, seed: u64) -> ClassifierHyper {
        let model = |n_layers, n_heads, d_model, d_ff, dropout| ModelConfig {
            n_layers,
            n_heads,
            d_model,
            d_ff,
            max_len: 175,
            vocab_size,
            dropout,
            seed,
        };
        match self {
            Preset::Paper => ClassifierHyper {
                model: model(12, 12, 768, 3072, 0.1),
                peak_lr: 2e-5,
                warmup_proportion: 0.1,
                weight_decay: 0.01,
                train_batch: 24,
                eval_batch: 12,
                epochs: 10,
                max_len_plain: 50,
                max_len_explained: 175,
            },
            Preset::Desk => ClassifierHyper {
                model: model(2, 4, 64, 256, 0.0),
                peak_lr: 1e-3,
                warmup_proportion: 0.1,
                weight_decay: 0.01,
                train_batch: 24,
                eval_batch: 12,
                epochs: 10,
                max_len_plain: 50,
                max_len_explained: 175,
            },
            Preset::Tiny => ClassifierHyper {
                model: model(1, 2, 32, 64, 0.0),
                peak_lr: 3e-3,
                warmup_proportion: 0.1,
                weight_decay: 0.01,
                train_batch: 24,
                eval_batch: 12,
                epochs: 3,
                max_len_plain: 50,
                max_len_explained: 175,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = TrainSchedule::new(1.0, 0.1, 0.0, 100);
        assert_eq!(s.warmup_steps(), 10);
        assert_eq!(s.lr(0), 0.1);
        assert_eq!(s.lr(1), 0.1);
        assert_eq!(s.lr(5), 0.5);
        assert_eq!(s.lr(10), 1.0);
        assert_eq!(s.lr(55), 0.5);
        assert_eq!(s.lr(100), 0.0);
        assert!(s.lr(0) <= s.peak_lr);
    }

    #[test]
    fn fractional_warmup_rounds_up() {
        let s = TrainSchedule::new(1e-6, 0.002, 0.01, 2000);
        assert_eq!(s.warmup_steps(), 4);
        assert_eq!(s.lr(4), 1e-6);
    }

    #[test]
    fn schedule_is_piecewise_linear() {
        let s = TrainSchedule::new(2.0, 0.25, 0.0, 40);
        let w = s.warmup_steps();
        for t in 1..w {
            let slope = s.lr(t + 1) - s.lr(t);
            assert!((slope - 2.0 / w as f64).abs() < 1e-12);
        }
        for t in w..s.total_steps {
            let slope = s.lr(t + 1) - s.lr(t);
            assert!((slope + 2.0 / (40 - w) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn config_invariants() {
        let mut c = Preset::Desk.lm(100, 0).model;
        assert!(c.validate().is_ok());
        c.n_heads = 3;
        assert!(c.validate().is_err());
        c.n_heads = 4;
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }
}
