//! From-scratch numerical core: reverse-mode tape, transformer stacks, the
//! explanation language model, the choice classifier, AdamW and gradient
//! checking. All arithmetic is `f64`.

mod checkpoint;
mod classifier;
mod config;
mod gradcheck;
mod lm;
mod optim;
mod params;
pub mod tape;
mod transformer;

pub use checkpoint::{Checkpoint, ModelKind};
pub use classifier::{softmax, Classifier, ClassifierInput};
pub use config::{ClassifierHyper, LmHyper, ModelConfig, Preset, TrainSchedule};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, TensorCheck};
pub use lm::{argmax, LanguageModel, Strategy};
pub use optim::AdamW;
pub use params::{Gradients, Mat, ParamId, Parameters};
