//! Compare backpropagated gradients of a small language model with central
//! finite differences.

use cage_core::neural::{grad_check, GradCheckOptions, LanguageModel, ModelConfig};
use cage_core::tokenizer::{BOS, EOS};

fn main() -> cage_core::Result<()> {
    let config = ModelConfig { n_layers: 2, n_heads: 2, d_model: 16, d_ff: 32, max_len: 16, vocab_size: 50, dropout: 0.0, seed: 1 };
    let mut lm = LanguageModel::new(config)?;
    let (context, explanation) = ([BOS, 10, 11, 12], [20, 21, EOS]);
    let mut grads = lm.params().zeros_like();
    lm.accumulate_gradients(&context, &explanation, &mut grads, 1.0, None)?;
    let report = grad_check(
        &mut lm,
        |m| m.params_mut(),
        |m| m.loss(&context, &explanation).expect("valid sequence"),
        &grads,
        GradCheckOptions::default(),
    );
    for t in &report.tensors {
        println!("{:<18} {:>3} coords  {:.2e}", t.name, t.coordinates, t.max_rel_error);
    }
    println!("max relative error {:.2e}", report.max_rel_error);
    Ok(())
}
