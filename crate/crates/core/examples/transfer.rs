//! Use an explanation model trained on three-choice questions to explain
//! questions with two and five choices.

use cage_core::cage::{finetune_lm, transfer_explanations, ConditioningMode, Datasets};
use cage_core::synthetic::{self, SyntheticConfig};
use cage_core::neural::Preset;

fn main() -> cage_core::Result<()> {
    let train = synthetic::generate("t", 100, SyntheticConfig::default());
    let mut targets = synthetic::generate("two", 2, SyntheticConfig { n_choices: 2, seed: 5, ..Default::default() });
    targets.extend(synthetic::generate("five", 2, SyntheticConfig { n_choices: 5, seed: 6, ..Default::default() }));
    let data = Datasets {
        train: train.iter().map(|(e, _)| e.clone()).collect(),
        train_annotations: train.iter().map(|(e, a)| (e.id.clone(), a.clone())).collect(),
        eval: targets.iter().map(|(e, _)| e.clone()).collect(),
        ..Default::default()
    };
    let vocab = data.vocabulary(false);
    let tuned = finetune_lm(&Preset::Tiny.lm(vocab.len(), 0), &vocab, &train, &train, ConditioningMode::Reasoning)?;
    let explanations = transfer_explanations(&tuned.model, &vocab, &data.eval)?;
    for e in &data.eval {
        println!("[{}] -> {}", e.choices.join(", "), explanations[&e.id]);
    }
    Ok(())
}
