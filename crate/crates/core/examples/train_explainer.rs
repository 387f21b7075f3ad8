//! Fine-tune a small explanation model in rationalization mode on a
//! synthetic corpus, then explain held-out answers. The synthetic questions
//! carry no signal, so the model has to learn to copy the answer it is
//! conditioned on into its explanation.

use std::collections::HashMap;

use cage_core::cage::{finetune_lm, generate_explanations, ConditioningMode, Datasets};
use cage_core::corpus::{Annotation, Example};
use cage_core::neural::Preset;
use cage_core::synthetic;
use cage_core::text::text_contains;

fn main() -> cage_core::Result<()> {
    let (train, eval) = synthetic::task(200, 20, 2);
    let to_map = |d: &[(Example, Annotation)]| d.iter().map(|(e, a)| (e.id.clone(), a.clone())).collect();
    let data = Datasets {
        train: train.iter().map(|(e, _)| e.clone()).collect(),
        train_annotations: to_map(&train),
        eval: eval.iter().map(|(e, _)| e.clone()).collect(),
        eval_annotations: HashMap::new(),
    };
    let vocab = data.vocabulary(false);
    let mut hyper = Preset::Tiny.lm(vocab.len(), 0);
    hyper.epochs = 40;
    let tuned = finetune_lm(&hyper, &vocab, &train, &eval, ConditioningMode::Rationalization)?;
    for e in tuned.epochs.iter().step_by(5) {
        println!("epoch {:>2}: loss {:.3}, held-out perplexity {:.2}", e.epoch, e.train_loss, e.dev_perplexity);
    }
    println!("selected epoch {}", tuned.selected_epoch);

    // explain a random choice rather than the gold one
    let picks: HashMap<String, usize> =
        data.eval.iter().enumerate().map(|(i, e)| (e.id.clone(), i % e.choices.len())).collect();
    let out = generate_explanations(&tuned.model, &vocab, &data.eval, ConditioningMode::Rationalization, Some(&picks))?;
    let mut copied = 0;
    for e in &data.eval {
        let answer = &e.choices[picks[&e.id]];
        copied += text_contains(&out[&e.id], answer) as usize;
        println!("{answer:>8} because {}", out[&e.id]);
    }
    println!("{copied}/{} explanations mention the answer they explain", data.eval.len());
    Ok(())
}
