//! Corpus BLEU on a few generated explanations and the perplexity of an
//! untrained (uniform) language model.

use cage_core::metrics::{bleu_smoothed, perplexity, text_bleu};
use cage_core::text::normalize;
use cage_core::neural::{LanguageModel, ModelConfig};
use cage_core::tokenizer::BOS;

fn main() -> cage_core::Result<()> {
    let references = ["people go to the park to have fun", "a kettle is used to boil water"];
    for candidates in [references, ["people go to a park for fun", "a kettle is for water"]] {
        let tokens = |xs: &[&str]| xs.iter().map(|x| normalize(x)).collect::<Vec<_>>();
        let smoothed = bleu_smoothed(&tokens(&candidates), &tokens(&references), 4)?;
        println!(
            "BLEU {:6.2} (add-one smoothed {:6.2}) for {candidates:?}",
            100.0 * text_bleu(&candidates, &references)?,
            100.0 * smoothed
        );
    }

    let config = ModelConfig { n_layers: 1, n_heads: 2, d_model: 16, d_ff: 32, max_len: 32, vocab_size: 40, dropout: 0.0, seed: 0 };
    let mut lm = LanguageModel::new(config)?;
    lm.params_mut().by_name_mut("lm_head.w").expect("output projection").fill(0.0);
    let pairs = vec![(vec![BOS, 7, 8, 9], vec![10, 11, 12]), (vec![BOS, 13], vec![14, 15])];
    println!("perplexity of a uniform model over 40 tokens: {:.6}", perplexity(&lm, &pairs)?);
    Ok(())
}
