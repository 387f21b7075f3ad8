//! Misleading explanations: rewrite a sample of annotations so they argue
//! for a distractor.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Annotation, Example};
use crate::error::{Error, Result};
use crate::text::{normalize, replace_runs};

/// `"{distractor} because {explanation}"` with every occurrence of the gold
/// choice's token run swapped for the distractor's.
pub fn mislead(explanation: &str, gold: &str, distractor: &str) -> String {
    let rewritten = replace_runs(&normalize(explanation), &normalize(gold), &normalize(distractor));
    format!("{distractor} because {}", rewritten.join(" "))
}

/// Rewrites `n` uniformly sampled annotations towards a uniformly chosen
/// distractor. Returns the new dataset and the sampled ids in sample order.
pub fn perturb_misleading(
    dataset: &[(Example, Annotation)],
    n: usize,
    seed: u64,
) -> Result<(Vec<(Example, Annotation)>, Vec<String>)> {
    if n > dataset.len() {
        return Err(Error::Argument(format!("cannot perturb {n} of {} examples", dataset.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.to_vec();
    let mut ids = Vec::with_capacity(n);
    for i in sample(&mut rng, dataset.len(), n).into_iter() {
        let (example, annotation) = &mut out[i];
        let gold = example
            .answer_index
            .ok_or_else(|| Error::Input(format!("{} has no gold answer to contradict", example.id)))?;
        if example.choices.len() < 2 {
            return Err(Error::Input(format!("{} has no distractor", example.id)));
        }
        let pick = rng.random_range(0..example.choices.len() - 1);
        let distractor = if pick >= gold { pick + 1 } else { pick };
        annotation.open_ended = mislead(&annotation.open_ended, &example.choices[gold], &example.choices[distractor]);
        ids.push(example.id.clone());
    }
    Ok((out, ids))
}
