//! A synthetic multiple-choice task with a known answer to its explanations.
//!
//! Questions are random filler words and carry no signal, so a classifier
//! without explanations sits at chance. Every explanation names the gold
//! choice and no distractor, so one that reads explanations can be exact.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Annotation, Example, Span};

const ANSWERS: [&str; 24] = [
    "apple", "river", "garden", "hammer", "violin", "candle", "blanket", "bicycle", "kettle", "mirror",
    "pencil", "ladder", "window", "basket", "pillow", "anchor", "lantern", "wallet", "helmet", "carpet",
    "bottle", "saddle", "bucket", "trumpet",
];

const FILLER: [&str; 32] = [
    "where", "would", "someone", "usually", "find", "keep", "after", "before", "during", "morning",
    "evening", "quiet", "busy", "small", "large", "old", "new", "near", "inside", "outside", "house",
    "street", "friend", "family", "work", "school", "travel", "store", "city", "village", "winter", "summer",
];

const TEMPLATES: [&str; 6] = [
    "people usually reach for the {} here",
    "the {} is what fits this situation",
    "most folks would think of a {} first",
    "a {} is the natural thing to use",
    "you would expect to see the {} there",
    "it makes sense to bring a {} along",
];

/// Shape of a generated task.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticConfig {
    pub n_choices: usize,
    pub question_words: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { n_choices: 3, question_words: 6, seed: 0 }
    }
}

/// `count` examples with ids `{prefix}{i}`, each paired with a gold-only
/// explanation that passes the collection gates.
pub fn generate(prefix: &str, count: usize, config: SyntheticConfig) -> Vec<(Example, Annotation)> {
    assert!(config.n_choices >= 2 && config.n_choices <= ANSWERS.len());
    assert!(config.question_words >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..count)
        .map(|i| {
            let words: Vec<&str> = (0..config.question_words)
                .map(|_| *FILLER.choose(&mut rng).expect("filler pool is non-empty"))
                .collect();
            let question = format!("{}?", words.join(" "));
            let mut choices: Vec<String> = ANSWERS
                .choose_multiple(&mut rng, config.n_choices)
                .map(|s| s.to_string())
                .collect();
            choices.shuffle(&mut rng);
            let gold = rng.random_range(0..config.n_choices);
            let template = TEMPLATES.choose(&mut rng).expect("template pool is non-empty");
            let explanation = template.replace("{}", &choices[gold]);
            let id = format!("{prefix}{i}");
            let example = Example::new(id.clone(), question, choices, Some(gold)).expect("valid synthetic example");
            let annotation = Annotation::new(id, explanation, vec![Span(0, words[0].chars().count())])
                .expect("valid synthetic annotation");
            (example, annotation)
        })
        .collect()
}

/// Train and eval splits drawn from independent streams.
pub fn task(n_train: usize, n_eval: usize, seed: u64) -> (Vec<(Example, Annotation)>, Vec<(Example, Annotation)>) {
    let config = |s| SyntheticConfig { seed: s, ..SyntheticConfig::default() };
    (
        generate("train-", n_train, config(seed)),
        generate("eval-", n_eval, config(seed.wrapping_add(0x9e37_79b9))),
    )
}

/// The 32 pairs used as a memorization check for the explanation LM.
pub fn memorization_set(seed: u64) -> Vec<(Example, Annotation)> {
    generate("mem-", 32, SyntheticConfig { seed, ..SyntheticConfig::default() })
}
