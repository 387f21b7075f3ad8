//! Future tokens never influence past logits; attention rows are proper
//! distributions with exact zeros above the diagonal.

use cage_core::neural::{LanguageModel, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> LanguageModel {
    LanguageModel::new(ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 16,
        d_ff: 32,
        max_len: 24,
        vocab_size: 50,
        dropout: 0.0,
        seed: 5,
    })
    .unwrap()
}

#[test]
fn future_tokens_do_not_leak() {
    let lm = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.random_range(2..=24);
        let tokens: Vec<usize> = (0..len).map(|_| rng.random_range(0..50)).collect();
        let t = rng.random_range(0..len - 1);
        let mut changed = tokens.clone();
        for tok in &mut changed[t + 1..] {
            *tok = rng.random_range(0..50);
        }
        let a = lm.logits(&tokens).unwrap();
        let b = lm.logits(&changed).unwrap();
        for row in 0..=t {
            for (x, y) in a.row(row).iter().zip(b.row(row)) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    assert!(worst <= 1e-12, "max past-logit change {worst}");
}

#[test]
fn attention_rows_are_causal_distributions() {
    let lm = tiny();
    let tokens: Vec<usize> = (0..12).map(|i| (i * 7) % 50).collect();
    let maps = lm.attention_maps(&tokens).unwrap();
    assert_eq!(maps.len(), 2 * 2);
    for map in maps {
        for (i, row) in map.rows().into_iter().enumerate() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().skip(i + 1).all(|&w| w == 0.0));
        }
    }
}
