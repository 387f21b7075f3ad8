//! Property tests over the pure parts of the library.

use std::collections::HashMap;

use cage_core::cage::{assemble_input, build_context, perturb_misleading, ConditioningMode};
use cage_core::corpus::{Annotation, Example, Span};
use cage_core::metrics::{accuracy, bleu, perplexity, round6, ExplanationScorer};
use cage_core::neural::{argmax, softmax, TrainSchedule};
use cage_core::text::normalize;
use cage_core::tokenizer::SEP;
use cage_core::Result;
use proptest::prelude::*;

fn words(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-e]", 0..max)
}

struct Table(Vec<f64>);

impl ExplanationScorer for Table {
    fn explanation_log_probs(&self, _: &[usize], explanation: &[usize]) -> Result<Vec<f64>> {
        Ok(explanation.iter().map(|&i| self.0[i].ln()).collect())
    }
}

proptest! {
    #[test]
    fn bleu_is_bounded(c in prop::collection::vec(words(12), 1..5), r in prop::collection::vec(words(12), 1..5)) {
        let n = c.len().min(r.len());
        let b = bleu(&c[..n], &r[..n], 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn bleu_of_itself_is_one(x in prop::collection::vec(prop::collection::vec("[a-z]{1,3}", 4..12), 1..4)) {
        prop_assert_eq!(bleu(&x, &x, 4).unwrap(), 1.0);
    }

    #[test]
    fn brevity_penalty_only_when_short(c in prop::collection::vec("[ab]", 1..10), extra in 0usize..5) {
        let mut r = c.clone();
        r.extend(std::iter::repeat_n("z".to_string(), extra));
        let b = bleu(&[c.clone()], &[r.clone()], 1).unwrap();
        let expected = if extra == 0 { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
        prop_assert!((b - expected).abs() < 1e-12);
    }

    #[test]
    fn perplexity_at_least_one_and_monotone(
        probs in prop::collection::vec(0.01f64..1.0, 1..8),
        bump in 0.001f64..0.5,
    ) {
        let pairs = vec![(vec![0], (0..probs.len()).collect::<Vec<_>>())];
        let p = perplexity(&Table(probs.clone()), &pairs).unwrap();
        prop_assert!(p >= 1.0);
        let better: Vec<f64> = probs.iter().map(|q| q + bump * (1.0 - q)).collect();
        if probs.iter().any(|&q| q < 1.0) {
            prop_assert!(perplexity(&Table(better), &pairs).unwrap() < p);
        }
    }

    #[test]
    fn accuracy_ignores_order(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..30), seed in any::<u64>()) {
        let pred: Vec<(String, usize)> = pairs.iter().enumerate().map(|(i, p)| (i.to_string(), p.0)).collect();
        let gold: HashMap<String, usize> = pairs.iter().enumerate().map(|(i, p)| (i.to_string(), p.1)).collect();
        let mut shuffled = pred.clone();
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        let a = accuracy(&pred.into_iter().collect(), &gold).unwrap();
        let b = accuracy(&shuffled.into_iter().collect(), &gold).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn prediction_ignores_common_shift(scores in prop::collection::vec(-5.0f64..5.0, 2..6), shift in -100.0f64..100.0) {
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        prop_assert_eq!(argmax(softmax(&scores)), argmax(softmax(&shifted)));
        prop_assert_eq!(argmax(scores.iter().copied()), argmax(shifted.iter().copied()));
    }

    #[test]
    fn classifier_input_fits_and_keeps_choice(
        q in 0usize..200,
        e in prop::option::of(0usize..60),
        c in 1usize..6,
        max_len in 10usize..180,
    ) {
        let question: Vec<usize> = (100..100 + q).collect();
        let explanation: Option<Vec<usize>> = e.map(|e| (400..400 + e).collect());
        let choice: Vec<usize> = (900..900 + c).collect();
        let input = assemble_input(&question, explanation.as_deref(), &choice, max_len).unwrap();
        prop_assert!(input.tokens.len() <= max_len);
        prop_assert_eq!(&input.tokens[input.tokens.len() - c..], &choice[..]);
        prop_assert_eq!(input.tokens.iter().filter(|&&t| t == SEP).count(), 1 + e.is_some() as usize);
        prop_assert!(input.segments.iter().filter(|&&s| s == 1).count() == c);
        // the question is cut only once the explanation is gone
        let kept_q = input.tokens.iter().filter(|&&t| (100..300).contains(&t)).count();
        let kept_e = input.tokens.iter().filter(|&&t| (400..460).contains(&t)).count();
        if kept_q < q {
            prop_assert_eq!(kept_e, 0);
        }
    }

    #[test]
    fn schedule_is_piecewise_linear(peak in 1e-5f64..1e-2, prop_w in 0.0f64..0.5, total in 2u64..500) {
        let s = TrainSchedule::new(peak, prop_w, 0.0, total);
        let w = s.warmup_steps();
        prop_assert!(s.lr(0) <= peak);
        prop_assert!((s.lr(w) - peak).abs() < 1e-15);
        prop_assert_eq!(s.lr(total), 0.0);
        for step in 0..total {
            prop_assert!(s.lr(step) >= 0.0 && s.lr(step) <= peak + 1e-15);
        }
    }

    #[test]
    fn contexts_share_the_choice_segment(
        q in "[a-z]{1,8}( [a-z]{1,8}){0,6}\\?",
        choices in prop::collection::btree_set("[a-z]{2,6}", 2..6),
        label in 0usize..5,
    ) {
        let choices: Vec<String> = choices.into_iter().collect();
        let label = label % choices.len();
        let ex = Example::new("p", q, choices, Some(label)).unwrap();
        let re = build_context(&ex, ConditioningMode::Reasoning, None).unwrap();
        let ra = build_context(&ex, ConditioningMode::Rationalization, Some(label)).unwrap();
        let cut = re.rfind("? ").unwrap() + 2;
        prop_assert_eq!(&re[..cut], &ra[..cut]);
        prop_assert!(re.ends_with("? commonsense says"));
        let expected_suffix = format!("? {} because", ex.choices[label]);
        prop_assert!(ra.ends_with(&expected_suffix));
    }

    #[test]
    fn perturbation_touches_exactly_n(size in 1usize..20, n in 0usize..20, seed in any::<u64>()) {
        let n = n.min(size);
        let data: Vec<(Example, Annotation)> = (0..size)
            .map(|i| {
                let ex = Example::new(format!("x{i}"), "where is it kept?", vec!["apple".into(), "river".into(), "garden".into()], Some(i % 3)).unwrap();
                let ann = Annotation::new(ex.id.clone(), format!("the {} is where it is kept", ex.choices[i % 3]), vec![Span(0, 5)]).unwrap();
                (ex, ann)
            })
            .collect();
        let (out, ids) = perturb_misleading(&data, n, seed).unwrap();
        prop_assert_eq!(ids.len(), n);
        prop_assert_eq!(out.iter().zip(&data).filter(|(a, b)| a.1 != b.1).count(), n);
        prop_assert!(out.iter().zip(&data).all(|(a, b)| a.0 == b.0));
        prop_assert_eq!(perturb_misleading(&data, n, seed).unwrap().1, ids);
    }

    #[test]
    fn normalization_is_idempotent(text in "\\PC{0,40}") {
        let once = normalize(&text);
        prop_assert_eq!(normalize(&once.join(" ")), once);
    }

    #[test]
    fn rounding_is_stable(x in -1e6f64..1e6) {
        let r = round6(x);
        prop_assert_eq!(round6(r), r);
        prop_assert!((r - x).abs() <= 5e-7 + 1e-9 * x.abs());
    }
}
