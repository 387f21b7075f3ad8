//! Overlap statistics for an explanation corpus. Pass `examples.jsonl
//! annotations.jsonl` to measure your own data; otherwise a synthetic corpus
//! with half of its explanations rewritten towards a distractor is used.

use std::collections::HashMap;

use cage_core::cage::perturb_misleading;
use cage_core::corpus::{join, load_annotations, load_examples, Annotation, Example};
use cage_core::quality::overlap_stats;
use cage_core::synthetic;

fn main() -> cage_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (examples, pairs): (Vec<Example>, Vec<(Example, Annotation)>) = match args.as_slice() {
        [ex, an] => {
            let examples = load_examples(ex)?;
            let pairs = join(&examples, &load_annotations(an)?)?;
            (examples, pairs)
        }
        _ => {
            let data = synthetic::generate("s", 400, synthetic::SyntheticConfig::default());
            let (mixed, _) = perturb_misleading(&data, 200, 1)?;
            (mixed.iter().map(|(e, _)| e.clone()).collect(), mixed)
        }
    };
    let annotations: HashMap<String, Annotation> = pairs.into_iter().map(|(e, a)| (e.id, a)).collect();
    let stats = overlap_stats(&examples, &annotations)?;
    println!("{} explanations", stats.n);
    println!("contain the answer      {:5.1}%", stats.pct_contains_answer);
    println!("contain a distractor    {:5.1}%", stats.pct_contains_distractor);
    println!("contain either          {:5.1}%", stats.pct_contains_either);
    println!("share a question bigram {:5.1}%", stats.pct_bigram);
    Ok(())
}
