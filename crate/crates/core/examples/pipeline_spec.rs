//! A full run driven by a spec file: data on disk, a TOML spec, and the
//! metrics report it produces.

use cage_core::cage::{run_with_base, Datasets, PipelineSpec};
use cage_core::corpus::{write_annotations, write_examples, Annotation, Example};
use cage_core::metrics::to_fixed_json;
use cage_core::synthetic;

const SPEC: &str = r#"
variant = "open_ended"
explanation_source = "generated-reasoning"
use_explanations_at_train = true
use_explanations_at_eval = true
lm_preset = "tiny"
classifier_preset = "tiny"
lm_epochs = 2
seed = 1
train_examples = "train.jsonl"
train_annotations = "train_explanations.jsonl"
eval_examples = "eval.jsonl"
eval_annotations = "eval_explanations.jsonl"
"#;

fn main() -> cage_core::Result<()> {
    let dir = std::env::temp_dir().join("cage-pipeline-example");
    std::fs::create_dir_all(&dir).map_err(|e| cage_core::Error::Io { path: dir.clone(), source: e })?;
    let (train, eval) = synthetic::task(60, 20, 1);
    for (name, data) in [("train", &train), ("eval", &eval)] {
        let (examples, annotations): (Vec<Example>, Vec<Annotation>) = data.iter().cloned().unzip();
        write_examples(dir.join(format!("{name}.jsonl")), &examples)?;
        write_annotations(dir.join(format!("{name}_explanations.jsonl")), &annotations)?;
    }
    let spec = PipelineSpec::from_toml(SPEC)?;
    let data = Datasets::load(&spec, &dir)?;
    let run = run_with_base(&spec, &data, &dir)?;
    println!("{}", to_fixed_json(&run.report)?);
    for g in run.generated.iter().take(3) {
        println!("{}: {}", g.id, g.explanation);
    }
    Ok(())
}
