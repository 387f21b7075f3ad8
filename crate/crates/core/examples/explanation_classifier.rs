//! Train the answer classifier with and without explanations on a task whose
//! questions carry no signal, so only the explanations can help. Takes about
//! a minute and a half.

use cage_core::cage::{run_pipeline, Datasets, ExplanationSource, PipelineSpec};
use cage_core::corpus::DatasetVariant;
use cage_core::neural::Preset;
use cage_core::synthetic;

fn spec(oracle: bool) -> PipelineSpec {
    PipelineSpec {
        variant: if oracle { DatasetVariant::OpenEnded } else { DatasetVariant::Baseline },
        explanation_source: if oracle { ExplanationSource::Human } else { ExplanationSource::None },
        use_explanations_at_train: oracle,
        use_explanations_at_eval: oracle,
        lm_preset: Preset::Tiny,
        classifier_preset: Preset::Desk,
        seed: 3,
        train_examples: "in-memory".into(),
        train_annotations: oracle.then(|| "in-memory".into()),
        eval_examples: "in-memory".into(),
        eval_annotations: oracle.then(|| "in-memory".into()),
        lm_checkpoint: None,
        lm_epochs: None,
        classifier_epochs: Some(20),
    }
}

fn main() -> cage_core::Result<()> {
    let (train, eval) = synthetic::task(500, 100, 9);
    let map = |d: &[(cage_core::corpus::Example, cage_core::corpus::Annotation)]| {
        d.iter().map(|(e, a)| (e.id.clone(), a.clone())).collect()
    };
    let data = Datasets {
        train: train.iter().map(|(e, _)| e.clone()).collect(),
        train_annotations: map(&train),
        eval: eval.iter().map(|(e, _)| e.clone()).collect(),
        eval_annotations: map(&eval),
    };
    for oracle in [false, true] {
        let run = run_pipeline(&spec(oracle), &data)?;
        let label = if oracle { "with explanations" } else { "question only" };
        println!("{label:<18} accuracy {:.3}", run.report.accuracy);
    }
    Ok(())
}
