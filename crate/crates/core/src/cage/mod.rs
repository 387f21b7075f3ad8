//! The explain-then-predict framework: LM prompts, explanation generation,
//! classifier inputs, pipeline variants and misleading perturbations.

mod classify;
mod context;
mod explain;
mod io;
mod perturb;
mod pipeline;

pub use classify::{
    assemble_input, build_classifier_input, choice_sets, predict, set_accuracy, train_classifier, ChoiceSet,
    ClassifierEpoch, Prediction, TrainedClassifier,
};
pub use context::{build_context, choice_list, encode_context, ConditioningMode};
pub use explain::{
    decode_explanation, finetune_lm, generate_explanations, lm_pairs, select_epoch, transfer_explanations,
    FinetunedLm, LmEpoch, LmPair, LmTrainer, MAX_GENERATE,
};
pub use io::{
    generated_records, load_generated, load_predictions, prediction_records, write_generated, write_predictions,
    GeneratedRecord, PredictionRecord,
};
pub use perturb::{mislead, perturb_misleading};
pub use pipeline::{
    run_pipeline, run_with_base, variant_sets, Datasets, ExplanationInput, ExplanationSource, PipelineRun,
    PipelineSpec,
};
