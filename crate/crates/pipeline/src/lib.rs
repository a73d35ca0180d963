//! Model-facing stages: synthetic training data generation with fine-tune
//! orchestration, and entailment classification of candidate pairs.

pub mod classifier;
pub mod synthgen;

pub use classifier::{
    classify_batch, classify_pair, parse_label, resolve_pairs, Checkpoint, ClassifyConfig,
    ClassifyError, ResolvedPair,
};
pub use synthgen::{
    export_finetune_jsonl, generate_balanced_set, run_finetune_pipeline, split_train_validation,
    GenerationOptions, PipelineOptions, SplitConfig, SynthError,
};
