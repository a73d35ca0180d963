//! Core of the claim-matching toolkit: domain records and their JSON-lines
//! codec, hybrid lexical/semantic pairing, prompt templates, vote
//! aggregation and evaluation metrics.

pub mod annotate;
pub mod domain;
pub mod evalkit;
pub mod exec;
pub mod finetune;
pub mod matcher;
pub mod promptkit;

pub use domain::{
    decode_records, encode_records, Claim, EntailmentLabel, GoldLabel, Outcome, PairCandidate,
    Post, Prediction, Record, SyntheticExample, Vote, VoteSet,
};
pub use exec::Execution;
pub use promptkit::PromptMessages;
