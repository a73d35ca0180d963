//! Prompt templates for synthetic tweet generation and for the three-way
//! entailment question. Both are plain text with LF line endings; inputs are
//! inserted verbatim.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::EntailmentLabel;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptMessages {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("claim text is empty")]
    EmptyClaim,
    #[error("{0} text is empty")]
    EmptyInput(&'static str),
}

pub const GENERATION_PREFIX: &str = "Generate TWEET so that if TWEET is true, ";
pub const GENERATION_SUFFIX: &str = " Be brief. Do not start a sentence with 'Just'.";

pub const ENTAILMENT_SYSTEM: &str =
    "Which of the following best describes the relationship between TWEET and CLAIM?
You must choose from ENTAILMENT, NEUTRAL, or CONTRADICTION.

If TWEET is true:
(ENTAILMENT) then CLAIM is also true.
(NEUTRAL) CLAIM cannot be said to be true or false.
(CONTRADICTION) then CLAIM is false.";

/// What the claim becomes when the tweet is true, per label.
pub fn label_consequence(label: EntailmentLabel) -> &'static str {
    match label {
        EntailmentLabel::Entailment => "then CLAIM is also true.",
        EntailmentLabel::Neutral => "CLAIM cannot be said to be true or false.",
        EntailmentLabel::Contradiction => "then CLAIM is false.",
    }
}

pub fn generation_system_prompt(label: EntailmentLabel) -> String {
    format!(
        "{GENERATION_PREFIX}{}{GENERATION_SUFFIX}",
        label_consequence(label)
    )
}

/// Recovers the requested label from a generation system prompt.
pub fn generation_target(system: &str) -> Option<EntailmentLabel> {
    EntailmentLabel::ALL
        .into_iter()
        .find(|&label| system == generation_system_prompt(label))
}

pub fn build_generation_prompt(
    claim_text: &str,
    target_label: EntailmentLabel,
) -> Result<PromptMessages, PromptError> {
    if claim_text.trim().is_empty() {
        return Err(PromptError::EmptyClaim);
    }
    Ok(PromptMessages {
        system: generation_system_prompt(target_label),
        user: claim_text.to_string(),
    })
}

pub fn build_entailment_prompt(
    tweet_text: &str,
    claim_text: &str,
) -> Result<PromptMessages, PromptError> {
    if tweet_text.trim().is_empty() {
        return Err(PromptError::EmptyInput("tweet"));
    }
    if claim_text.trim().is_empty() {
        return Err(PromptError::EmptyInput("claim"));
    }
    Ok(PromptMessages {
        system: ENTAILMENT_SYSTEM.to_string(),
        user: format!("TWEET: {tweet_text}\nCLAIM: {claim_text}"),
    })
}
