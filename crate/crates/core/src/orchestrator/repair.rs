//! The bounded repair loop for unusable reward programs.

use thiserror::Error;

use super::state::RepairAttempt;
use crate::feedback::{
    llm_generate, CallOptions, ChatBackend, ChatTurn, FeedbackError, GenerationError, PromptContext, PromptKind,
};
use crate::lang::{RewardLangError, RewardProgram};

#[derive(Debug, Error)]
pub enum RepairFailure {
    #[error("no usable reward program after {attempts} repair attempt(s); last error: {last_error}")]
    Exhausted { attempts: usize, last_error: String },
    #[error(transparent)]
    Backend(#[from] FeedbackError),
}

/// Feeds `error` back through the error prompt until a reply yields a program
/// that passes `check`, or `budget` rounds are spent.
///
/// `history` must end with the user prompt and assistant reply that failed;
/// each round appends its own prompt and reply. Every round is pushed onto
/// `attempts`, with its rejection reason filled in when it fails.
#[allow(clippy::too_many_arguments)]
pub fn repair_program(
    backend: &mut dyn ChatBackend,
    history: &mut Vec<ChatTurn>,
    error: &GenerationError,
    budget: usize,
    ctx: &PromptContext,
    options: &CallOptions,
    check: &mut dyn FnMut(&RewardProgram) -> Result<(), RewardLangError>,
    attempts: &mut Vec<RepairAttempt>,
) -> Result<RewardProgram, RepairFailure> {
    let mut last_error = error.to_string();
    for _ in 0..budget {
        let ctx = PromptContext {
            error: last_error.clone(),
            ..ctx.clone()
        };
        let generation = llm_generate(backend, history, PromptKind::LlmError, &ctx, options.clone())?;
        history.push(ChatTurn::user(generation.prompt.clone()));
        history.push(ChatTurn::assistant(generation.reply.clone()));
        let verdict = generation
            .outcome
            .and_then(|program| check(&program).map(|()| program).map_err(GenerationError::from));
        attempts.push(RepairAttempt {
            trigger: last_error.clone(),
            prompt: generation.prompt,
            reply: generation.reply,
            error: verdict.as_ref().err().map(ToString::to_string),
        });
        match verdict {
            Ok(program) => return Ok(program),
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(RepairFailure::Exhausted {
        attempts: budget,
        last_error,
    })
}
