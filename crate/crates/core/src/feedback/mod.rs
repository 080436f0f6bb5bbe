//! Prompts, reply parsing, and calls to the upper-level (visual) and
//! lower-level (reward-writing) backends.

mod backend;
mod parse;
mod prompts;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{encode_png, observation_schema, EnvConfig, Frame, FrameError, ObservationSchema};
use crate::lang::{parse_program, validate_program, RewardLangError, RewardProgram};

pub use backend::{
    connect, expert_frame_url, fixture_file_name, learner_frame_url, request_body, response_text,
    BackendConfig, BackendError, BackendKind, ChatBackend, ChatRequest, ChatTurn, FeedbackSubmission,
    HttpBackend, HumanBackend, HumanChannel, Media, PendingFeedback, RequestMeta, Role, ScriptedBackend,
    SubmitError, API_KEY_ENV,
};
pub use parse::{extract_program_block, parse_vlm_feedback, sample_indices, ExtractionError, FeedbackRecord};
pub use prompts::{placeholders, render_prompt, PromptContext, PromptError, PromptKind, TEMPLATE_VERSION};

/// Most images sent per video.
pub const FRAME_CAP: usize = 16;

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("at least one {0} frame is required")]
    NoFrames(&'static str),
}

/// Sampled frames as PNG attachments plus the indices they came from.
pub fn frames_to_media(frames: &[Frame], cap: usize) -> Result<(Vec<usize>, Vec<Media>), FrameError> {
    let indices = sample_indices(frames.len(), cap);
    let media = indices
        .iter()
        .map(|&i| {
            Ok(Media {
                media_type: "image/png".into(),
                data: encode_png(&frames[i])?,
            })
        })
        .collect::<Result<Vec<_>, FrameError>>()?;
    Ok((indices, media))
}

/// Initial description of the expert demonstration.
pub fn vlm_describe(
    backend: &mut dyn ChatBackend,
    expert: &[Frame],
    ctx: &PromptContext,
    mut meta: RequestMeta,
) -> Result<String, FeedbackError> {
    if expert.is_empty() {
        return Err(FeedbackError::NoFrames("expert"));
    }
    let system = render_prompt(PromptKind::VlmSystem, ctx)?;
    let prompt = render_prompt(PromptKind::VlmInitial, ctx)?;
    let (indices, media) = frames_to_media(expert, FRAME_CAP)?;
    meta.kind = Some(PromptKind::VlmInitial);
    meta.expert_frames = indices;
    let request = ChatRequest {
        turns: vec![ChatTurn::system(system), ChatTurn::user(prompt).with_media(media)],
        temperature: 0.0,
        meta,
    };
    Ok(backend.complete(&request)?)
}

/// Review of the learner's behaviour against the expert's. Expert images are
/// attached first.
pub fn vlm_review(
    backend: &mut dyn ChatBackend,
    expert: &[Frame],
    learner: &[Frame],
    ctx: &PromptContext,
    mut meta: RequestMeta,
) -> Result<FeedbackRecord, FeedbackError> {
    if expert.is_empty() {
        return Err(FeedbackError::NoFrames("expert"));
    }
    if learner.is_empty() {
        return Err(FeedbackError::NoFrames("learner"));
    }
    let system = render_prompt(PromptKind::VlmSystem, ctx)?;
    let prompt = render_prompt(PromptKind::VlmReview, ctx)?;
    let (expert_idx, mut media) = frames_to_media(expert, FRAME_CAP)?;
    let (learner_idx, learner_media) = frames_to_media(learner, FRAME_CAP)?;
    media.extend(learner_media);
    meta.kind = Some(PromptKind::VlmReview);
    meta.expert_frames = expert_idx;
    meta.learner_frames = learner_idx;
    meta.reward_text = ctx.reward_program.clone();
    meta.stats_summary = ctx.stats_summary.clone();
    let request = ChatRequest {
        turns: vec![ChatTurn::system(system), ChatTurn::user(prompt).with_media(media)],
        temperature: 0.0,
        meta,
    };
    Ok(parse_vlm_feedback(&backend.complete(&request)?))
}

/// Why a reply did not yield a usable program. Fed back through the repair
/// prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GenerationError {
    Extraction(ExtractionError),
    Lang(RewardLangError),
}

impl fmt::Display for GenerationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenerationError::Extraction(e) => e.fmt(f),
            GenerationError::Lang(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for GenerationError {}

impl From<RewardLangError> for GenerationError {
    fn from(e: RewardLangError) -> Self {
        GenerationError::Lang(e)
    }
}

/// Extracts, parses and validates the program carried by a reply.
pub fn interpret_reply(reply: &str, schema: &ObservationSchema) -> Result<RewardProgram, GenerationError> {
    let source = extract_program_block(reply).map_err(GenerationError::Extraction)?;
    let program = parse_program(&source)?;
    validate_program(&program, schema)?;
    Ok(program)
}

/// One reward-writing call.
#[derive(Debug, Clone)]
pub struct Generation {
    /// The user turn that was sent.
    pub prompt: String,
    pub reply: String,
    pub outcome: Result<RewardProgram, GenerationError>,
}

/// Per-call settings for [`llm_generate`].
#[derive(Debug, Clone, Default)]
pub struct CallOptions {
    pub temperature: f64,
    pub meta: RequestMeta,
    /// Images attached to the new user turn.
    pub media: Vec<Media>,
}

/// Renders `kind`, appends it to `history` as a user turn, and interprets the
/// reply. Parse and validation failures are returned inside the
/// [`Generation`]; only transport and template problems are errors.
pub fn llm_generate(
    backend: &mut dyn ChatBackend,
    history: &[ChatTurn],
    kind: PromptKind,
    ctx: &PromptContext,
    mut options: CallOptions,
) -> Result<Generation, FeedbackError> {
    let prompt = render_prompt(kind, ctx)?;
    let mut turns = history.to_vec();
    turns.push(ChatTurn::user(prompt.clone()).with_media(std::mem::take(&mut options.media)));
    options.meta.kind = Some(kind);
    let request = ChatRequest {
        turns,
        temperature: options.temperature,
        meta: options.meta,
    };
    let reply = backend.complete(&request)?;
    let outcome = interpret_reply(&reply, &observation_schema(&EnvConfig::default()));
    Ok(Generation {
        prompt,
        reply,
        outcome,
    })
}

/// Conversation prefix shared by every reward-writing call.
pub fn llm_system_turn(ctx: &PromptContext) -> Result<ChatTurn, PromptError> {
    Ok(ChatTurn::system(render_prompt(PromptKind::LlmSystem, ctx)?))
}

/// Assistant turn echoing a program in the fenced reply format.
pub fn program_turn(program_text: &str) -> ChatTurn {
    ChatTurn::assistant(format!(
        "```{}\n{}\n```",
        crate::lang::PROGRAM_FENCE_TAG,
        program_text
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{render_frame, EnvState};
    use crate::lang::grammar_help_text;

    struct Capture {
        inner: ScriptedBackend,
        seen: Vec<ChatRequest>,
    }

    impl ChatBackend for Capture {
        fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
            self.seen.push(request.clone());
            self.inner.complete(request)
        }
    }

    fn capture(replies: &[&str]) -> Capture {
        Capture {
            inner: ScriptedBackend::from_replies(replies.iter().copied()),
            seen: Vec::new(),
        }
    }

    fn ctx() -> PromptContext {
        let env = EnvConfig::default();
        PromptContext {
            creature: "spider".into(),
            task: "hop forward".into(),
            env_context: crate::env::env_context_text(&env),
            reward_program: "r = vel_x".into(),
            epochfreq: Some(10),
            stats_summary: "STATS-BYTES".into(),
            feedback: "1. Problems: slow".into(),
            error: String::new(),
            grammar_help: grammar_help_text().into(),
        }
    }

    fn frames(n: usize) -> Vec<Frame> {
        (0..n)
            .map(|i| {
                render_frame(
                    &EnvState {
                        x: i as f64 * 0.1,
                        ..EnvState::default()
                    },
                    16,
                    16,
                )
            })
            .collect()
    }

    #[test]
    fn describe_pops_fixture_and_attaches_sampled_frames() {
        let mut b = capture(&["d0"]);
        let text = vlm_describe(&mut b, &frames(40), &ctx(), RequestMeta::default()).unwrap();
        assert_eq!(text, "d0");
        let req = &b.seen[0];
        assert_eq!(req.turns.len(), 2);
        assert_eq!(req.turns[1].media.len(), 16);
        assert_eq!(req.meta.expert_frames[1], 2);
        assert!(vlm_describe(&mut b, &[], &ctx(), RequestMeta::default()).is_err());
    }

    #[test]
    fn review_sends_reward_and_stats() {
        let mut b = capture(&["1. Problems: not jumping\n2. Rewrite Component: none"]);
        let record = vlm_review(&mut b, &frames(3), &frames(5), &ctx(), RequestMeta::default()).unwrap();
        assert_eq!(record.problems.as_deref(), Some("not jumping"));
        let prompt = &b.seen[0].turns[1];
        assert!(prompt.text.contains("This was the reward function:\nr = vel_x"));
        assert!(prompt.text.contains("STATS-BYTES"));
        assert_eq!(prompt.media.len(), 8);
    }

    #[test]
    fn generate_outcomes() {
        let mut b = capture(&["```reward\nr = vel_x\n```", "```reward\nr = = 1\n```"]);
        let system = llm_system_turn(&ctx()).unwrap();
        let g = llm_generate(&mut b, &[system.clone()], PromptKind::LlmInitial, &ctx(), CallOptions::default()).unwrap();
        assert_eq!(g.outcome.unwrap().components.len(), 1);
        assert!(g.prompt.contains(&ctx().env_context));
        let g = llm_generate(&mut b, &[system], PromptKind::LlmInitial, &ctx(), CallOptions::default()).unwrap();
        let err = g.outcome.unwrap_err();
        assert!(matches!(err, GenerationError::Lang(_)));
        assert_eq!(err.to_string(), "parse error at line 1, column 5: expected expression");
    }

    #[test]
    fn unknown_identifier_is_returned() {
        let schema = observation_schema(&EnvConfig::default());
        let err = interpret_reply("```reward\nr = torso_quat\n```", &schema).unwrap_err();
        assert!(err.to_string().contains("torso_quat"));
        assert!(matches!(
            interpret_reply("plain text", &schema),
            Err(GenerationError::Extraction(_))
        ));
    }
}
