//! Prompt templates for both levels. Placeholders are `{name}`; rendering is a
//! single pass over the template, so substituted text is never rescanned.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::SIGNATURE_EXAMPLE;

pub const TEMPLATE_VERSION: &str = "prompts v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    VlmSystem,
    VlmInitial,
    VlmReview,
    LlmSystem,
    LlmInitial,
    LlmReview,
    LlmError,
    SingleLevelDirect,
}

impl PromptKind {
    pub const ALL: [PromptKind; 8] = [
        PromptKind::VlmSystem,
        PromptKind::VlmInitial,
        PromptKind::VlmReview,
        PromptKind::LlmSystem,
        PromptKind::LlmInitial,
        PromptKind::LlmReview,
        PromptKind::LlmError,
        PromptKind::SingleLevelDirect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptKind::VlmSystem => "vlm_system",
            PromptKind::VlmInitial => "vlm_initial",
            PromptKind::VlmReview => "vlm_review",
            PromptKind::LlmSystem => "llm_system",
            PromptKind::LlmInitial => "llm_initial",
            PromptKind::LlmReview => "llm_review",
            PromptKind::LlmError => "llm_error",
            PromptKind::SingleLevelDirect => "single_level_direct",
        }
    }

    fn template(self) -> &'static str {
        match self {
            PromptKind::VlmSystem => VLM_SYSTEM,
            PromptKind::VlmInitial => VLM_INITIAL,
            PromptKind::VlmReview => VLM_REVIEW,
            PromptKind::LlmSystem => LLM_SYSTEM,
            PromptKind::LlmInitial => LLM_INITIAL,
            PromptKind::LlmReview => LLM_REVIEW,
            PromptKind::LlmError => LLM_ERROR,
            PromptKind::SingleLevelDirect => SINGLE_LEVEL_DIRECT,
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const VLM_SYSTEM: &str = "\
This shows observation with all available variables and information about the environment that LLM has. At any cost,limit the suggestion to what can be implemented from this data:

{env_context}";

const VLM_INITIAL: &str = "\
You are an expert in reinforcement learning and robotics. A Large Language Model (LLM) is tasked with writing a reward function to train a reinforcement learning agent to imitate the motion demonstrated by a {creature} in the video.

The task is {task}. Since the LLM does not have access to the video, your task is to analyze the video and provide a detailed description of the {creature}'s motion to assist the LLM in writing the reward function. The description should contain the goal of the task along with necessary reward function considerations to help in its development. Do not include anything else.

The format of your response must be:

1. Task: A short description of the task.

2. Possible Reward Function Considerations (bullet points): List the three most important components needed to make the task possible. Important: The components should be easy to implement as the LLM writing reward has limited access to information about the environment.";

const VLM_REVIEW: &str = "\
I trained an agent and got the following results. Provide the major problems, along with possible improvements in motion. The format of response should be :
1. Problems: Describe the motion and problems with by carefully studying the video.
2. Rewrite Component: If some component seems to be wrongly implemented, suggest rewriting it.
3. Remove Component: If some component is not needed or is doing harm, then it is good to remove it.
4. New Component: Only if required, suggest new components needed; otherwise, there are none.

Tips for response:
1. Study the videos, reward function, reward component values and prior performances to provide feedback.
2. Do not suggest complicated reward components which are hard to implement.
3. Keep the suggestion limited to what can be changed using the reward function.
4. The output should be only the 4 points mentioned above. Don't include anything else.
5. The Low-Level LLM writing reward function doesn't have access to video, so it cannot see or analyse motion in the video; instead, you should analyse it and provide specific suggestions regarding the motion.

This was the reward function:
{reward_program}

You can also use the values I tracked for the individual components in the reward function every {epochfreq} epoch and the maximum, mean, and minimum values encountered:

{stats_summary}";

const LLM_SYSTEM: &str = "\
You are a reward engineer trying to write reward functions to solve reinforcement learning tasks as effectively as possible. Your goal is to write a reward function for the environment that will help the agent learn the task described in the text. Your reward function should use useful variables from the environment as inputs. As an example, the reward function signature can be: {signature}

{grammar_help}

Please provide only the reward function without defining any new functions. Ensure that the code only uses the functions listed above and do not introduce any new functions.";

const LLM_INITIAL: &str = "\
The environment is:

{env_context}
Write a reward function for the following task: {task}.
The output of the reward function should consist of two items:
    (1) the total reward,
    (2) a dictionary of each individual reward component.

{grammar_help}

Some helpful tips for writing the reward function code:
    (1) Make sure every component is a single scalar expression; the language has no vectors, tensors or types to declare.
    (2) Try to keep the code and avoid writing overly complicated reward components.
    (3) Most importantly, the reward code's input variables must contain only the observation variables of the provided environment description.
    (4) Under no circumstance can you introduce new input variables.";

const LLM_REVIEW: &str = "\
I trained an agent based on the reward function you provided and have the following suggestions -

{feedback}

For adjusting the weights you can use the values I tracked for the individual components in the reward function every {epochfreq} epoch and the maximum, mean, and minimum values encountered:

{stats_summary}


Please prioritise addressing these problems and provide a new, improved reward function that can better solve the task";

const LLM_ERROR: &str = "\
Executing the reward function code above has the following error:
{error}. Please fix the bug and provide a new, improved reward function!";

const SINGLE_LEVEL_DIRECT: &str = "\
You are an expert in reinforcement learning and robotics, and you also write the reward function. The first set of images shows a {creature} demonstrating the motion to imitate; the second set shows an agent trained with the current reward function. The task is {task}.

The environment is:

{env_context}
This was the reward function:
{reward_program}

You can also use the values I tracked for the individual components in the reward function every {epochfreq} epoch and the maximum, mean, and minimum values encountered:

{stats_summary}

Study both videos, identify the major problems in the agent's motion compared with the demonstration, and provide a new, improved reward function that can better solve the task.

{grammar_help}";

/// Values substituted into templates. Empty strings count as missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub creature: String,
    pub task: String,
    pub env_context: String,
    pub reward_program: String,
    pub epochfreq: Option<usize>,
    pub stats_summary: String,
    pub feedback: String,
    pub error: String,
    pub grammar_help: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("prompt '{kind}' requires placeholder '{placeholder}', which is missing or empty")]
    MissingPlaceholder { kind: PromptKind, placeholder: String },
}

impl PromptContext {
    fn lookup(&self, name: &str) -> Option<String> {
        let text = |s: &String| (!s.is_empty()).then(|| s.clone());
        match name {
            "creature" => text(&self.creature),
            "task" => text(&self.task),
            "env_context" => text(&self.env_context),
            "reward_program" => text(&self.reward_program),
            "epochfreq" => self.epochfreq.map(|f| f.to_string()),
            "stats_summary" => text(&self.stats_summary),
            "feedback" => text(&self.feedback),
            "error" => text(&self.error),
            "grammar_help" => text(&self.grammar_help),
            "signature" => Some(SIGNATURE_EXAMPLE.to_string()),
            _ => None,
        }
    }
}

/// Placeholders the template of `kind` refers to, in order of appearance.
pub fn placeholders(kind: PromptKind) -> Vec<&'static str> {
    let mut out = Vec::new();
    let t = kind.template();
    let mut rest = t;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder(&after[..close]) => {
                let name = &after[..close];
                if !out.contains(&name) {
                    out.push(name);
                }
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_placeholder(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

pub fn render_prompt(kind: PromptKind, ctx: &PromptContext) -> Result<String, PromptError> {
    let template = kind.template();
    let mut out = String::with_capacity(template.len() + 1024);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder(&after[..close]) => {
                let name = &after[..close];
                let value = ctx
                    .lookup(name)
                    .ok_or_else(|| PromptError::MissingPlaceholder {
                        kind,
                        placeholder: name.to_string(),
                    })?;
                out.push_str(&value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> PromptContext {
        PromptContext {
            creature: "spider".into(),
            task: "jump forward".into(),
            env_context: "vel_x: forward velocity\n".into(),
            reward_program: "r = vel_x".into(),
            epochfreq: Some(10),
            stats_summary: "r:\n  overall: max 1.00000\n".into(),
            feedback: "1. Problems: none".into(),
            error: "unknown identifier 'foo' (line 1, column 5)".into(),
            grammar_help: crate::lang::grammar_help_text().into(),
        }
    }

    #[test]
    fn every_kind_renders_with_full_context() {
        for kind in PromptKind::ALL {
            let text = render_prompt(kind, &full()).unwrap();
            assert!(!text.contains("{creature}") && !text.contains("{task}"), "{kind}");
            assert_eq!(text, render_prompt(kind, &full()).unwrap());
        }
    }

    #[test]
    fn quoted_sentences_survive() {
        let ctx = full();
        let initial = render_prompt(PromptKind::VlmInitial, &ctx).unwrap();
        assert!(initial.contains("Possible Reward Function Considerations"));
        assert!(initial.contains("spider's motion"));
        let review = render_prompt(PromptKind::LlmReview, &ctx).unwrap();
        assert!(review.contains("Please prioritise addressing these problems"));
        assert!(review.contains("maximum, mean, and minimum values encountered"));
        let vlm_review = render_prompt(PromptKind::VlmReview, &ctx).unwrap();
        assert!(vlm_review.contains("This was the reward function:\nr = vel_x\n"));
        let error = render_prompt(PromptKind::LlmError, &ctx).unwrap();
        assert!(error.ends_with("Please fix the bug and provide a new, improved reward function!"));
        assert!(error.contains("unknown identifier 'foo'"));
        let system = render_prompt(PromptKind::LlmSystem, &ctx).unwrap();
        assert!(system.contains(SIGNATURE_EXAMPLE));
    }

    #[test]
    fn missing_placeholder_is_named() {
        let ctx = PromptContext {
            feedback: String::new(),
            ..full()
        };
        assert_eq!(
            render_prompt(PromptKind::LlmReview, &ctx),
            Err(PromptError::MissingPlaceholder {
                kind: PromptKind::LlmReview,
                placeholder: "feedback".into()
            })
        );
        let ctx = PromptContext {
            epochfreq: None,
            ..full()
        };
        assert!(render_prompt(PromptKind::VlmReview, &ctx).is_err());
    }

    #[test]
    fn substituted_text_is_not_rescanned() {
        let ctx = PromptContext {
            error: "saw {task} and {".into(),
            ..full()
        };
        let text = render_prompt(PromptKind::LlmError, &ctx).unwrap();
        assert!(text.contains("saw {task} and {."));
    }

    #[test]
    fn placeholder_listing() {
        assert_eq!(placeholders(PromptKind::LlmError), ["error"]);
        assert_eq!(placeholders(PromptKind::VlmInitial), ["creature", "task"]);
    }
}
