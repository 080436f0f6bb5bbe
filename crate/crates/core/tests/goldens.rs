//! Rendered prompts compared byte for byte with the files in `golden/`.
//!
//! Regenerate with `UPDATE_GOLDENS=1 cargo test --test goldens` and review
//! the diff by hand.

mod common;

use bilevel_core::feedback::{render_prompt, PromptKind};
use common::golden;

#[test]
fn prompts_match_goldens() {
    let update = std::env::var_os("UPDATE_GOLDENS").is_some();
    let mismatched = golden::mismatches(update);
    assert!(mismatched.is_empty(), "prompts differ from goldens: {mismatched:?}");
}

#[test]
fn goldens_carry_the_quoted_sentences() {
    let ctx = golden::context();
    let text = |kind| render_prompt(kind, &ctx).unwrap();
    assert!(text(PromptKind::VlmInitial).contains("Possible Reward Function Considerations"));
    assert!(text(PromptKind::VlmReview).contains("maximum, mean, and minimum values encountered"));
    assert!(text(PromptKind::LlmReview).contains("maximum, mean, and minimum values encountered"));
    assert!(text(PromptKind::LlmReview).contains("Please prioritise addressing these problems"));
    assert!(text(PromptKind::LlmError).ends_with("Please fix the bug and provide a new, improved reward function!"));
}
