//! Prompt goldens: a fixed context and a byte-for-byte comparison.

use std::path::{Path, PathBuf};

use bilevel_core::env::{env_context_text, EnvConfig};
use bilevel_core::feedback::{render_prompt, PromptContext, PromptKind};
use bilevel_core::lang::grammar_help_text;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn context() -> PromptContext {
    PromptContext {
        creature: "hopper".into(),
        task: "hop forward like the expert".into(),
        env_context: env_context_text(&EnvConfig::default()),
        reward_program: "forward = vel_x\nupright = up_proj".into(),
        epochfreq: Some(10),
        stats_summary: "checkpoints at epochs: 0, 10\nforward:\n  mean per checkpoint: [0.00000, 1.25000]\n".into(),
        feedback: "1. Problems: It slides instead of hopping.\n2. Rewrite Component: None\n3. Remove Component: None\n4. New Component: Reward upward speed.".into(),
        error: "parse error at line 1, column 16: expected an expression".into(),
        grammar_help: grammar_help_text().into(),
    }
}

/// Names of the prompt kinds whose rendering differs from its golden file.
/// With `update` set the goldens are rewritten instead.
pub fn mismatches(update: bool) -> Vec<&'static str> {
    let ctx = context();
    let mut out = Vec::new();
    for kind in PromptKind::ALL {
        let rendered = render_prompt(kind, &ctx).expect("full context renders");
        let path = golden_dir().join(format!("{}.txt", kind.name()));
        if update {
            std::fs::write(&path, &rendered).expect("write golden");
            continue;
        }
        if std::fs::read_to_string(&path).ok().as_deref() != Some(rendered.as_str()) {
            out.push(kind.name());
        }
    }
    out
}
