//! The reward expression language: parser, canonical printer, validator and
//! a sandboxed evaluator. Reward programs exchanged with the reward-writing
//! backend are always in this language.

mod ast;
mod error;
mod eval;
mod help;
mod parser;
mod printer;

pub use ast::{
    is_valid_identifier, BinOp, CmpOp, Component, Expr, ExprKind, Func, RewardProgram, Span,
    TOTAL_COMPONENT,
};
pub use error::{LangErrorKind, RewardLangError, UnknownName};
pub use eval::{evaluate_program, validate_program, ComponentValues, EvalContext, Evaluator};
pub use help::{grammar_help_text, GRAMMAR_VERSION, PROGRAM_FENCE_TAG, SIGNATURE_EXAMPLE};
pub use parser::{parse_program, MAX_SOURCE_BYTES};
pub use printer::{format_number, print_expr, print_program};
