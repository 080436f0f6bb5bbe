use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LangErrorKind {
    ParseError,
    UnknownIdentifier,
    ArityError,
    EvalError,
}

/// An unknown name reported by validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownName {
    pub name: String,
    pub span: Span,
}

/// Error raised by parsing, validating or evaluating a reward program.
///
/// The `Display` form is deterministic for identical input and is what the
/// repair loop sends back to the reward-writing backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardLangError {
    pub kind: LangErrorKind,
    pub message: String,
    pub span: Option<Span>,
    /// Component being evaluated when an `EvalError` was raised.
    pub component: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown: Vec<UnknownName>,
}

impl RewardLangError {
    pub fn parse(span: Span, message: impl Into<String>) -> Self {
        Self {
            kind: LangErrorKind::ParseError,
            message: message.into(),
            span: Some(span),
            component: None,
            unknown: Vec::new(),
        }
    }

    pub fn arity(span: Span, message: impl Into<String>) -> Self {
        Self {
            kind: LangErrorKind::ArityError,
            message: message.into(),
            span: Some(span),
            component: None,
            unknown: Vec::new(),
        }
    }

    pub fn eval(component: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind: LangErrorKind::EvalError,
            message: message.into(),
            span: None,
            component: Some(component.into()),
            unknown: Vec::new(),
        }
    }

    pub fn unknown_identifiers(unknown: Vec<UnknownName>) -> Self {
        let listed: Vec<String> = unknown
            .iter()
            .map(|u| format!("'{}' ({})", u.name, u.span))
            .collect();
        let message = if unknown.len() == 1 {
            format!("unknown identifier {}", listed[0])
        } else {
            format!("unknown identifiers {}", listed.join(", "))
        };
        Self {
            kind: LangErrorKind::UnknownIdentifier,
            message,
            span: unknown.first().map(|u| u.span),
            component: None,
            unknown,
        }
    }
}

impl fmt::Display for RewardLangError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LangErrorKind::ParseError => match self.span {
                Some(span) => write!(f, "parse error at {span}: {}", self.message),
                None => write!(f, "parse error: {}", self.message),
            },
            LangErrorKind::ArityError => match self.span {
                Some(span) => write!(f, "arity error at {span}: {}", self.message),
                None => write!(f, "arity error: {}", self.message),
            },
            LangErrorKind::UnknownIdentifier => f.write_str(&self.message),
            LangErrorKind::EvalError => write!(
                f,
                "evaluation error in component '{}': {}",
                self.component.as_deref().unwrap_or("?"),
                self.message
            ),
        }
    }
}

impl std::error::Error for RewardLangError {}
