//! Reply parsing: the four-section review format and fenced program blocks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::PROGRAM_FENCE_TAG;

/// Upper-level feedback. Structured fields are trimmed substrings of `raw`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub raw: String,
    pub problems: Option<String>,
    pub rewrite_component: Option<String>,
    pub remove_component: Option<String>,
    pub new_component: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Problems,
    Rewrite,
    Remove,
    New,
}

const HEADINGS: [(&str, Section, bool); 4] = [
    ("problems", Section::Problems, false),
    ("rewrite component", Section::Rewrite, true),
    ("remove component", Section::Remove, true),
    ("new component", Section::New, true),
];

fn is_markdown(b: u8) -> bool {
    matches!(b, b'#' | b'*' | b'_' | b'>' | b'-' | b'`' | b' ' | b'\t')
}

/// Recognises a section heading at the start of `line`; returns the section and
/// the byte offset where its inline content begins.
fn heading(line: &str) -> Option<(Section, usize)> {
    let b = line.as_bytes();
    let mut i = 0;
    while i < b.len() && b[i].is_ascii_whitespace() {
        i += 1;
    }
    let start = i;
    while i < b.len() && is_markdown(b[i]) {
        i += 1;
    }
    let mut decorated = b[start..i].iter().any(|c| !c.is_ascii_whitespace());
    let digits = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i > digits {
        if i < b.len() && (b[i] == b'.' || b[i] == b')') {
            i += 1;
            decorated = true;
        } else {
            return None;
        }
        while i < b.len() && is_markdown(b[i]) {
            i += 1;
        }
    }
    for (name, section, plural_ok) in HEADINGS {
        let mut j = i;
        let mut matched = true;
        for n in name.bytes() {
            let Some(&c) = b.get(j) else {
                matched = false;
                break;
            };
            let ok = if n == b' ' {
                matches!(c, b' ' | b'_' | b'-')
            } else {
                c.to_ascii_lowercase() == n
            };
            if !ok {
                matched = false;
                break;
            }
            j += 1;
        }
        if !matched {
            continue;
        }
        if plural_ok && b.get(j).is_some_and(|c| c.eq_ignore_ascii_case(&b's')) {
            j += 1;
        }
        if b.get(j).is_some_and(|c| c.is_ascii_alphanumeric()) {
            continue;
        }
        while j < b.len() && matches!(b[j], b'*' | b'_' | b'`' | b' ' | b'\t') {
            j += 1;
        }
        let colon = b.get(j) == Some(&b':');
        if colon {
            j += 1;
            while j < b.len() && matches!(b[j], b'*' | b'_' | b'`') {
                j += 1;
            }
        }
        if colon || decorated {
            return Some((section, j));
        }
    }
    None
}

/// Best-effort split of a review reply into its four sections.
pub fn parse_vlm_feedback(reply: &str) -> FeedbackRecord {
    // (section, content start, heading line start)
    let mut marks: Vec<(Section, usize, usize)> = Vec::new();
    let mut offset = 0;
    for line in reply.split_inclusive('\n') {
        if let Some((section, content)) = heading(line.trim_end_matches(['\n', '\r'])) {
            marks.push((section, offset + content, offset));
        }
        offset += line.len();
    }
    let mut record = FeedbackRecord {
        raw: reply.to_string(),
        ..FeedbackRecord::default()
    };
    for (k, &(section, start, _)) in marks.iter().enumerate() {
        let end = marks.get(k + 1).map_or(reply.len(), |m| m.2);
        let text = reply[start..end].trim();
        let slot = match section {
            Section::Problems => &mut record.problems,
            Section::Rewrite => &mut record.rewrite_component,
            Section::Remove => &mut record.remove_component,
            Section::New => &mut record.new_component,
        };
        if slot.is_none() && !text.is_empty() {
            *slot = Some(text.to_string());
        }
    }
    record
}

impl FeedbackRecord {
    /// Rebuilds a four-section reply; used when a human supplies the fields.
    pub fn compose(
        problems: &str,
        rewrite_component: &str,
        remove_component: &str,
        new_component: &str,
    ) -> String {
        let none = |s: &str| if s.trim().is_empty() { "None".to_string() } else { s.trim().to_string() };
        format!(
            "1. Problems: {}\n2. Rewrite Component: {}\n3. Remove Component: {}\n4. New Component: {}",
            none(problems),
            none(rewrite_component),
            none(remove_component),
            none(new_component)
        )
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("no fenced ```{PROGRAM_FENCE_TAG} code block found in the reply")]
pub struct ExtractionError;

/// Contents of the first fence tagged `reward`, else of the first untagged
/// fence, trimmed.
pub fn extract_program_block(reply: &str) -> Result<String, ExtractionError> {
    let mut fences: Vec<(&str, String)> = Vec::new();
    let mut open: Option<(&str, String)> = None;
    for line in reply.lines() {
        let trimmed = line.trim_start();
        match open.as_mut() {
            None => {
                if let Some(info) = trimmed.strip_prefix("```") {
                    open = Some((info.trim(), String::new()));
                }
            }
            Some((_, body)) => {
                if trimmed.trim_end() == "```" {
                    fences.push(open.take().expect("inside fence"));
                } else {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
    }
    if let Some(unclosed) = open {
        fences.push(unclosed);
    }
    fences
        .iter()
        .find(|(tag, _)| *tag == PROGRAM_FENCE_TAG)
        .or_else(|| fences.iter().find(|(tag, _)| tag.is_empty()))
        .map(|(_, body)| body.trim().to_string())
        .ok_or(ExtractionError)
}

/// Frame indices sent for an `n`-frame video with at most `cap` images:
/// `floor(i * (n - 1) / (cap - 1))` for `i` in `0..cap`, or every frame when
/// `n <= cap`.
pub fn sample_indices(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    if cap <= 1 {
        return vec![0; cap];
    }
    (0..cap).map(|i| i * (n - 1) / (cap - 1)).collect()
}
