use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::env::FrameManifest;
use crate::feedback::{FeedbackRecord, PromptKind, Role};
use crate::trainer::{ComponentStatsLog, PolicyFile, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    /// `repairs` holds the attempts spent on the program that could not be
    /// obtained, when that is why the run stopped.
    Aborted {
        reason: String,
        iteration: usize,
        repairs: Vec<RepairAttempt>,
    },
}

/// One round of the repair loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairAttempt {
    /// Error that triggered this round, as sent to the backend.
    pub trigger: String,
    pub prompt: String,
    pub reply: String,
    /// Why the reply was rejected in turn, if it was.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    /// Undiscounted expert-tuned score of the evaluation rollout.
    pub raw: Option<f64>,
    pub normalized: Option<f64>,
    /// Fitness in the evolutionary modes.
    pub fitness: Option<f64>,
}

/// One sampled program in the evolutionary modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    pub program: Option<String>,
    pub repairs: Vec<RepairAttempt>,
    /// `None` for a failed candidate (treated as negative infinity).
    pub fitness: Option<f64>,
    pub stats_summary: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub program: String,
    pub stats: ComponentStatsLog,
    pub stats_summary: String,
    pub policy: PolicyFile,
    pub trajectory: Trajectory,
    pub trajectory_digest: String,
    pub score: ScoreRecord,
    pub feedback: Option<FeedbackRecord>,
    pub repairs: Vec<RepairAttempt>,
    pub frames: FrameManifest,
    pub candidates: Vec<CandidateRecord>,
    pub selected_candidate: Option<usize>,
    pub started_at: String,
    pub finished_at: String,
}

/// Trained expert baseline that normalizes scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSummary {
    pub program: String,
    pub raw_score: f64,
    pub policy_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub role: Role,
    pub text: String,
    /// SHA-256 of each attached image.
    pub media: Vec<String>,
}

/// One backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub backend: String,
    pub kind: Option<PromptKind>,
    pub iteration: usize,
    pub temperature: f64,
    pub turns: Vec<TranscriptTurn>,
    pub reply: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub config: RunConfig,
    pub created_at: String,
    pub description: String,
    pub expert: Option<ExpertSummary>,
    pub iterations: Vec<IterationRecord>,
    pub transcript: Vec<TranscriptEntry>,
    pub status: RunStatus,
}

impl RunState {
    pub fn final_program(&self) -> Option<&str> {
        self.iterations.last().map(|r| r.program.as_str())
    }

    pub fn scores(&self) -> Vec<Option<f64>> {
        self.iterations.iter().map(|r| r.score.normalized).collect()
    }
}
