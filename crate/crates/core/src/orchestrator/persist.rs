//! Run directory layout:
//!
//! ```text
//! <root>/<id>/config.json  description.txt  transcript.json  report.json
//! <root>/<id>/expert/expert.json  expert/frames/
//! <root>/<id>/iter_<k>/reward.rwd  policy.json  stats.json  score.json
//!     feedback.json  repairs.json  trajectory.json  iteration.json  frames/
//!     candidates/cand_<j>/candidate.json  candidates/cand_<j>/reward.rwd
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::state::*;
use super::{Mode, RunConfig};
use crate::env::{read_manifest, render_frame, write_frames, Frame, FrameManifest};
use crate::feedback::FeedbackRecord;

#[derive(Debug, Error)]
#[error("{path}: {message}")]
pub struct PersistError {
    pub path: PathBuf,
    pub message: String,
}

impl PersistError {
    fn new(path: &Path, message: impl ToString) -> Self {
        Self {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

pub fn run_dir(root: &Path, id: &str) -> PathBuf {
    root.join(id)
}

pub fn iteration_dir(root: &Path, id: &str, k: usize) -> PathBuf {
    run_dir(root, id).join(format!("iter_{k}"))
}

pub fn expert_frames_dir(root: &Path, id: &str) -> PathBuf {
    run_dir(root, id).join("expert").join("frames")
}

fn write_text(path: &Path, text: &str) -> Result<(), PersistError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PersistError::new(parent, e))?;
    }
    // Readers (the service) may look at a run while it is being written.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| PersistError::new(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| PersistError::new(path, e))
}

/// Pretty JSON with a trailing newline; key order follows declaration order.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PersistError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| PersistError::new(path, e))?;
    write_text(path, &(json + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PersistError> {
    let text = fs::read_to_string(path).map_err(|e| PersistError::new(path, e))?;
    serde_json::from_str(&text).map_err(|e| PersistError::new(path, e))
}

fn read_text(path: &Path) -> Result<String, PersistError> {
    fs::read_to_string(path).map_err(|e| PersistError::new(path, e))
}

fn read_program(path: &Path) -> Result<String, PersistError> {
    let text = read_text(path)?;
    Ok(text.strip_suffix('\n').unwrap_or(&text).to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub index: usize,
    pub raw_score: Option<f64>,
    pub normalized_score: Option<f64>,
    pub fitness: Option<f64>,
}

/// Final summary written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_id: String,
    pub mode: Mode,
    pub created_at: String,
    pub status: RunStatus,
    pub expert_raw_score: Option<f64>,
    pub iterations: Vec<ReportRow>,
    pub final_program: Option<String>,
}

impl Report {
    pub fn of(state: &RunState) -> Self {
        Self {
            run_id: state.run_id.clone(),
            mode: state.config.mode,
            created_at: state.created_at.clone(),
            status: state.status.clone(),
            expert_raw_score: state.expert.as_ref().map(|e| e.raw_score),
            iterations: state
                .iterations
                .iter()
                .map(|r| ReportRow {
                    index: r.index,
                    raw_score: r.score.raw,
                    normalized_score: r.score.normalized,
                    fitness: r.score.fitness,
                })
                .collect(),
            final_program: state.final_program().map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IterationMeta {
    index: usize,
    stats_summary: String,
    trajectory_digest: String,
    selected_candidate: Option<usize>,
    candidate_count: usize,
    started_at: String,
    finished_at: String,
}

/// Renders the frames of a stored trajectory (initial state plus one frame per
/// step).
pub fn render_trajectory(record: &IterationRecord, width: usize, height: usize) -> Vec<Frame> {
    record
        .trajectory
        .states()
        .map(|s| render_frame(s, width, height))
        .collect()
}

fn persist_iteration(dir: &Path, record: &IterationRecord, config: &RunConfig) -> Result<(), PersistError> {
    write_text(&dir.join("reward.rwd"), &(record.program.clone() + "\n"))?;
    write_json(&dir.join("policy.json"), &record.policy)?;
    write_json(&dir.join("stats.json"), &record.stats)?;
    write_json(&dir.join("score.json"), &record.score)?;
    if let Some(feedback) = &record.feedback {
        write_json(&dir.join("feedback.json"), feedback)?;
    }
    write_json(&dir.join("repairs.json"), &record.repairs)?;
    write_json(&dir.join("trajectory.json"), &record.trajectory)?;
    write_json(
        &dir.join("iteration.json"),
        &IterationMeta {
            index: record.index,
            stats_summary: record.stats_summary.clone(),
            trajectory_digest: record.trajectory_digest.clone(),
            selected_candidate: record.selected_candidate,
            candidate_count: record.candidates.len(),
            started_at: record.started_at.clone(),
            finished_at: record.finished_at.clone(),
        },
    )?;
    for candidate in &record.candidates {
        let cdir = dir.join("candidates").join(format!("cand_{}", candidate.index));
        write_json(&cdir.join("candidate.json"), candidate)?;
        if let Some(program) = &candidate.program {
            write_text(&cdir.join("reward.rwd"), &(program.clone() + "\n"))?;
        }
    }
    let frames = dir.join("frames");
    if !frames.join("frames.json").exists() {
        let rendered = render_trajectory(record, config.frame_width, config.frame_height);
        write_frames(&rendered, &frames, config.env.dt).map_err(|e| PersistError::new(&frames, e))?;
    }
    Ok(())
}

/// Writes every file of `state` under `root/<run id>`.
pub fn persist_run(state: &RunState, root: &Path) -> Result<(), PersistError> {
    let dir = run_dir(root, &state.run_id);
    write_json(&dir.join("config.json"), &state.config)?;
    write_text(&dir.join("description.txt"), &state.description)?;
    if let Some(expert) = &state.expert {
        write_json(&dir.join("expert").join("expert.json"), expert)?;
    }
    for record in &state.iterations {
        persist_iteration(&dir.join(format!("iter_{}", record.index)), record, &state.config)?;
    }
    write_json(&dir.join("transcript.json"), &state.transcript)?;
    write_json(&dir.join("report.json"), &Report::of(state))
}

fn load_iteration(dir: &Path) -> Result<IterationRecord, PersistError> {
    let meta: IterationMeta = read_json(&dir.join("iteration.json"))?;
    let feedback_path = dir.join("feedback.json");
    let feedback: Option<FeedbackRecord> = if feedback_path.exists() {
        Some(read_json(&feedback_path)?)
    } else {
        None
    };
    let candidates = (0..meta.candidate_count)
        .map(|j| read_json(&dir.join("candidates").join(format!("cand_{j}")).join("candidate.json")))
        .collect::<Result<Vec<CandidateRecord>, _>>()?;
    let frames_dir = dir.join("frames");
    let frames: FrameManifest = read_manifest(&frames_dir).map_err(|e| PersistError::new(&frames_dir, e))?;
    Ok(IterationRecord {
        index: meta.index,
        program: read_program(&dir.join("reward.rwd"))?,
        stats: read_json(&dir.join("stats.json"))?,
        stats_summary: meta.stats_summary,
        policy: read_json(&dir.join("policy.json"))?,
        trajectory: read_json(&dir.join("trajectory.json"))?,
        trajectory_digest: meta.trajectory_digest,
        score: read_json(&dir.join("score.json"))?,
        feedback,
        repairs: read_json(&dir.join("repairs.json"))?,
        frames,
        candidates,
        selected_candidate: meta.selected_candidate,
        started_at: meta.started_at,
        finished_at: meta.finished_at,
    })
}

pub fn load_run(root: &Path, id: &str) -> Result<RunState, PersistError> {
    let dir = run_dir(root, id);
    if !dir.join("config.json").exists() {
        return Err(PersistError::new(&dir, "no such run"));
    }
    let config: RunConfig = read_json(&dir.join("config.json"))?;
    let report: Report = read_json(&dir.join("report.json"))?;
    let expert_path = dir.join("expert").join("expert.json");
    let expert = if expert_path.exists() {
        Some(read_json(&expert_path)?)
    } else {
        None
    };
    let mut iterations = Vec::new();
    loop {
        let idir = dir.join(format!("iter_{}", iterations.len()));
        if !idir.join("iteration.json").exists() {
            break;
        }
        iterations.push(load_iteration(&idir)?);
    }
    Ok(RunState {
        run_id: id.to_string(),
        config,
        created_at: report.created_at,
        description: read_text(&dir.join("description.txt"))?,
        expert,
        iterations,
        transcript: read_json(&dir.join("transcript.json"))?,
        status: report.status,
    })
}

/// Run ids under `root`, sorted.
pub fn list_runs(root: &Path) -> Result<Vec<String>, PersistError> {
    let entries = match fs::read_dir(root) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(PersistError::new(root, e)),
    };
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("report.json").exists())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    Ok(ids)
}
