//! Drives the bilevel loop and its baselines end to end. Every backend call is
//! recorded in the run transcript and the run directory is rewritten after
//! each step, so a crashed or aborted run still leaves a readable record.

mod config;
mod persist;
mod repair;
mod state;

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

pub use config::{rfc3339, Clock, FixedClock, Mode, RunConfig, SystemClock};
pub use persist::{
    expert_frames_dir, iteration_dir, list_runs, load_run, persist_run, read_json, render_trajectory, run_dir,
    write_json, PersistError, Report, ReportRow,
};
pub use repair::{repair_program, RepairFailure};
pub use state::*;

use crate::digest::{json_digest, sha256_hex};
use crate::env::{env_context_text, read_frames, write_frames, EnvConfig, Frame, FrameError, FrameManifest};
use crate::env::render_frame;
use crate::eval::{eureka_fitness, expert_score, select_best, ExpertScoreProgram, FitnessSpec};
use crate::feedback::{
    connect, frames_to_media, llm_generate, llm_system_turn, program_turn, vlm_describe, vlm_review, BackendError,
    CallOptions, ChatBackend, ChatRequest, ChatTurn, FeedbackError, Generation, GenerationError, HumanChannel,
    PromptContext, PromptKind, RequestMeta, FRAME_CAP,
};
use crate::lang::{grammar_help_text, parse_program, validate_program, RewardLangError, RewardProgram};
use crate::trainer::{
    format_sig6, rollout, summarize_component_stats, train, PolicyFile, TrainConfig, TrainOutcome, Trajectory,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("frame error: {0}")]
    Frame(#[from] FrameError),
}

/// The two chat backends of a run. Single-level runs use only `upper`; the
/// evolutionary baselines use only `lower`.
#[derive(Default)]
pub struct Backends {
    pub upper: Option<Box<dyn ChatBackend>>,
    pub lower: Option<Box<dyn ChatBackend>>,
}

fn uses_upper(mode: Mode) -> bool {
    !mode.is_eureka()
}

fn uses_lower(mode: Mode) -> bool {
    mode != Mode::Single
}

/// Builds the backends `config` asks for.
pub fn connect_backends(config: &RunConfig, human: Option<Arc<HumanChannel>>) -> Result<Backends, RunError> {
    let open = |which: &str, cfg| connect(cfg, human.clone()).map_err(|e| RunError::Config(format!("{which}: {e}")));
    Ok(Backends {
        upper: uses_upper(config.mode).then(|| open("upper", &config.upper)).transpose()?,
        lower: uses_lower(config.mode).then(|| open("lower", &config.lower)).transpose()?,
    })
}

/// Validates `config`, connects its backends and runs it under `root`.
///
/// A run that stops early (backend failure, repair budget spent, no viable
/// candidate) is not an error: the returned state carries
/// [`RunStatus::Aborted`]. Errors are configuration and I/O problems.
pub fn run(
    config: &RunConfig,
    root: &Path,
    clock: &dyn Clock,
    human: Option<Arc<HumanChannel>>,
) -> Result<RunState, RunError> {
    config.validate()?;
    let backends = connect_backends(config, human)?;
    run_with_backends(config, root, clock, backends)
}

/// Like [`run`] with caller-supplied backends.
pub fn run_with_backends(
    config: &RunConfig,
    root: &Path,
    clock: &dyn Clock,
    backends: Backends,
) -> Result<RunState, RunError> {
    config.validate()?;
    if uses_upper(config.mode) && backends.upper.is_none() {
        return Err(RunError::Config(format!("{} mode needs an upper backend", config.mode)));
    }
    if uses_lower(config.mode) && backends.lower.is_none() {
        return Err(RunError::Config(format!("{} mode needs a lower backend", config.mode)));
    }
    let run_id = config.run_id();
    let dir = run_dir(root, &run_id);
    if dir.exists() {
        return Err(RunError::Config(format!("run directory {} already exists", dir.display())));
    }
    let mut runner = Runner {
        config,
        root,
        clock,
        backends,
        train: config.train_config(),
        expert: None,
        expert_frames: Vec::new(),
        iteration: 0,
        state: RunState {
            run_id,
            config: config.clone(),
            created_at: clock.now(),
            description: String::new(),
            expert: None,
            iterations: Vec::new(),
            transcript: Vec::new(),
            status: RunStatus::Running,
        },
    };
    runner.persist()?;
    let outcome = runner.setup().and_then(|()| match config.mode {
        Mode::Bilevel | Mode::Human => runner.bilevel(),
        Mode::Single => runner.single_level(),
        Mode::Eureka | Mode::EurekaGt => runner.eureka(),
    });
    runner.state.status = match outcome {
        Ok(()) => RunStatus::Completed,
        Err(Stop::Fatal(e)) => return Err(e),
        Err(Stop::Abort(abort)) => {
            tracing::warn!(run = %runner.state.run_id, reason = %abort.reason, "run aborted");
            RunStatus::Aborted {
                reason: abort.reason,
                iteration: runner.iteration,
                repairs: abort.repairs,
            }
        }
    };
    runner.persist()?;
    Ok(runner.state)
}

#[derive(Clone, Copy)]
enum Level {
    Upper,
    Lower,
}

impl Level {
    fn name(self) -> &'static str {
        match self {
            Level::Upper => "upper",
            Level::Lower => "lower",
        }
    }
}

struct Abort {
    reason: String,
    repairs: Vec<RepairAttempt>,
    /// Set when a backend failed, as opposed to a program being unusable.
    backend: bool,
}

enum Stop {
    Fatal(RunError),
    Abort(Abort),
}

impl Stop {
    fn abort(reason: impl Into<String>) -> Self {
        Stop::Abort(Abort {
            reason: reason.into(),
            repairs: Vec::new(),
            backend: false,
        })
    }
}

impl<E: Into<RunError>> From<E> for Stop {
    fn from(e: E) -> Self {
        Stop::Fatal(e.into())
    }
}

fn backend_failure(e: FeedbackError, repairs: Vec<RepairAttempt>) -> Stop {
    Stop::Abort(Abort {
        reason: format!("backend failure: {e}"),
        repairs,
        backend: true,
    })
}

/// Transcript-recording wrapper around a backend.
struct Recorder<'a> {
    inner: &'a mut dyn ChatBackend,
    name: &'static str,
    iteration: usize,
    log: &'a mut Vec<TranscriptEntry>,
}

impl ChatBackend for Recorder<'_> {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        let result = self.inner.complete(request);
        self.log.push(TranscriptEntry {
            seq: self.log.len(),
            backend: self.name.to_string(),
            kind: request.meta.kind,
            iteration: self.iteration,
            temperature: request.temperature,
            turns: request
                .turns
                .iter()
                .map(|t| TranscriptTurn {
                    role: t.role,
                    text: t.text.clone(),
                    media: t.media.iter().map(|m| sha256_hex(&m.data)).collect(),
                })
                .collect(),
            reply: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
        });
        result
    }
}

/// A usable program plus what it took to get it.
struct Acquired {
    program: RewardProgram,
    outcome: Option<TrainOutcome>,
    repairs: Vec<RepairAttempt>,
}

/// Evaluation rollout of a trained policy and what is scored on it.
struct Evaluated {
    trajectory: Trajectory,
    raw: Option<f64>,
    fitness: Option<f64>,
}

struct Runner<'a> {
    config: &'a RunConfig,
    root: &'a Path,
    clock: &'a dyn Clock,
    backends: Backends,
    train: TrainConfig,
    expert: Option<ExpertScoreProgram>,
    expert_frames: Vec<Frame>,
    /// Iteration the current step belongs to.
    iteration: usize,
    state: RunState,
}

fn smoke_config(train: &TrainConfig) -> TrainConfig {
    TrainConfig {
        epochs: 1,
        epochfreq: 1,
        ..train.clone()
    }
}

fn evaluate(
    env: &EnvConfig,
    train: &TrainConfig,
    program: &RewardProgram,
    outcome: &TrainOutcome,
    expert: Option<&ExpertScoreProgram>,
    fitness: Option<&FitnessSpec>,
) -> Result<Evaluated, RewardLangError> {
    let trajectory = rollout(env, &outcome.policy, program, train.discount, train.eval_seed())?;
    let raw = expert.map(|e| expert_score(&trajectory, &e.program)).transpose()?;
    let fitness = fitness.map(|f| eureka_fitness(&trajectory, f)).transpose()?;
    Ok(Evaluated {
        trajectory,
        raw,
        fitness,
    })
}

impl Runner<'_> {
    fn persist(&self) -> Result<(), PersistError> {
        persist_run(&self.state, self.root)
    }

    fn meta(&self) -> RequestMeta {
        RequestMeta {
            run_id: self.state.run_id.clone(),
            iteration: self.iteration,
            ..RequestMeta::default()
        }
    }

    fn call<R>(&mut self, level: Level, f: impl FnOnce(&mut dyn ChatBackend) -> R) -> R {
        let slot = match level {
            Level::Upper => &mut self.backends.upper,
            Level::Lower => &mut self.backends.lower,
        };
        let inner = slot.as_deref_mut().expect("backend checked at start");
        let mut recorder = Recorder {
            inner,
            name: level.name(),
            iteration: self.iteration,
            log: &mut self.state.transcript,
        };
        f(&mut recorder)
    }

    fn base_context(&self) -> PromptContext {
        PromptContext {
            creature: self.config.creature.clone(),
            task: self.config.task_description.clone(),
            env_context: env_context_text(&self.config.env),
            epochfreq: Some(self.train.epochfreq),
            grammar_help: grammar_help_text().to_string(),
            ..PromptContext::default()
        }
    }

    fn setup(&mut self) -> Result<(), Stop> {
        let config = self.config;
        if !config.expert_media.as_os_str().is_empty() {
            let (manifest, frames) = read_frames(&config.expert_media)
                .map_err(|e| RunError::Config(format!("expert media {}: {e}", config.expert_media.display())))?;
            if frames.is_empty() {
                return Err(RunError::Config("expert media holds no frames".into()).into());
            }
            write_frames(&frames, &expert_frames_dir(self.root, &self.state.run_id), manifest.dt)?;
            self.expert_frames = frames;
        }
        if let Some(path) = &config.expert_score_program {
            let bad = |m: String| Stop::Fatal(RunError::Config(format!("expert score program {}: {m}", path.display())));
            let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
            let program = parse_program(text.trim_end()).map_err(|e| bad(e.to_string()))?;
            validate_program(&program, &crate::env::observation_schema(&config.env)).map_err(|e| bad(e.to_string()))?;
            let outcome = train(&config.env, &program, &self.train).map_err(|e| bad(e.to_string()))?;
            let trajectory = rollout(&config.env, &outcome.policy, &program, self.train.discount, self.train.eval_seed())
                .map_err(|e| bad(e.to_string()))?;
            let raw = expert_score(&trajectory, &program).map_err(|e| bad(e.to_string()))?;
            let digest = json_digest(&PolicyFile::new(&outcome.policy, &config.env, &self.train));
            let expert = ExpertScoreProgram::new(program, digest, raw).map_err(|e| bad(e.to_string()))?;
            self.state.expert = Some(ExpertSummary {
                program: expert.program.source.clone(),
                raw_score: expert.raw_score,
                policy_digest: expert.policy_digest.clone(),
            });
            self.expert = Some(expert);
        }
        self.persist()?;
        Ok(())
    }

    /// Turns a generation into a usable program, repairing it within the
    /// budget. With `full` set the program is also fully trained, and a
    /// failure there is repaired from what is left of the budget.
    fn acquire(
        &mut self,
        level: Level,
        mut history: Vec<ChatTurn>,
        generation: Generation,
        ctx: &PromptContext,
        options: &CallOptions,
        full: bool,
    ) -> Result<Acquired, Stop> {
        let config = self.config;
        let smoke = smoke_config(&self.train);
        let train_config = self.train.clone();
        let mut check = |p: &RewardProgram| train(&config.env, p, &smoke).map(|_| ());
        let mut repairs = Vec::new();
        history.push(ChatTurn::user(generation.prompt));
        history.push(ChatTurn::assistant(generation.reply));
        let mut pending = generation.outcome.and_then(|p| check(&p).map(|()| p).map_err(GenerationError::from));
        loop {
            let error = match pending {
                Ok(program) if !full => {
                    return Ok(Acquired {
                        program,
                        outcome: None,
                        repairs,
                    })
                }
                Ok(program) => match train(&config.env, &program, &train_config) {
                    Ok(outcome) => {
                        return Ok(Acquired {
                            program,
                            outcome: Some(outcome),
                            repairs,
                        })
                    }
                    Err(e) => GenerationError::Lang(e),
                },
                Err(e) => e,
            };
            let budget = config.max_repair_attempts.saturating_sub(repairs.len());
            if budget == 0 {
                let reason = format!(
                    "no usable reward program after {} repair attempt(s); last error: {error}",
                    repairs.len()
                );
                return Err(Stop::Abort(Abort {
                    reason,
                    repairs,
                    backend: false,
                }));
            }
            let result = self.call(level, |b| {
                repair_program(b, &mut history, &error, budget, ctx, options, &mut check, &mut repairs)
            });
            pending = match result {
                Ok(program) => Ok(program),
                Err(RepairFailure::Backend(e)) => return Err(backend_failure(e, repairs)),
                Err(e @ RepairFailure::Exhausted { .. }) => {
                    return Err(Stop::Abort(Abort {
                        reason: e.to_string(),
                        repairs,
                        backend: false,
                    }))
                }
            };
        }
    }

    fn generate(
        &mut self,
        level: Level,
        history: &[ChatTurn],
        kind: PromptKind,
        ctx: &PromptContext,
        options: CallOptions,
    ) -> Result<Generation, Stop> {
        self.call(level, |b| llm_generate(b, history, kind, ctx, options))
            .map_err(|e| backend_failure(e, Vec::new()))
    }

    fn options(&self, level: Level, sample: bool) -> CallOptions {
        let backend = match level {
            Level::Upper => &self.config.upper,
            Level::Lower => &self.config.lower,
        };
        CallOptions {
            temperature: if sample {
                backend.sample_temperature
            } else {
                backend.temperature
            },
            meta: self.meta(),
            media: Vec::new(),
        }
    }

    fn run_encoder(&self, frames_dir: &Path, out: &Path) {
        let Some(template) = &self.config.encoder_command else {
            return;
        };
        let command = template
            .replace("{frames_dir}", &frames_dir.display().to_string())
            .replace("{out}", &out.display().to_string());
        match Command::new("sh").arg("-c").arg(&command).status() {
            Ok(status) if status.success() => {}
            Ok(status) => tracing::warn!(%command, %status, "video encoder failed"),
            Err(e) => tracing::warn!(%command, error = %e, "video encoder could not start"),
        }
    }

    /// Scores a trained program, writes its frames and appends the iteration
    /// record. Returns the learner frames.
    fn record(
        &mut self,
        program: &RewardProgram,
        outcome: TrainOutcome,
        evaluated: Option<Evaluated>,
        repairs: Vec<RepairAttempt>,
        started_at: String,
    ) -> Result<Vec<Frame>, Stop> {
        let index = self.iteration;
        let evaluated = match evaluated {
            Some(e) => e,
            None => evaluate(&self.config.env, &self.train, program, &outcome, self.expert.as_ref(), None)
                .map_err(|e| Stop::abort(format!("evaluation rollout failed: {e}")))?,
        };
        let frames: Vec<Frame> = evaluated
            .trajectory
            .states()
            .map(|s| render_frame(s, self.config.frame_width, self.config.frame_height))
            .collect();
        let dir = iteration_dir(self.root, &self.state.run_id, index);
        let manifest: FrameManifest = write_frames(&frames, &dir.join("frames"), self.config.env.dt)?;
        self.run_encoder(&dir.join("frames"), &dir.join("video.mp4"));
        let normalized = evaluated.raw.zip(self.expert.as_ref()).map(|(raw, e)| e.normalize(raw));
        self.state.iterations.push(IterationRecord {
            index,
            program: program.source.clone(),
            stats_summary: summarize_component_stats(&outcome.stats).unwrap_or_default(),
            stats: outcome.stats,
            policy: PolicyFile::new(&outcome.policy, &self.config.env, &self.train),
            trajectory_digest: json_digest(&evaluated.trajectory),
            trajectory: evaluated.trajectory,
            score: ScoreRecord {
                raw: evaluated.raw,
                normalized,
                fitness: evaluated.fitness,
            },
            feedback: None,
            repairs,
            frames: manifest,
            candidates: Vec::new(),
            selected_candidate: None,
            started_at,
            finished_at: self.clock.now(),
        });
        self.persist()?;
        Ok(frames)
    }

    fn bilevel(&mut self) -> Result<(), Stop> {
        let base = self.base_context();
        let meta = self.meta();
        let expert = std::mem::take(&mut self.expert_frames);
        let described = self.call(Level::Upper, |b| vlm_describe(b, &expert, &base, meta));
        let description = described.map_err(|e| backend_failure(e, Vec::new()))?;
        self.state.description = description.clone();
        self.persist()?;

        let ctx = PromptContext {
            task: format!(
                "{}\n\nAnalysis of the expert demonstration video:\n{}",
                base.task,
                description.trim()
            ),
            ..base
        };
        let system = llm_system_turn(&ctx).map_err(|e| backend_failure(e.into(), Vec::new()))?;
        let mut started_at = self.clock.now();
        let options = self.options(Level::Lower, false);
        let history = vec![system.clone()];
        let generation = self.generate(Level::Lower, &history, PromptKind::LlmInitial, &ctx, options.clone())?;
        let initial_prompt = generation.prompt.clone();
        let mut acquired = self.acquire(Level::Lower, history, generation, &ctx, &options, true)?;

        for i in 0..self.config.iterations {
            self.iteration = i;
            let program = acquired.program;
            let outcome = acquired.outcome.expect("fully trained");
            let learner = self.record(&program, outcome, None, acquired.repairs, started_at)?;
            if i + 1 == self.config.iterations {
                break;
            }

            let summary = self.state.iterations[i].stats_summary.clone();
            let review_ctx = PromptContext {
                reward_program: program.source.clone(),
                stats_summary: summary.clone(),
                ..ctx.clone()
            };
            let meta = self.meta();
            let reviewed = self.call(Level::Upper, |b| vlm_review(b, &expert, &learner, &review_ctx, meta));
            let feedback = reviewed.map_err(|e| backend_failure(e, Vec::new()))?;
            let feedback_text = feedback.raw.trim().to_string();
            self.state.iterations[i].feedback = Some(feedback);
            self.persist()?;

            self.iteration = i + 1;
            started_at = self.clock.now();
            let next_ctx = PromptContext {
                feedback: feedback_text,
                stats_summary: summary,
                ..ctx.clone()
            };
            let history = vec![
                system.clone(),
                ChatTurn::user(initial_prompt.clone()),
                program_turn(&program.source),
            ];
            let options = self.options(Level::Lower, false);
            let generation = self.generate(Level::Lower, &history, PromptKind::LlmReview, &next_ctx, options.clone())?;
            acquired = self.acquire(Level::Lower, history, generation, &next_ctx, &options, true)?;
        }
        Ok(())
    }

    /// One model watches both videos and writes every program.
    fn single_level(&mut self) -> Result<(), Stop> {
        let ctx = self.base_context();
        let expert = std::mem::take(&mut self.expert_frames);
        let (expert_indices, expert_media) = frames_to_media(&expert, FRAME_CAP)?;
        let system = llm_system_turn(&ctx).map_err(|e| backend_failure(e.into(), Vec::new()))?;
        let mut started_at = self.clock.now();
        let history = vec![system.clone()];
        let mut options = self.options(Level::Upper, false);
        options.meta.expert_frames = expert_indices.clone();
        let generation = self.generate(
            Level::Upper,
            &history,
            PromptKind::LlmInitial,
            &ctx,
            CallOptions {
                media: expert_media.clone(),
                ..options.clone()
            },
        )?;
        let mut acquired = self.acquire(Level::Upper, history, generation, &ctx, &options, true)?;

        for i in 0..self.config.iterations {
            self.iteration = i;
            let program = acquired.program;
            let outcome = acquired.outcome.expect("fully trained");
            let learner = self.record(&program, outcome, None, acquired.repairs, started_at)?;
            if i + 1 == self.config.iterations {
                break;
            }

            self.iteration = i + 1;
            started_at = self.clock.now();
            let next_ctx = PromptContext {
                reward_program: program.source.clone(),
                stats_summary: self.state.iterations[i].stats_summary.clone(),
                ..ctx.clone()
            };
            let (learner_indices, learner_media) = frames_to_media(&learner, FRAME_CAP)?;
            let mut media = expert_media.clone();
            media.extend(learner_media);
            let mut options = self.options(Level::Upper, false);
            options.meta.expert_frames = expert_indices.clone();
            options.meta.learner_frames = learner_indices;
            let history = vec![system.clone()];
            let generation = self.generate(
                Level::Upper,
                &history,
                PromptKind::SingleLevelDirect,
                &next_ctx,
                CallOptions {
                    media,
                    ..options.clone()
                },
            )?;
            acquired = self.acquire(Level::Upper, history, generation, &next_ctx, &options, true)?;
        }
        Ok(())
    }

    /// Samples a batch of programs per iteration, trains them all and keeps
    /// the fittest, reflecting its statistics into the next prompt.
    fn eureka(&mut self) -> Result<(), Stop> {
        let config = self.config;
        let spec = match config.mode {
            Mode::Eureka => Some(FitnessSpec::new(
                config.fitness_task.expect("validated"),
                config.v_target,
            )),
            _ => None,
        };
        let ctx = self.base_context();
        let system = llm_system_turn(&ctx).map_err(|e| backend_failure(e.into(), Vec::new()))?;
        let mut initial_prompt = None::<String>;
        let mut previous: Option<(String, String, f64)> = None;

        for i in 0..config.iterations {
            self.iteration = i;
            let started_at = self.clock.now();
            let (history, kind, iter_ctx) = match &previous {
                None => (vec![system.clone()], PromptKind::LlmInitial, ctx.clone()),
                Some((source, summary, fitness)) => (
                    vec![
                        system.clone(),
                        ChatTurn::user(initial_prompt.clone().expect("set in the first iteration")),
                        program_turn(source),
                    ],
                    PromptKind::LlmReview,
                    PromptContext {
                        feedback: format!(
                            "The selected reward function reached a task fitness of {}. Increase the task fitness.",
                            format_sig6(*fitness)
                        ),
                        stats_summary: summary.clone(),
                        ..ctx.clone()
                    },
                ),
            };

            let options = self.options(Level::Lower, true);
            let mut sampled = Vec::new();
            for _ in 0..config.batch_size() {
                let generation = self.generate(Level::Lower, &history, kind, &iter_ctx, options.clone())?;
                initial_prompt.get_or_insert_with(|| generation.prompt.clone());
                let reply = generation.reply.clone();
                match self.acquire(Level::Lower, history.clone(), generation, &iter_ctx, &options, false) {
                    Ok(a) => sampled.push(Ok(a)),
                    Err(Stop::Abort(abort)) if !abort.backend => sampled.push(Err((abort, reply))),
                    Err(stop) => return Err(stop),
                }
            }

            let expert = self.expert.as_ref();
            let train_config = &self.train;
            let trained: Vec<Option<Result<(TrainOutcome, Evaluated), RewardLangError>>> = sampled
                .par_iter()
                .map(|s| {
                    s.as_ref().ok().map(|a| {
                        let outcome = train(&config.env, &a.program, train_config)?;
                        let mut evaluated = evaluate(&config.env, train_config, &a.program, &outcome, expert, spec.as_ref())?;
                        if spec.is_none() {
                            evaluated.fitness = evaluated.raw;
                        }
                        Ok((outcome, evaluated))
                    })
                })
                .collect();

            let mut candidates = Vec::new();
            let mut fitness = Vec::new();
            let mut winners = Vec::new();
            for (j, (s, t)) in sampled.into_iter().zip(trained).enumerate() {
                let (record, kept) = match (s, t) {
                    (Ok(a), Some(Ok((outcome, evaluated)))) => {
                        let f = evaluated.fitness.expect("fitness computed");
                        let record = CandidateRecord {
                            index: j,
                            program: Some(a.program.source.clone()),
                            repairs: a.repairs.clone(),
                            fitness: Some(f),
                            stats_summary: summarize_component_stats(&outcome.stats).ok(),
                            error: None,
                        };
                        (record, Some((a, outcome, evaluated)))
                    }
                    (Ok(a), Some(Err(e))) => (
                        CandidateRecord {
                            index: j,
                            program: Some(a.program.source.clone()),
                            repairs: a.repairs,
                            fitness: None,
                            stats_summary: None,
                            error: Some(format!("training failed: {e}")),
                        },
                        None,
                    ),
                    (Err((abort, reply)), _) => (
                        CandidateRecord {
                            index: j,
                            program: None,
                            repairs: abort.repairs,
                            fitness: None,
                            stats_summary: None,
                            error: Some(format!("{}; reply was: {}", abort.reason, reply.trim())),
                        },
                        None,
                    ),
                    (Ok(_), None) => unreachable!("every acquired candidate is trained"),
                };
                fitness.push(record.fitness.unwrap_or(f64::NEG_INFINITY));
                candidates.push(record);
                winners.push(kept);
            }

            let best = match select_best(&fitness) {
                Ok(best) => best,
                Err(e) => {
                    // Keep the failed batch visible before stopping.
                    self.persist_failed_batch(i, &candidates)?;
                    return Err(Stop::abort(format!("{e} in iteration {i}")));
                }
            };
            let (acquired, outcome, evaluated) = winners.swap_remove(best).expect("best is viable");
            let summary = summarize_component_stats(&outcome.stats).unwrap_or_default();
            self.record(&acquired.program, outcome, Some(evaluated), acquired.repairs, started_at)?;
            let record = self.state.iterations.last_mut().expect("just recorded");
            record.candidates = candidates;
            record.selected_candidate = Some(best);
            self.persist()?;
            previous = Some((acquired.program.source, summary, fitness[best]));
        }
        Ok(())
    }

    fn persist_failed_batch(&self, iteration: usize, candidates: &[CandidateRecord]) -> Result<(), PersistError> {
        let dir = iteration_dir(self.root, &self.state.run_id, iteration).join("candidates");
        for c in candidates {
            write_json(&dir.join(format!("cand_{}", c.index)).join("candidate.json"), c)?;
        }
        Ok(())
    }
}

/// Result of re-running a stored iteration's evaluation rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub manifest: FrameManifest,
    pub trajectory_digest: String,
    /// Whether the digest equals the one stored with the iteration.
    pub matches: bool,
}

/// Reproduces the evaluation rollout of iteration `k` from its stored policy
/// and program, writing its frames to `out`.
pub fn replay(root: &Path, run_id: &str, k: usize, out: &Path) -> Result<Replay, RunError> {
    let state = load_run(root, run_id)?;
    let record = state
        .iterations
        .get(k)
        .ok_or_else(|| RunError::Config(format!("run '{run_id}' has no iteration {k}")))?;
    let config = &state.config;
    let train = config.train_config();
    let program = parse_program(&record.program).map_err(|e| RunError::Config(e.to_string()))?;
    let policy = record
        .policy
        .params()
        .ok_or_else(|| RunError::Config("stored policy has the wrong shape".into()))?;
    let trajectory = rollout(&config.env, &policy, &program, train.discount, train.eval_seed())
        .map_err(|e| RunError::Config(e.to_string()))?;
    let frames: Vec<Frame> = trajectory
        .states()
        .map(|s| render_frame(s, config.frame_width, config.frame_height))
        .collect();
    let manifest = write_frames(&frames, out, config.env.dt)?;
    let digest = json_digest(&trajectory);
    Ok(Replay {
        manifest,
        matches: digest == record.trajectory_digest,
        trajectory_digest: digest,
    })
}

/// Normalized score of a stored iteration against an expert score program,
/// recomputed from scratch: the expert is retrained under the run's own
/// environment, training settings and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rescore {
    pub iteration: usize,
    pub candidate_raw: f64,
    pub expert_raw: f64,
    pub normalized: f64,
}

/// Rescores iteration `k` of `state` (the last one when `None`).
pub fn rescore(state: &RunState, k: Option<usize>, expert_source: &str) -> Result<Rescore, RunError> {
    let bad = |m: String| RunError::Config(m);
    let record = match k {
        Some(k) => state.iterations.get(k),
        None => state.iterations.last(),
    }
    .ok_or_else(|| bad(format!("run '{}' has no such iteration", state.run_id)))?;
    let config = &state.config;
    let train_config = config.train_config();
    let program = parse_program(expert_source.trim_end()).map_err(|e| bad(format!("expert score program: {e}")))?;
    validate_program(&program, &crate::env::observation_schema(&config.env))
        .map_err(|e| bad(format!("expert score program: {e}")))?;
    let outcome = train(&config.env, &program, &train_config).map_err(|e| bad(e.to_string()))?;
    let expert_traj = rollout(&config.env, &outcome.policy, &program, train_config.discount, train_config.eval_seed())
        .map_err(|e| bad(e.to_string()))?;
    let expert_raw = expert_score(&expert_traj, &program).map_err(|e| bad(e.to_string()))?;
    let candidate_raw = expert_score(&record.trajectory, &program).map_err(|e| bad(e.to_string()))?;
    let normalized = crate::eval::normalized_expert_score(candidate_raw, expert_raw).map_err(|e| bad(e.to_string()))?;
    Ok(Rescore {
        iteration: record.index,
        candidate_raw,
        expert_raw,
        normalized,
    })
}
