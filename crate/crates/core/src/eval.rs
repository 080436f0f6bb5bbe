//! Scores: the expert-tuned score and its normalized form, fitness analogs for
//! the evolutionary baseline, candidate selection, and human preferences.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::CHANNEL_NAMES;
use crate::lang::{parse_program, Evaluator, RewardLangError, RewardProgram};
use crate::trainer::Trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("expert score must be positive to normalize against, got {0}")]
    NonPositiveExpert(f64),
    #[error("every candidate failed; nothing to select")]
    NoViableCandidate,
    #[error("no preference records to aggregate")]
    NoPreferences,
}

/// The expert-tuned score program plus the raw score its own trained policy
/// reaches (the normalizing denominator).
#[derive(Debug, Clone)]
pub struct ExpertScoreProgram {
    pub program: RewardProgram,
    pub policy_digest: String,
    pub raw_score: f64,
}

impl ExpertScoreProgram {
    pub fn new(program: RewardProgram, policy_digest: String, raw_score: f64) -> Result<Self, ScoreError> {
        if !(raw_score > 0.0) {
            return Err(ScoreError::NonPositiveExpert(raw_score));
        }
        Ok(Self {
            program,
            policy_digest,
            raw_score,
        })
    }

    pub fn normalize(&self, candidate: f64) -> f64 {
        candidate / self.raw_score
    }
}

/// Evaluates `program` on every observation of `trajectory` and hands each
/// step's component values to `visit`.
fn for_each_step(
    trajectory: &Trajectory,
    program: &RewardProgram,
    mut visit: impl FnMut(f64, &[f64]),
) -> Result<(), RewardLangError> {
    let evaluator = Evaluator::compile(program, &CHANNEL_NAMES)?;
    let mut scratch = Vec::new();
    let mut components = Vec::new();
    for obs in trajectory.observations() {
        let total = evaluator.evaluate(&obs.to_array(), &mut scratch)?;
        components.clear();
        components.extend(evaluator.component_slice(&scratch));
        visit(total, &components);
    }
    Ok(())
}

/// Undiscounted sum of the score program's total over the trajectory.
pub fn expert_score(trajectory: &Trajectory, program: &RewardProgram) -> Result<f64, RewardLangError> {
    let mut sum = 0.0;
    for_each_step(trajectory, program, |total, _| sum += total)?;
    Ok(sum)
}

pub fn normalized_expert_score(candidate: f64, expert: f64) -> Result<f64, ScoreError> {
    if !(expert > 0.0) {
        return Err(ScoreError::NonPositiveExpert(expert));
    }
    Ok(candidate / expert)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessTask {
    SpiderWalking,
    SpiderJumping,
    HumanRunning,
    HumanSplitting,
    DogHopping,
}

impl FitnessTask {
    pub const ALL: [FitnessTask; 5] = [
        FitnessTask::SpiderWalking,
        FitnessTask::SpiderJumping,
        FitnessTask::HumanRunning,
        FitnessTask::HumanSplitting,
        FitnessTask::DogHopping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitnessTask::SpiderWalking => "spider_walking",
            FitnessTask::SpiderJumping => "spider_jumping",
            FitnessTask::HumanRunning => "human_running",
            FitnessTask::HumanSplitting => "human_splitting",
            FitnessTask::DogHopping => "dog_hopping",
        }
    }
}

impl fmt::Display for FitnessTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitnessTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown fitness task '{s}'"))
    }
}

/// Fitness of a trajectory: `sign * sum_k mean_t(component_k)`, with the
/// components given as a reward program over the environment channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessSpec {
    pub task: FitnessTask,
    pub program: String,
    pub sign: f64,
    /// Channel each original quantity maps to, for run metadata.
    pub channel_mapping: Vec<(String, String)>,
}

pub const DEFAULT_V_TARGET: f64 = 1.0;

impl FitnessSpec {
    pub fn new(task: FitnessTask, v_target: f64) -> Self {
        let map = |pairs: &[(&str, &str)]| {
            pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect::<Vec<_>>()
        };
        let (program, sign, channel_mapping) = match task {
            FitnessTask::SpiderWalking | FitnessTask::HumanRunning => (
                "forward = vel_x".to_string(),
                1.0,
                map(&[("forward_velocity", "vel_x")]),
            ),
            FitnessTask::SpiderJumping => (
                "forward = vel_x\nvertical = abs(vel_z)".to_string(),
                1.0,
                map(&[("forward_velocity", "vel_x"), ("vertical_velocity", "vel_z")]),
            ),
            // Written as a sum of deviations (a cost), hence the negation.
            FitnessTask::HumanSplitting => (
                "tilt = abs(pitch)\nspin = abs(ang_vel)".to_string(),
                -1.0,
                map(&[("joint_deviation", "pitch"), ("angular_velocity", "ang_vel")]),
            ),
            FitnessTask::DogHopping => (
                format!(
                    "linvel_error = abs(vel_x - {})\nangvel_error = abs(ang_vel)",
                    crate::lang::format_number(v_target)
                ),
                -1.0,
                map(&[("linear_velocity", "vel_x"), ("angular_velocity", "ang_vel")]),
            ),
        };
        Self {
            task,
            program,
            sign,
            channel_mapping,
        }
    }

    pub fn parsed(&self) -> Result<RewardProgram, RewardLangError> {
        parse_program(&self.program)
    }
}

pub fn eureka_fitness(trajectory: &Trajectory, spec: &FitnessSpec) -> Result<f64, RewardLangError> {
    let program = spec.parsed()?;
    let mut sums: Vec<f64> = Vec::new();
    for_each_step(trajectory, &program, |_, components| {
        if sums.is_empty() {
            sums = vec![0.0; components.len()];
        }
        for (s, c) in sums.iter_mut().zip(components) {
            *s += c;
        }
    })?;
    let n = trajectory.len().max(1) as f64;
    let mut fitness = 0.0;
    for s in sums {
        fitness += s / n;
    }
    Ok(spec.sign * fitness)
}

/// Index of the largest value, lowest index on ties. `-inf` and NaN mark
/// failed candidates.
pub fn select_best(values: &[f64]) -> Result<usize, ScoreError> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() || v == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best.ok_or(ScoreError::NoViableCandidate)
}

pub const MAX_PREFERENCE: u8 = 5;

#[derive(Debug, Error, PartialEq)]
#[error("preference score must be an integer from 0 to {MAX_PREFERENCE}, got {0}")]
pub struct PreferenceRangeError(pub i64);

/// One rater's 0-5 score for one iteration of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPreference")]
pub struct PreferenceRecord {
    pub run: String,
    pub iteration: usize,
    pub rater: String,
    pub score: u8,
    pub timestamp: String,
}

#[derive(Deserialize)]
struct RawPreference {
    run: String,
    iteration: usize,
    rater: String,
    score: i64,
    #[serde(default)]
    timestamp: String,
}

impl TryFrom<RawPreference> for PreferenceRecord {
    type Error = PreferenceRangeError;

    fn try_from(raw: RawPreference) -> Result<Self, Self::Error> {
        PreferenceRecord::new(raw.run, raw.iteration, raw.rater, raw.score, raw.timestamp)
    }
}

impl PreferenceRecord {
    pub fn new(
        run: impl Into<String>,
        iteration: usize,
        rater: impl Into<String>,
        score: i64,
        timestamp: impl Into<String>,
    ) -> Result<Self, PreferenceRangeError> {
        if !(0..=MAX_PREFERENCE as i64).contains(&score) {
            return Err(PreferenceRangeError(score));
        }
        Ok(Self {
            run: run.into(),
            iteration,
            rater: rater.into(),
            score: score as u8,
            timestamp: timestamp.into(),
        })
    }
}

/// Mean score per run id.
pub fn aggregate_preferences(records: &[PreferenceRecord]) -> Result<BTreeMap<String, f64>, ScoreError> {
    if records.is_empty() {
        return Err(ScoreError::NoPreferences);
    }
    let mut groups: BTreeMap<String, (u64, usize)> = BTreeMap::new();
    for r in records {
        let entry = groups.entry(r.run.clone()).or_default();
        entry.0 += r.score as u64;
        entry.1 += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(run, (sum, n))| (run, sum as f64 / n as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvState, Observation};
    use crate::lang::ComponentValues;
    use crate::trainer::{Trajectory, TrajectoryStep};

    fn trajectory(obs: impl IntoIterator<Item = (f64, f64, f64)>) -> Trajectory {
        let steps = obs
            .into_iter()
            .map(|(vx, vz, w)| TrajectoryStep {
                state: EnvState::default(),
                action: Default::default(),
                observation: Observation {
                    torso_z: 0.0,
                    vel_x: vx,
                    vel_z: vz,
                    pitch: 0.0,
                    ang_vel: w,
                    up_proj: 1.0,
                    contact: 1.0,
                    action_prev_0: 0.0,
                    action_prev_1: 0.0,
                },
                values: ComponentValues {
                    total: 0.0,
                    components: vec![],
                },
            })
            .collect();
        Trajectory {
            initial_state: EnvState::default(),
            steps,
            discount: 0.99,
            discounted_return: 0.0,
        }
    }

    #[test]
    fn expert_score_sums_undiscounted() {
        let program = parse_program("r = vel_x").unwrap();
        let t = trajectory((0..200).map(|_| (1.0, 0.0, 0.0)));
        assert_eq!(expert_score(&t, &program).unwrap(), 200.0);
        let zero = trajectory((0..200).map(|_| (0.0, 0.0, 0.0)));
        assert_eq!(expert_score(&zero, &program).unwrap(), 0.0);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalized_expert_score(4.0, 4.0), Ok(1.0));
        assert_eq!(normalized_expert_score(3.0, 4.0), Ok(0.75));
        assert!(normalized_expert_score(1.0, 0.0).is_err());
        assert!(ExpertScoreProgram::new(parse_program("r = vel_x").unwrap(), String::new(), -1.0).is_err());
    }

    #[test]
    fn fitness_analogs() {
        let walk = FitnessSpec::new(FitnessTask::SpiderWalking, DEFAULT_V_TARGET);
        let jump = FitnessSpec::new(FitnessTask::SpiderJumping, DEFAULT_V_TARGET);
        let hop = FitnessSpec::new(FitnessTask::DogHopping, 1.0);
        let t = trajectory((0..10).map(|i| (2.0, if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0)));
        assert_eq!(eureka_fitness(&t, &walk).unwrap(), 2.0);
        assert_eq!(eureka_fitness(&t, &jump).unwrap(), 3.0);
        let zero = trajectory((0..10).map(|_| (0.0, 0.0, 0.0)));
        assert_eq!(eureka_fitness(&zero, &hop).unwrap(), -1.0);
        for task in FitnessTask::ALL {
            assert_eq!(task.name().parse::<FitnessTask>(), Ok(task));
            assert!(FitnessSpec::new(task, 0.5).parsed().is_ok());
        }
    }

    #[test]
    fn selection() {
        assert_eq!(select_best(&[1.0, 3.0, 2.0, 3.0]), Ok(1));
        assert_eq!(select_best(&[-5.0]), Ok(0));
        assert_eq!(select_best(&[f64::NEG_INFINITY, -1.0]), Ok(1));
        assert_eq!(
            select_best(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            Err(ScoreError::NoViableCandidate)
        );
    }

    #[test]
    fn preferences() {
        let recs: Vec<_> = [3, 4, 5]
            .into_iter()
            .map(|s| PreferenceRecord::new("run-a", 0, "r1", s, "t").unwrap())
            .collect();
        assert_eq!(aggregate_preferences(&recs).unwrap()["run-a"], 4.0);
        let zero = PreferenceRecord::new("b", 0, "r", 0, "t").unwrap();
        assert_eq!(aggregate_preferences(&[zero]).unwrap()["b"], 0.0);
        assert_eq!(PreferenceRecord::new("b", 0, "r", 6, "t"), Err(PreferenceRangeError(6)));
        assert!(aggregate_preferences(&[]).is_err());
        let bad: Result<PreferenceRecord, _> =
            serde_json::from_str(r#"{"run":"a","iteration":0,"rater":"x","score":6}"#);
        assert!(bad.is_err());
    }
}
