use serde::{Deserialize, Serialize};

use super::PolicyParams;
use crate::env::{observe, reset, step, Action, EnvConfig, EnvState, Observation, CHANNEL_NAMES};
use crate::lang::{ComponentValues, Evaluator, RewardLangError, RewardProgram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// State after the action was applied.
    pub state: EnvState,
    pub action: Action,
    pub observation: Observation,
    pub values: ComponentValues,
}

/// One episode. The reward of step `t` is evaluated on the observation that
/// follows action `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial_state: EnvState,
    pub steps: Vec<TrajectoryStep>,
    pub discount: f64,
    pub discounted_return: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Initial state followed by every post-step state (`len() + 1` entries).
    pub fn states(&self) -> impl Iterator<Item = &EnvState> {
        std::iter::once(&self.initial_state).chain(self.steps.iter().map(|s| &s.state))
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.steps.iter().map(|s| &s.observation)
    }
}

pub(crate) fn compile(program: &RewardProgram) -> Result<Evaluator, RewardLangError> {
    Evaluator::compile(program, &CHANNEL_NAMES)
}

/// Full rollout with per-step component values recorded.
pub fn rollout(
    env: &EnvConfig,
    policy: &PolicyParams,
    program: &RewardProgram,
    discount: f64,
    seed: u64,
) -> Result<Trajectory, RewardLangError> {
    let evaluator = compile(program)?;
    rollout_compiled(env, policy, &evaluator, discount, seed)
}

pub(crate) fn rollout_compiled(
    env: &EnvConfig,
    policy: &PolicyParams,
    evaluator: &Evaluator,
    discount: f64,
    seed: u64,
) -> Result<Trajectory, RewardLangError> {
    let initial_state = reset(env, seed);
    let mut state = initial_state;
    let mut obs = observe(&state, env);
    let mut scratch = Vec::new();
    let mut steps = Vec::with_capacity(env.horizon);
    let mut ret = 0.0;
    let mut weight = 1.0;
    for _ in 0..env.horizon {
        let action = policy.act(&obs);
        let (next, next_obs) = step(&state, action, env);
        let total = evaluator.evaluate(&next_obs.to_array(), &mut scratch)?;
        ret += weight * total;
        weight *= discount;
        steps.push(TrajectoryStep {
            state: next,
            action,
            observation: next_obs,
            values: evaluator.component_values(&scratch),
        });
        state = next;
        obs = next_obs;
    }
    Ok(Trajectory {
        initial_state,
        steps,
        discount,
        discounted_return: ret,
    })
}

/// Same episode as [`rollout`] but only the discounted return is kept.
pub(crate) fn rollout_return(
    env: &EnvConfig,
    policy: &PolicyParams,
    evaluator: &Evaluator,
    discount: f64,
    seed: u64,
    scratch: &mut Vec<f64>,
) -> Result<f64, RewardLangError> {
    let mut state = reset(env, seed);
    let mut obs = observe(&state, env);
    let mut ret = 0.0;
    let mut weight = 1.0;
    for _ in 0..env.horizon {
        let (next, next_obs) = step(&state, policy.act(&obs), env);
        ret += weight * evaluator.evaluate(&next_obs.to_array(), scratch)?;
        weight *= discount;
        state = next;
        obs = next_obs;
    }
    Ok(ret)
}
