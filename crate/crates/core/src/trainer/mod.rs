//! Lower-level policy optimization: a linear-tanh policy trained with the
//! cross-entropy method against a reward program.

mod policy;
mod rollout;
mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::json_digest;
use crate::env::EnvConfig;
use crate::lang::{Evaluator, RewardLangError, RewardProgram};

pub use policy::{PolicyParams, ACTION_DIM, PARAM_COUNT};
pub use rollout::{rollout, Trajectory, TrajectoryStep};
pub use stats::{
    component_stats, format_sig6, summarize_component_stats, Checkpoint, ComponentStat,
    ComponentStatsLog, EmptyStatsLog,
};

#[derive(Debug, Error, PartialEq)]
pub enum TrainConfigError {
    #[error("discount must lie strictly between 0 and 1, got {0}")]
    Discount(f64),
    #[error("epochs must be at least 1")]
    Epochs,
    #[error("epochfreq must be at least 1")]
    EpochFreq,
    #[error("population must be at least 1")]
    Population,
    #[error("elite count must be between 1 and the population size")]
    EliteCount,
    #[error("{0} must be finite and non-negative")]
    Noise(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub discount: f64,
    pub epochs: usize,
    /// Checkpoint interval in epochs.
    pub epochfreq: usize,
    pub population: usize,
    pub elite_count: usize,
    pub init_std: f64,
    pub noise_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            epochs: 60,
            epochfreq: 10,
            population: 32,
            elite_count: 6,
            init_std: 1.0,
            noise_decay: 0.95,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainConfigError> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(TrainConfigError::Discount(self.discount));
        }
        if self.epochs == 0 {
            return Err(TrainConfigError::Epochs);
        }
        if self.epochfreq == 0 {
            return Err(TrainConfigError::EpochFreq);
        }
        if self.population == 0 {
            return Err(TrainConfigError::Population);
        }
        if self.elite_count == 0 || self.elite_count > self.population {
            return Err(TrainConfigError::EliteCount);
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(TrainConfigError::Noise("init_std"));
        }
        if !(self.noise_decay >= 0.0 && self.noise_decay.is_finite()) {
            return Err(TrainConfigError::Noise("noise_decay"));
        }
        Ok(())
    }

    /// Number of checkpoints a training run records.
    pub fn checkpoint_count(&self) -> usize {
        self.epochs / self.epochfreq + 1
    }

    /// Seed of the evaluation rollouts (checkpoints and scoring).
    pub fn eval_seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Best candidate seen over all epochs.
    pub policy: PolicyParams,
    pub stats: ComponentStatsLog,
    /// Best-so-far candidate return after each epoch.
    pub best_returns: Vec<f64>,
}

/// Anything that can solve the lower-level problem for a reward program.
pub trait PolicyOptimizer: Sync {
    fn train(
        &self,
        env: &EnvConfig,
        program: &RewardProgram,
        config: &TrainConfig,
    ) -> Result<TrainOutcome, RewardLangError>;
}

/// The cross-entropy method with a decaying noise floor.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl PolicyOptimizer for CrossEntropy {
    fn train(
        &self,
        env: &EnvConfig,
        program: &RewardProgram,
        config: &TrainConfig,
    ) -> Result<TrainOutcome, RewardLangError> {
        train(env, program, config)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream seed derived from the training seed.
pub(crate) fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix(splitmix(seed) ^ stream)
}

fn checkpoint(
    env: &EnvConfig,
    evaluator: &Evaluator,
    config: &TrainConfig,
    epoch: usize,
    mean: &[f64; PARAM_COUNT],
) -> Result<Checkpoint, RewardLangError> {
    let policy = PolicyParams::from_flat(mean);
    let seed = config.eval_seed();
    let traj = rollout::rollout_compiled(env, &policy, evaluator, config.discount, seed)?;
    Ok(Checkpoint {
        epoch,
        components: component_stats(&traj),
        discounted_return: traj.discounted_return,
        policy,
        rollout_seed: seed,
    })
}

/// Trains a policy for `program` with the cross-entropy method.
///
/// Each epoch samples `population` parameter vectors from a diagonal Gaussian,
/// scores every candidate by one rollout (all candidates of an epoch share the
/// rollout seed), and refits the Gaussian to the elites. The standard deviation
/// keeps a floor of `init_std * noise_decay^(epoch + 1)`. Checkpoints record the
/// mean policy after every `epochfreq` completed epochs, starting at epoch 0.
///
/// # Panics
/// If `config` fails [`TrainConfig::validate`].
pub fn train(
    env: &EnvConfig,
    program: &RewardProgram,
    config: &TrainConfig,
) -> Result<TrainOutcome, RewardLangError> {
    config.validate().expect("invalid train config");
    let evaluator = rollout::compile(program)?;

    let mut mean = [0.0; PARAM_COUNT];
    let mut std = [config.init_std; PARAM_COUNT];
    let mut stats = ComponentStatsLog::default();
    stats.checkpoints.push(checkpoint(env, &evaluator, config, 0, &mean)?);

    let mut best: Option<(f64, [f64; PARAM_COUNT])> = None;
    let mut best_returns = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, 2 * epoch as u64 + 1));
        let candidates: Vec<[f64; PARAM_COUNT]> = (0..config.population)
            .map(|_| {
                std::array::from_fn(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean[i] + std[i] * z
                })
            })
            .collect();
        let rollout_seed = stream_seed(config.seed, 2 * epoch as u64 + 2);
        let returns: Vec<Result<f64, RewardLangError>> = candidates
            .par_iter()
            .map_init(Vec::new, |scratch, flat| {
                rollout::rollout_return(
                    env,
                    &PolicyParams::from_flat(flat),
                    &evaluator,
                    config.discount,
                    rollout_seed,
                    scratch,
                )
            })
            .collect();
        let returns = returns.into_iter().collect::<Result<Vec<f64>, _>>()?;

        // Descending by return; the stable sort keeps lower indices first on ties.
        let mut order: Vec<usize> = (0..returns.len()).collect();
        order.sort_by(|&a, &b| returns[b].total_cmp(&returns[a]));
        let top = order[0];
        if best.is_none_or(|(r, _)| returns[top] > r) {
            best = Some((returns[top], candidates[top]));
        }
        best_returns.push(best.expect("set above").0);

        let elites = &order[..config.elite_count];
        let n = elites.len() as f64;
        let floor = config.init_std * config.noise_decay.powi(epoch as i32 + 1);
        for i in 0..PARAM_COUNT {
            let m = elites.iter().map(|&e| candidates[e][i]).sum::<f64>() / n;
            let var = elites
                .iter()
                .map(|&e| (candidates[e][i] - m).powi(2))
                .sum::<f64>()
                / n;
            mean[i] = m;
            std[i] = (var + floor * floor).sqrt();
        }

        if (epoch + 1) % config.epochfreq == 0 {
            stats
                .checkpoints
                .push(checkpoint(env, &evaluator, config, epoch + 1, &mean)?);
        }
    }

    let (_, flat) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        policy: PolicyParams::from_flat(&flat),
        stats,
        best_returns,
    })
}

/// On-disk form of a trained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub seed: u64,
    pub config_digest: String,
}

/// Digest of the configuration pair a policy was trained under.
pub fn config_digest(env: &EnvConfig, train: &TrainConfig) -> String {
    json_digest(&(env, train))
}

impl PolicyFile {
    pub fn new(policy: &PolicyParams, env: &EnvConfig, train: &TrainConfig) -> Self {
        Self {
            weights: policy.weights.iter().map(|row| row.to_vec()).collect(),
            bias: policy.bias.to_vec(),
            seed: train.seed,
            config_digest: config_digest(env, train),
        }
    }

    /// Returns `None` when the stored shape does not match the policy.
    pub fn params(&self) -> Option<PolicyParams> {
        let mut params = PolicyParams::default();
        if self.weights.len() != ACTION_DIM || self.bias.len() != ACTION_DIM {
            return None;
        }
        for (dst, src) in params.weights.iter_mut().zip(&self.weights) {
            if src.len() != dst.len() {
                return None;
            }
            dst.copy_from_slice(src);
        }
        params.bias.copy_from_slice(&self.bias);
        Some(params)
    }
}
