use bilevel_core::env::EnvConfig;
use bilevel_core::lang::parse_program;
use bilevel_core::trainer::{component_stats, rollout, train, PolicyParams, TrainConfig};
use proptest::prelude::*;

fn short_env() -> EnvConfig {
    EnvConfig {
        horizon: 12,
        ..EnvConfig::default()
    }
}

fn small_config(epochs: usize, epochfreq: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        epochfreq,
        population: 6,
        elite_count: 2,
        seed,
        ..TrainConfig::default()
    }
}

fn policy() -> impl Strategy<Value = PolicyParams> {
    prop::array::uniform20(-1.5..1.5f64).prop_map(|flat| PolicyParams::from_flat(&flat))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn checkpoint_schedule(epochs in 1usize..=30, epochfreq in 1usize..=10, seed in 0u64..1000) {
        let config = small_config(epochs, epochfreq, seed);
        let program = parse_program("r = vel_x + up_proj").unwrap();
        let outcome = train(&short_env(), &program, &config).unwrap();
        let expected: Vec<usize> = (0..=epochs / epochfreq).map(|k| k * epochfreq).collect();
        let got: Vec<usize> = outcome.stats.checkpoints.iter().map(|c| c.epoch).collect();
        prop_assert_eq!(got.len(), epochs / epochfreq + 1);
        prop_assert_eq!(got.len(), config.checkpoint_count());
        prop_assert_eq!(got, expected);
        prop_assert_eq!(outcome.best_returns.len(), epochs);
        prop_assert!(outcome.best_returns.windows(2).all(|w| w[0] <= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn discounted_return_is_the_weighted_sum(p in policy(), gamma in 0.5..0.999f64, seed in 0u64..100) {
        let env = EnvConfig { horizon: 60, ..EnvConfig::default() };
        let program = parse_program("f = vel_x\nh = torso_z * 2 - abs(pitch)").unwrap();
        let traj = rollout(&env, &p, &program, gamma, seed).unwrap();
        let brute: f64 = traj
            .steps
            .iter()
            .enumerate()
            .map(|(t, s)| gamma.powi(t as i32) * (s.values.components[0].1 + s.values.components[1].1))
            .sum();
        let scale = brute.abs().max(1.0);
        prop_assert!((traj.discounted_return - brute).abs() <= 1e-9 * scale, "{} vs {}", traj.discounted_return, brute);
    }

    #[test]
    fn stats_match_recomputation(p in policy(), seed in 0u64..100) {
        let env = EnvConfig { horizon: 40, ..EnvConfig::default() };
        let program = parse_program("a = vel_z\nb = where(contact > 0, 1, -1)").unwrap();
        let traj = rollout(&env, &p, &program, 0.99, seed).unwrap();
        let stats = component_stats(&traj);
        prop_assert_eq!(stats.len(), 2);
        for (k, stat) in stats.iter().enumerate() {
            let values: Vec<f64> = traj.steps.iter().map(|s| s.values.components[k].1).collect();
            let max = values.iter().cloned().fold(f64::MIN, f64::max);
            let min = values.iter().cloned().fold(f64::MAX, f64::min);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            prop_assert_eq!(stat.max, max);
            prop_assert_eq!(stat.min, min);
            prop_assert!((stat.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            prop_assert!(stat.min <= stat.mean && stat.mean <= stat.max);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let program = parse_program("r = vel_x").unwrap();
    let config = small_config(5, 2, 11);
    let a = train(&short_env(), &program, &config).unwrap();
    let b = train(&short_env(), &program, &config).unwrap();
    assert_eq!(a, b);
    let c = train(&short_env(), &program, &TrainConfig { seed: 12, ..config }).unwrap();
    assert_ne!(a.policy, c.policy);
}
