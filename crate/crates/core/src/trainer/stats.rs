use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PolicyParams, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStat {
    pub name: String,
    pub max: f64,
    pub mean: f64,
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Number of completed epochs when the snapshot was taken.
    pub epoch: usize,
    /// Mean policy that produced the evaluation rollout.
    pub policy: PolicyParams,
    pub rollout_seed: u64,
    pub discounted_return: f64,
    pub components: Vec<ComponentStat>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentStatsLog {
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Error, PartialEq)]
#[error("component statistics log is empty")]
pub struct EmptyStatsLog;

/// Per-component max/mean/min over every step of `trajectory`.
pub fn component_stats(trajectory: &Trajectory) -> Vec<ComponentStat> {
    let Some(first) = trajectory.steps.first() else {
        return Vec::new();
    };
    let n = trajectory.steps.len() as f64;
    first
        .values
        .components
        .iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let mut max = f64::NEG_INFINITY;
            let mut min = f64::INFINITY;
            let mut sum = 0.0;
            for step in &trajectory.steps {
                let v = step.values.components[k].1;
                max = max.max(v);
                min = min.min(v);
                sum += v;
            }
            ComponentStat {
                name: name.clone(),
                max,
                // Keeps min <= mean <= max despite rounding in the sum.
                mean: (sum / n).clamp(min, max),
                min,
            }
        })
        .collect()
}

/// Six significant digits; fixed-point for moderate magnitudes, otherwise
/// scientific.
pub fn format_sig6(value: f64) -> String {
    if value == 0.0 {
        return "0.00000".into();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let sci = format!("{value:.5e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..6).contains(&exp) {
        format!("{:.*}", (5 - exp) as usize, value)
    } else {
        sci
    }
}

/// Text block for the review prompts: per-checkpoint means and overall
/// max/mean/min for each component.
pub fn summarize_component_stats(log: &ComponentStatsLog) -> Result<String, EmptyStatsLog> {
    let first = log.checkpoints.first().ok_or(EmptyStatsLog)?;
    let epochs: Vec<String> = log.checkpoints.iter().map(|c| c.epoch.to_string()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "checkpoints at epochs: {}", epochs.join(", "));
    for (k, stat) in first.components.iter().enumerate() {
        let per: Vec<&ComponentStat> = log.checkpoints.iter().map(|c| &c.components[k]).collect();
        let means: Vec<String> = per.iter().map(|s| format_sig6(s.mean)).collect();
        let max = per.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max);
        let min = per.iter().map(|s| s.min).fold(f64::INFINITY, f64::min);
        let mean = per.iter().map(|s| s.mean).sum::<f64>() / per.len() as f64;
        let _ = writeln!(out, "{}:", stat.name);
        let _ = writeln!(out, "  mean per checkpoint: [{}]", means.join(", "));
        let _ = writeln!(
            out,
            "  overall: max {}, mean {}, min {}",
            format_sig6(max),
            format_sig6(mean),
            format_sig6(min)
        );
    }
    Ok(out)
}
