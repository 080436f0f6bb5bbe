use serde::{Deserialize, Serialize};

use crate::env::{Action, Observation, CHANNEL_COUNT};

pub const ACTION_DIM: usize = 2;
pub const PARAM_COUNT: usize = ACTION_DIM * CHANNEL_COUNT + ACTION_DIM;

/// Linear-tanh policy: `action = tanh(W * obs + b)` componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Row-major, one row per action dimension.
    pub weights: [[f64; CHANNEL_COUNT]; ACTION_DIM],
    pub bias: [f64; ACTION_DIM],
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            weights: [[0.0; CHANNEL_COUNT]; ACTION_DIM],
            bias: [0.0; ACTION_DIM],
        }
    }
}

impl PolicyParams {
    /// Inverse of [`PolicyParams::to_flat`]: weights row by row, then bias.
    pub fn from_flat(flat: &[f64; PARAM_COUNT]) -> Self {
        let mut params = Self::default();
        for (row, weights) in params.weights.iter_mut().enumerate() {
            weights.copy_from_slice(&flat[row * CHANNEL_COUNT..(row + 1) * CHANNEL_COUNT]);
        }
        params
            .bias
            .copy_from_slice(&flat[ACTION_DIM * CHANNEL_COUNT..]);
        params
    }

    pub fn to_flat(&self) -> [f64; PARAM_COUNT] {
        let mut flat = [0.0; PARAM_COUNT];
        for (row, weights) in self.weights.iter().enumerate() {
            flat[row * CHANNEL_COUNT..(row + 1) * CHANNEL_COUNT].copy_from_slice(weights);
        }
        flat[ACTION_DIM * CHANNEL_COUNT..].copy_from_slice(&self.bias);
        flat
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    pub fn act(&self, obs: &Observation) -> Action {
        let x = obs.to_array();
        let mut out = [0.0; ACTION_DIM];
        for (k, o) in out.iter_mut().enumerate() {
            let mut sum = self.bias[k];
            for (w, xi) in self.weights[k].iter().zip(&x) {
                sum += w * xi;
            }
            *o = sum.tanh();
        }
        Action::new(out[0], out[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let flat: [f64; PARAM_COUNT] = std::array::from_fn(|i| i as f64 * 0.5);
        let p = PolicyParams::from_flat(&flat);
        assert_eq!(p.weights[1][0], 4.5);
        assert_eq!(p.bias, [9.0, 9.5]);
        assert_eq!(p.to_flat(), flat);
    }

    #[test]
    fn zero_policy_is_idle() {
        let obs = Observation {
            torso_z: 1.0,
            vel_x: 2.0,
            vel_z: 3.0,
            pitch: 0.1,
            ang_vel: 0.2,
            up_proj: 0.9,
            contact: 0.0,
            action_prev_0: 0.3,
            action_prev_1: -0.3,
        };
        assert_eq!(PolicyParams::default().act(&obs), Action::default());
        let mut p = PolicyParams::default();
        p.bias = [50.0, -50.0];
        assert_eq!(p.act(&obs), Action::new(1.0, -1.0));
    }
}
