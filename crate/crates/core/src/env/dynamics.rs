use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvConfigError {
    #[error("dt must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("coefficient '{0}' must be finite and non-negative")]
    NegativeCoefficient(&'static str),
}

/// Physical constants of the planar hopper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Integration step, seconds.
    pub dt: f64,
    /// Thrust per unit mass at full throttle.
    pub thrust_max: f64,
    pub torque_max: f64,
    pub gravity: f64,
    pub linear_drag: f64,
    pub rotational_damping: f64,
    pub ground_friction: f64,
    /// Episode length in steps.
    pub horizon: usize,
    pub contact_epsilon: f64,
    /// Amplitude of the uniform x/z offset applied at reset.
    pub init_noise: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            thrust_max: 15.0,
            torque_max: 5.0,
            gravity: 9.81,
            linear_drag: 0.1,
            rotational_damping: 0.2,
            ground_friction: 0.5,
            horizon: 200,
            contact_epsilon: 1e-6,
            init_noise: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(EnvConfigError::NonPositiveDt(self.dt));
        }
        if self.horizon == 0 {
            return Err(EnvConfigError::ZeroHorizon);
        }
        let coefficients = [
            ("thrust_max", self.thrust_max),
            ("torque_max", self.torque_max),
            ("gravity", self.gravity),
            ("linear_drag", self.linear_drag),
            ("rotational_damping", self.rotational_damping),
            ("ground_friction", self.ground_friction),
            ("contact_epsilon", self.contact_epsilon),
            ("init_noise", self.init_noise),
        ];
        for (name, value) in coefficients {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(EnvConfigError::NegativeCoefficient(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvState {
    pub x: f64,
    pub z: f64,
    pub vx: f64,
    pub vz: f64,
    /// Radians, kept in [-pi, pi].
    pub pitch: f64,
    pub ang_vel: f64,
    pub prev_action: [f64; 2],
    pub step: u32,
}

/// Thrust along the body-up axis and pitch torque, both in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub thrust: f64,
    pub torque: f64,
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-1.0, 1.0)
    }
}

impl Action {
    pub fn new(thrust: f64, torque: f64) -> Self {
        Self {
            thrust: clamp_unit(thrust),
            torque: clamp_unit(torque),
        }
    }
}

pub const CHANNEL_COUNT: usize = 9;

/// Names of the observation channels, in [`Observation::to_array`] order.
pub const CHANNEL_NAMES: [&str; CHANNEL_COUNT] = [
    "torso_z",
    "vel_x",
    "vel_z",
    "pitch",
    "ang_vel",
    "up_proj",
    "contact",
    "action_prev_0",
    "action_prev_1",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub torso_z: f64,
    pub vel_x: f64,
    pub vel_z: f64,
    pub pitch: f64,
    pub ang_vel: f64,
    pub up_proj: f64,
    pub contact: f64,
    pub action_prev_0: f64,
    pub action_prev_1: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; CHANNEL_COUNT] {
        [
            self.torso_z,
            self.vel_x,
            self.vel_z,
            self.pitch,
            self.ang_vel,
            self.up_proj,
            self.contact,
            self.action_prev_0,
            self.action_prev_1,
        ]
    }
}

pub fn observe(state: &EnvState, config: &EnvConfig) -> Observation {
    Observation {
        torso_z: state.z,
        vel_x: state.vx,
        vel_z: state.vz,
        pitch: state.pitch,
        ang_vel: state.ang_vel,
        up_proj: state.pitch.cos(),
        contact: if state.z <= config.contact_epsilon { 1.0 } else { 0.0 },
        action_prev_0: state.prev_action[0],
        action_prev_1: state.prev_action[1],
    }
}

/// Initial state. With zero noise this is the all-zero state resting on the
/// ground; otherwise x and z receive seeded uniform offsets in [-a, a].
pub fn reset(config: &EnvConfig, seed: u64) -> EnvState {
    let mut state = EnvState::default();
    let a = config.init_noise;
    if a > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        state.x = rng.random_range(-a..=a);
        // z is clamped to the ground.
        state.z = rng.random_range(-a..=a).max(0.0);
    }
    state
}

fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta;
    while t > PI {
        t -= 2.0 * PI;
    }
    while t < -PI {
        t += 2.0 * PI;
    }
    t
}

/// Advances one semi-implicit Euler step.
pub fn step(state: &EnvState, action: Action, config: &EnvConfig) -> (EnvState, Observation) {
    let action = Action::new(action.thrust, action.torque);
    let dt = config.dt;
    let thrust = action.thrust * config.thrust_max;
    let fx = -state.pitch.sin() * thrust;
    let fz = state.pitch.cos() * thrust;

    let mut vx = state.vx + dt * (fx - config.linear_drag * state.vx);
    let mut vz = state.vz + dt * (fz - config.gravity - config.linear_drag * state.vz);
    let ang_vel = state.ang_vel
        + dt * (action.torque * config.torque_max - config.rotational_damping * state.ang_vel);

    let x = state.x + dt * vx;
    let mut z = state.z + dt * vz;
    let pitch = wrap_angle(state.pitch + dt * ang_vel);

    if z < 0.0 {
        z = 0.0;
        vz = vz.max(0.0);
        vx *= 1.0 - config.ground_friction * dt;
    }

    let next = EnvState {
        x,
        z,
        vx,
        vz,
        pitch,
        ang_vel,
        prev_action: [action.thrust, action.torque],
        step: state.step + 1,
    };
    (next, observe(&next, config))
}
