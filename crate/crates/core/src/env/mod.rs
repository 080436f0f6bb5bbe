//! PointHopper: a deterministic planar hopper with thrust along its body axis
//! and a pitch torque, plus the software renderer that turns rollouts into
//! frame sequences.

mod dynamics;
mod frames;
mod render;

use std::fmt::Write;

use serde::{Deserialize, Serialize};

pub use dynamics::{
    observe, reset, step, Action, EnvConfig, EnvConfigError, EnvState, Observation,
    CHANNEL_COUNT, CHANNEL_NAMES,
};
pub use frames::{
    decode_ppm, encode_png, frame_file_name, ppm_to_png, read_frame, read_frames, read_manifest, write_frames,
    FrameError, FrameManifest,
};
pub use render::{render_frame, world_to_pixel, Frame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    pub description: String,
    pub unit: String,
}

/// The closed set of variables a reward program may read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSchema {
    pub channels: Vec<ChannelInfo>,
}

impl ObservationSchema {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|c| c.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names().any(|n| n == name)
    }
}

const CHANNEL_DOCS: [(&str, &str); CHANNEL_COUNT] = [
    ("height of the body above the ground", "m"),
    ("forward (horizontal) velocity, positive is forward", "m/s"),
    ("vertical velocity, positive is upward", "m/s"),
    ("body pitch angle, 0 is upright, positive tilts backward", "rad"),
    ("pitch angular velocity", "rad/s"),
    ("projection of the body-up axis on world up, cos(pitch)", "1"),
    ("1 when touching the ground, otherwise 0", "1"),
    ("thrust command applied on the previous step, in [-1, 1]", "1"),
    ("torque command applied on the previous step, in [-1, 1]", "1"),
];

pub fn observation_schema(_config: &EnvConfig) -> ObservationSchema {
    ObservationSchema {
        channels: CHANNEL_NAMES
            .iter()
            .zip(CHANNEL_DOCS)
            .map(|(name, (description, unit))| ChannelInfo {
                name: name.to_string(),
                description: description.to_string(),
                unit: unit.to_string(),
            })
            .collect(),
    }
}

/// Environment description used as prompt context for both backends.
pub fn env_context_text(config: &EnvConfig) -> String {
    let schema = observation_schema(config);
    let mut out = String::new();
    out.push_str("Environment: PointHopper, a planar (2D) single-body hopper.\n");
    out.push_str(
        "The body moves in the x (forward) / z (up) plane. It has two actuators: a thrust\n\
         along its own up axis and a torque that changes its pitch. Gravity pulls it down;\n\
         the ground at z = 0 is inelastic and has friction.\n\n",
    );
    out.push_str("Observation variables available to the reward function (name: meaning [unit]):\n");
    for channel in &schema.channels {
        let _ = writeln!(
            out,
            "  {}: {} [{}]",
            channel.name, channel.description, channel.unit
        );
    }
    let _ = write!(
        out,
        "\nDynamics (semi-implicit Euler, dt = {dt} s):\n\
         \x20 thrust force = {thrust} * thrust_command along the body-up axis (-sin(pitch), cos(pitch))\n\
         \x20 torque = {torque} * torque_command; rotational damping {rot}\n\
         \x20 gravity = {g} m/s^2; linear drag {drag}; ground friction {mu}\n\
         \x20 actions are two commands in [-1, 1]: thrust_command, torque_command\n\
         Episode horizon: {horizon} steps ({secs} s). The body starts at rest on the ground.\n",
        dt = config.dt,
        thrust = config.thrust_max,
        torque = config.torque_max,
        rot = config.rotational_damping,
        g = config.gravity,
        drag = config.linear_drag,
        mu = config.ground_friction,
        horizon = config.horizon,
        secs = config.horizon as f64 * config.dt,
    );
    out
}
