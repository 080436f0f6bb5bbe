//! Writes a demonstration clip for a reward program: trains a policy on it,
//! rolls the policy out and stores every `stride`-th frame.
//!
//! ```text
//! cargo run --release -p bilevel-core --example expert_media -- \
//!     <program.rwd> <out_dir> [seed] [stride] [width] [height]
//! ```

use std::path::PathBuf;

use bilevel_core::env::{render_frame, write_frames, EnvConfig};
use bilevel_core::lang::parse_program;
use bilevel_core::trainer::{rollout, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        return Err("usage: expert_media <program.rwd> <out_dir> [seed] [stride] [width] [height]".into());
    }
    let arg = |i: usize, default: usize| args.get(i).map_or(Ok(default), |s| s.parse::<usize>());
    let source = std::fs::read_to_string(&args[0])?;
    let out = PathBuf::from(&args[1]);
    let seed = arg(2, 0)? as u64;
    let stride = arg(3, 10)?.max(1);
    let (width, height) = (arg(4, 48)?, arg(5, 32)?);

    let env = EnvConfig::default();
    let config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let program = parse_program(source.trim_end())?;
    let outcome = train(&env, &program, &config)?;
    let trajectory = rollout(&env, &outcome.policy, &program, config.discount, config.eval_seed())?;
    let frames: Vec<_> = trajectory
        .states()
        .step_by(stride)
        .map(|s| render_frame(s, width, height))
        .collect();
    let manifest = write_frames(&frames, &out, env.dt * stride as f64)?;
    println!(
        "wrote {} frames ({}x{}) to {}",
        manifest.count,
        manifest.width,
        manifest.height,
        out.display()
    );
    Ok(())
}
