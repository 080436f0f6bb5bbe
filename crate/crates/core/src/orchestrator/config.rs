use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::digest::json_digest;
use crate::env::EnvConfig;
use crate::eval::{FitnessTask, DEFAULT_V_TARGET};
use crate::feedback::{BackendConfig, BackendKind};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Bilevel,
    Single,
    Eureka,
    EurekaGt,
    Human,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Bilevel => "bilevel",
            Mode::Single => "single",
            Mode::Eureka => "eureka",
            Mode::EurekaGt => "eureka_gt",
            Mode::Human => "human",
        }
    }

    pub fn is_eureka(self) -> bool {
        matches!(self, Mode::Eureka | Mode::EurekaGt)
    }

    /// Candidates sampled per iteration when the config does not say.
    pub fn default_batch(self) -> usize {
        match self {
            Mode::Eureka => 8,
            Mode::EurekaGt => 4,
            _ => 1,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Mode::Bilevel, Mode::Single, Mode::Eureka, Mode::EurekaGt, Mode::Human]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Defaults to `{mode}-seed{seed}-{digest prefix}`.
    pub run_id: Option<String>,
    pub iterations: usize,
    pub max_repair_attempts: usize,
    /// Candidates per iteration in the evolutionary modes.
    pub batch: Option<usize>,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub upper: BackendConfig,
    pub lower: BackendConfig,
    /// Directory holding the demonstration frames and `frames.json`.
    pub expert_media: PathBuf,
    pub expert_score_program: Option<PathBuf>,
    pub fitness_task: Option<FitnessTask>,
    pub v_target: f64,
    pub task_description: String,
    pub creature: String,
    pub seed: u64,
    /// Shell command with `{frames_dir}` and `{out}` placeholders.
    pub encoder_command: Option<String>,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Bilevel,
            run_id: None,
            iterations: 5,
            max_repair_attempts: 3,
            batch: None,
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            upper: BackendConfig::default(),
            lower: BackendConfig::default(),
            expert_media: PathBuf::new(),
            expert_score_program: None,
            fitness_task: None,
            v_target: DEFAULT_V_TARGET,
            task_description: String::new(),
            creature: String::new(),
            seed: 0,
            encoder_command: None,
            frame_width: 96,
            frame_height: 64,
        }
    }
}

impl RunConfig {
    pub fn batch_size(&self) -> usize {
        self.batch.unwrap_or(self.mode.default_batch())
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn run_id(&self) -> String {
        match &self.run_id {
            Some(id) => id.clone(),
            None => format!(
                "{}-seed{}-{}",
                self.mode,
                self.seed,
                &json_digest(self)[..8]
            ),
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.max_repair_attempts == 0 {
            return bad("max_repair_attempts must be at least 1".into());
        }
        if self.mode.is_eureka() && self.batch_size() == 0 {
            return bad("batch must be at least 1".into());
        }
        if let Some(id) = &self.run_id {
            if id.is_empty() || !id.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b)) || id.starts_with('.') {
                return bad(format!("run id '{id}' may only contain letters, digits, '-', '_' and '.'"));
            }
        }
        self.env.validate().map_err(|e| RunError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| RunError::Config(e.to_string()))?;
        if self.frame_width < 16 || self.frame_height < 16 {
            return bad("frames must be at least 16x16".into());
        }
        match self.mode {
            Mode::Bilevel | Mode::Single => {
                self.upper.validate().map_err(|e| RunError::Config(format!("upper: {e}")))?;
            }
            Mode::Human => {
                if self.upper.kind != BackendKind::Human {
                    return bad("human mode requires a human upper backend".into());
                }
            }
            Mode::Eureka => {
                if self.fitness_task.is_none() {
                    return bad("eureka mode requires fitness_task".into());
                }
            }
            Mode::EurekaGt => {
                if self.expert_score_program.is_none() {
                    return bad("eureka_gt mode requires expert_score_program".into());
                }
            }
        }
        if self.mode != Mode::Single {
            self.lower.validate().map_err(|e| RunError::Config(format!("lower: {e}")))?;
        }
        if !self.mode.is_eureka() {
            if self.creature.is_empty() {
                return bad("creature is required".into());
            }
            if self.expert_media.as_os_str().is_empty() {
                return bad("expert_media is required".into());
            }
        }
        if self.task_description.is_empty() {
            return bad("task_description is required".into());
        }
        Ok(())
    }

    /// Resolves relative paths against `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.expert_media);
        if let Some(p) = self.expert_score_program.as_mut() {
            fix(p);
        }
        for backend in [&mut self.upper, &mut self.lower] {
            if let Some(p) = backend.fixture_path.as_mut() {
                fix(p);
            }
        }
    }
}

/// Source of wall-clock stamps, injectable so runs can be byte-reproducible.
pub trait Clock: Send + Sync {
    fn now(&self) -> String;
}

/// Always returns the same stamp.
#[derive(Debug, Clone)]
pub struct FixedClock(pub String);

impl Clock for FixedClock {
    fn now(&self) -> String {
        self.0.clone()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        let d = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        rfc3339(d.as_secs() as i64, d.subsec_millis())
    }
}

/// UTC timestamp for `secs` since the Unix epoch.
pub fn rfc3339(secs: i64, millis: u32) -> String {
    let days = secs.div_euclid(86_400);
    let rem = secs.rem_euclid(86_400);
    // Civil-from-days (proleptic Gregorian).
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + i64::from(month <= 2);
    format!(
        "{year:04}-{month:02}-{day:02}T{:02}:{:02}:{:02}.{millis:03}Z",
        rem / 3600,
        rem % 3600 / 60,
        rem % 60
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps() {
        assert_eq!(rfc3339(0, 0), "1970-01-01T00:00:00.000Z");
        assert_eq!(rfc3339(951_782_400, 5), "2000-02-29T00:00:00.005Z");
        assert_eq!(rfc3339(1_700_000_000, 0), "2023-11-14T22:13:20.000Z");
    }

    #[test]
    fn defaults_and_batch() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.iterations, 5);
        assert_eq!(cfg.max_repair_attempts, 3);
        let eureka = RunConfig {
            mode: Mode::Eureka,
            ..RunConfig::default()
        };
        assert_eq!(eureka.batch_size(), 8);
        let gt = RunConfig {
            mode: Mode::EurekaGt,
            ..RunConfig::default()
        };
        assert_eq!(gt.batch_size(), 4);
        assert_eq!("eureka_gt".parse::<Mode>(), Ok(Mode::EurekaGt));
    }

    #[test]
    fn run_id_is_stable() {
        let cfg = RunConfig {
            seed: 7,
            ..RunConfig::default()
        };
        assert_eq!(cfg.run_id(), cfg.clone().run_id());
        assert!(cfg.run_id().starts_with("bilevel-seed7-"));
        let named = RunConfig {
            run_id: Some("../x".into()),
            ..cfg
        };
        assert!(named.validate().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"iterations": 2, "bogus": 1}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"mode": "single", "seed": 3}"#).unwrap();
        assert_eq!(cfg.mode, Mode::Single);
        assert_eq!(cfg.train, TrainConfig::default());
    }
}
