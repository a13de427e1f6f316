//! Experiment configuration: the JSON document, its defaults and the
//! validation that turns it into runnable cells.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::PolicyKind;
use crate::env::{Env, EnvError, EnvParams, JammerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config error at `{field}`: {message}")]
    Parse { field: String, message: String },
    #[error("config error on `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    /// Dotted path of the offending field.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Io { .. } => None,
            Self::Parse { field, .. } | Self::Invalid { field, .. } => Some(field),
        }
    }

    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid { field: field.into(), reason: reason.into() }
    }

    fn from_env(section: &str, err: EnvError) -> Self {
        match err {
            EnvError::InvalidParam { field, reason } => Self::invalid(format!("{section}.{field}"), reason),
            other => Self::invalid(section, other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Q,
    Dqn,
    #[default]
    Dueling,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Self::Q, Self::Dqn, Self::Dueling];

    pub fn name(self) -> &'static str {
        match self {
            Self::Q => "q",
            Self::Dqn => "dqn",
            Self::Dueling => "dueling",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected q, dqn or dueling)"))
    }
}

/// Jammer section of the config. Attack probabilities follow from the
/// budget unless `x` is given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JammerSpec {
    #[serde(rename = "P_J")]
    pub power_levels: Vec<f64>,
    #[serde(rename = "P_avg")]
    pub avg_power: f64,
    #[serde(rename = "P_dagger")]
    pub max_avg_power: f64,
    #[serde(rename = "P_max")]
    pub peak_power: f64,
    pub phi: f64,
    pub rho_sq: f64,
    /// How an attack splits over the nonzero levels.
    pub split: Vec<f64>,
    /// Explicit attack probabilities, one per level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
}

impl Default for JammerSpec {
    fn default() -> Self {
        let cfg = JammerConfig::default();
        Self {
            power_levels: cfg.power_levels,
            avg_power: cfg.avg_power,
            max_avg_power: cfg.max_avg_power,
            peak_power: cfg.peak_power,
            phi: cfg.attenuation,
            rho_sq: cfg.noise_var,
            split: JammerConfig::DEFAULT_SPLIT.to_vec(),
            x: None,
        }
    }
}

impl JammerSpec {
    pub fn build(&self) -> Result<JammerConfig, ConfigError> {
        if self.max_avg_power <= 0.0 {
            return Err(ConfigError::invalid("jammer.P_dagger", "must be positive"));
        }
        if self.x.is_none() {
            if self.split.len() + 1 != self.power_levels.len() {
                return Err(ConfigError::invalid("jammer.split", "need one share per nonzero power level"));
            }
            if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(ConfigError::invalid("jammer.split", "shares must sum to 1"));
            }
            if self.avg_power > self.max_avg_power {
                return Err(ConfigError::invalid("jammer.P_avg", "may not exceed P_dagger"));
            }
        }
        let mut cfg = JammerConfig::with_split(
            self.power_levels.clone(),
            &self.split,
            self.avg_power,
            self.max_avg_power,
            self.peak_power,
        );
        if let Some(x) = &self.x {
            cfg.attack_probs = x.clone();
        }
        cfg.attenuation = self.phi;
        cfg.noise_var = self.rho_sq;
        cfg.validate().map_err(|e| ConfigError::from_env("jammer", e))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "P_avg")]
    AvgPower,
    #[serde(rename = "lambda")]
    ArrivalProb,
    #[serde(rename = "p_e")]
    AmbientProb,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::AvgPower => "P_avg",
            Self::ArrivalProb => "lambda",
            Self::AmbientProb => "p_e",
        }
    }

    fn field(self) -> &'static str {
        match self {
            Self::AvgPower => "jammer.P_avg",
            Self::ArrivalProb => "env.lambda",
            Self::AmbientProb => "env.p_e",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

pub const DEFAULT_ITERATIONS: u64 = 40_000;
pub const DEFAULT_EVAL_WINDOW: u64 = 5_000;
/// Metric rows per run when `eval_every` is not given.
pub const DEFAULT_SAMPLES: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvParams,
    pub jammer: JammerSpec,
    pub algo: Algo,
    pub policy: PolicyKind,
    /// Training length in decision epochs.
    pub iterations: u64,
    /// Slots per evaluation rollout.
    pub eval_window: u64,
    /// Decision epochs between metric rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<u64>,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvParams::default(),
            jammer: JammerSpec::default(),
            algo: Algo::default(),
            policy: PolicyKind::default(),
            iterations: DEFAULT_ITERATIONS,
            eval_window: DEFAULT_EVAL_WINDOW,
            eval_every: None,
            seeds: vec![1],
            sweep: None,
        }
    }
}

/// One (sweep value, seed) pair with its ready-to-run environment.
#[derive(Debug, Clone)]
pub struct Cell {
    pub param: SweepParam,
    pub value: f64,
    pub seed: u64,
    pub env: Env,
}

impl Cell {
    /// Output file name, `<policy>_<algo>_<param>=<value>_seed<seed>.csv`.
    pub fn file_name(&self, cfg: &ExperimentConfig) -> String {
        format!("{}_{}_{}={}_seed{}.csv", cfg.policy, cfg.algo, self.param.name(), self.value, self.seed)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_every(&self) -> u64 {
        self.eval_every.unwrap_or((self.iterations / DEFAULT_SAMPLES).max(1))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.eval_window == 0 {
            return Err(ConfigError::invalid("eval_window", "must be at least one slot"));
        }
        if self.eval_every == Some(0) {
            return Err(ConfigError::invalid("eval_every", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "need at least one seed"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(ConfigError::invalid("sweep.values", "need at least one value"));
            }
        }
        for value in self.sweep_values() {
            self.environment(value)?;
        }
        Ok(())
    }

    fn sweep_param(&self) -> SweepParam {
        self.sweep.as_ref().map_or(SweepParam::AvgPower, |s| s.param)
    }

    /// Swept values, or the configured `P_avg` alone without a sweep.
    pub fn sweep_values(&self) -> Vec<f64> {
        match &self.sweep {
            Some(s) => s.values.clone(),
            None => vec![self.jammer.avg_power],
        }
    }

    /// The environment with the swept parameter set to `value`.
    pub fn environment(&self, value: f64) -> Result<Env, ConfigError> {
        let param = self.sweep_param();
        let mut env = self.env.clone();
        let mut jammer = self.jammer.clone();
        match param {
            SweepParam::AvgPower => jammer.avg_power = value,
            SweepParam::ArrivalProb => env.arrival_prob = value,
            SweepParam::AmbientProb => env.ambient_prob = value,
        }
        let jammer = jammer.build().map_err(|e| match (self.sweep.is_some(), e) {
            (true, ConfigError::Invalid { reason, .. }) => {
                ConfigError::invalid("sweep.values", format!("{}={value}: {reason}", param.field()))
            }
            (_, e) => e,
        })?;
        env.validate(jammer.level_count()).map_err(|e| ConfigError::from_env("env", e))?;
        Env::new(env, jammer).map_err(|e| ConfigError::from_env("env", e))
    }

    /// Every (sweep value, seed) cell in output order.
    pub fn cells(&self) -> Result<Vec<Cell>, ConfigError> {
        let param = self.sweep_param();
        let mut cells = Vec::new();
        for value in self.sweep_values() {
            let env = self.environment(value)?;
            for &seed in &self.seeds {
                cells.push(Cell { param, value, seed, env: env.clone() });
            }
        }
        Ok(cells)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    ExperimentConfig::from_json(&text)
}
