//! Experiment configuration and its TOML representation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::MAX_EPISODE_STEPS;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Which reward components feed each neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeVariant {
    /// Global task reward only.
    Task,
    /// Task reward plus all four local rewards.
    All,
    /// Local rewards only until the switch episode, then all of them.
    BioThenAll,
}

impl SchemeVariant {
    pub const ALL_VARIANTS: [SchemeVariant; 3] = [
        SchemeVariant::All,
        SchemeVariant::BioThenAll,
        SchemeVariant::Task,
    ];

    /// Row label used in the results table.
    pub fn label(self) -> &'static str {
        match self {
            SchemeVariant::Task => "Task",
            SchemeVariant::All => "All",
            SchemeVariant::BioThenAll => "Bio→All",
        }
    }

    /// Identifier used in config files and CSV output.
    pub fn key(self) -> &'static str {
        match self {
            SchemeVariant::Task => "task",
            SchemeVariant::All => "all",
            SchemeVariant::BioThenAll => "bio-then-all",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL_VARIANTS.into_iter().find(|v| v.key() == key)
    }
}

/// How the number of layers maps onto populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    /// `num_layers` populations of `layer_width`, then one extra output neuron.
    Appended,
    /// `num_layers - 1` populations of `layer_width`; the last layer is the
    /// single output neuron.
    LastPopulation,
}

/// When the environment reward reaches the neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskRewardMode {
    /// Every step's environment reward is broadcast at that step.
    PerStep,
    /// The episode return is broadcast once, at the final step.
    EpisodeReturn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_layers: usize,
    pub layer_width: usize,
    pub output_mode: OutputMode,
    pub hidden_dim: usize,
    pub step_size: f64,
    pub discount: f64,

    pub scheme: SchemeVariant,
    pub switch_episode: usize,
    pub task_reward_mode: TaskRewardMode,
    pub weight_task: f64,
    pub weight_activity: f64,
    pub weight_sparsity: f64,
    pub weight_prediction: f64,
    pub weight_trace: f64,

    pub sparsity_low: f64,
    pub sparsity_high: f64,
    /// Penalize silent neurons when a layer is below the sparsity band.
    pub penalize_underactive: bool,
    pub trace_decay: f64,
    pub trace_initial: f64,
    pub trace_low: f64,
    pub trace_high: f64,

    pub max_episodes: usize,
    pub solve_threshold: f64,
    pub window: usize,
    pub num_runs: usize,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_layers: 1,
            layer_width: 10,
            output_mode: OutputMode::Appended,
            hidden_dim: 16,
            step_size: 0.01,
            discount: 0.99,
            scheme: SchemeVariant::All,
            switch_episode: 1000,
            task_reward_mode: TaskRewardMode::PerStep,
            weight_task: 1.0,
            weight_activity: 0.1,
            weight_sparsity: 1.0,
            weight_prediction: 1.0,
            weight_trace: 1.0,
            sparsity_low: 0.1,
            sparsity_high: 0.4,
            penalize_underactive: true,
            trace_decay: 0.9,
            trace_initial: 0.5,
            trace_low: 0.1,
            trace_high: 0.9,
            max_episodes: 20_000,
            solve_threshold: 300.0,
            window: 100,
            num_runs: 10,
            base_seed: 0,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid(msg()))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("num_layers", self.num_layers),
            ("layer_width", self.layer_width),
            ("hidden_dim", self.hidden_dim),
            ("max_episodes", self.max_episodes),
            ("window", self.window),
            ("num_runs", self.num_runs),
        ] {
            check(v > 0, || format!("{name} must be positive"))?;
        }
        check(self.step_size.is_finite() && self.step_size > 0.0, || {
            "step_size must be positive and finite".into()
        })?;
        check((0.0..=1.0).contains(&self.discount), || {
            "discount must lie in [0, 1]".into()
        })?;
        for (name, w) in [
            ("weight_task", self.weight_task),
            ("weight_activity", self.weight_activity),
            ("weight_sparsity", self.weight_sparsity),
            ("weight_prediction", self.weight_prediction),
            ("weight_trace", self.weight_trace),
        ] {
            check(w.is_finite() && w >= 0.0, || {
                format!("{name} must be finite and non-negative")
            })?;
        }
        check(
            0.0 <= self.sparsity_low
                && self.sparsity_low <= self.sparsity_high
                && self.sparsity_high <= 1.0,
            || "sparsity band must satisfy 0 <= low <= high <= 1".into(),
        )?;
        check(self.trace_decay > 0.0 && self.trace_decay < 1.0, || {
            "trace_decay must lie in (0, 1)".into()
        })?;
        check((0.0..=1.0).contains(&self.trace_initial), || {
            "trace_initial must lie in [0, 1]".into()
        })?;
        check(
            0.0 < self.trace_low && self.trace_low < self.trace_high && self.trace_high < 1.0,
            || "trace thresholds must satisfy 0 < low < high < 1".into(),
        )?;
        check(
            self.solve_threshold.is_finite() && self.solve_threshold <= MAX_EPISODE_STEPS as f64,
            || format!("solve_threshold must be finite and at most {MAX_EPISODE_STEPS}"),
        )?;
        Ok(())
    }

    /// Widths of every layer, the single-neuron output layer last.
    pub fn layer_widths(&self) -> Vec<usize> {
        let populations = match self.output_mode {
            OutputMode::Appended => self.num_layers,
            OutputMode::LastPopulation => self.num_layers - 1,
        };
        let mut widths = vec![self.layer_width; populations];
        widths.push(1);
        widths
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Every key is written, defaults included.
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}
