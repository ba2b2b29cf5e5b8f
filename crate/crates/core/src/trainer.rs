//! Episode loop, stopping rule and multi-seed experiments.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, SchemeVariant};
use crate::environment::{CartPole, EnvError, Environment};
use crate::network::{EpisodeHistory, Network, NetworkError};
use crate::rewards::{compute_ledger, ActivityTraceState, RewardLedger, RewardSettings};
use crate::seeding::{environment_stream, StreamRng};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Everything produced by one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub episode_index: usize,
    pub history: EpisodeHistory,
    pub ledger: RewardLedger,
    pub task_return: f64,
}

/// One training run: a network, its environment and all per-run state.
pub struct Run {
    pub run_seed: u64,
    config: ExperimentConfig,
    settings: RewardSettings,
    network: Network,
    env: CartPole,
    env_rng: StreamRng,
    traces: ActivityTraceState,
    episodes_done: usize,
}

impl Run {
    pub fn new(config: &ExperimentConfig, run_seed: u64) -> Result<Self, TrainError> {
        config.validate()?;
        let env = CartPole::new();
        let network = Network::from_config(config, env.observation_dim(), run_seed)?;
        let traces = ActivityTraceState::new(
            network.num_neurons(),
            config.trace_initial,
            config.trace_decay,
        );
        Ok(Self {
            run_seed,
            config: config.clone(),
            settings: RewardSettings::from_config(config),
            network,
            env,
            env_rng: environment_stream(run_seed),
            traces,
            episodes_done: 0,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn traces(&self) -> &ActivityTraceState {
        &self.traces
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    /// Plays one episode to termination, computes the reward ledger and
    /// applies every neuron's policy-gradient update.
    pub fn run_episode(&mut self) -> Result<EpisodeOutcome, TrainError> {
        let episode_index = self.episodes_done;
        self.network.begin_episode();
        let mut observation = self.env.reset(&mut self.env_rng);
        loop {
            let action = self.network.forward(&observation)?.env_action;
            let outcome = self.env.step(action)?;
            self.network.record_task_reward(outcome.reward);
            if outcome.terminal {
                break;
            }
            observation = outcome.observation;
        }
        let history = self.network.take_history();
        let ledger = compute_ledger(
            &history,
            self.network.topology(),
            &mut self.traces,
            &self.settings,
            episode_index,
        );
        self.episodes_done += 1;
        self.network.learn(
            ledger.totals_by_neuron(),
            self.config.discount,
            self.config.step_size,
        )?;
        Ok(EpisodeOutcome {
            episode_index,
            task_return: history.task_return(),
            history,
            ledger,
        })
    }
}

/// Streaming check of the "mean of the last `window` returns reaches the
/// threshold" stopping rule.
#[derive(Debug, Clone)]
pub struct SolveTracker {
    window: usize,
    threshold: f64,
    returns: Vec<f64>,
    solved_at: Option<usize>,
    best_full_window: Option<f64>,
}

impl SolveTracker {
    pub fn new(window: usize, threshold: f64) -> Self {
        Self {
            window,
            threshold,
            returns: Vec::new(),
            solved_at: None,
            best_full_window: None,
        }
    }

    /// Records the next return and reports the rolling mean over the last
    /// `window` returns (fewer while the run is young).
    pub fn push(&mut self, task_return: f64) -> f64 {
        self.returns.push(task_return);
        let start = self.returns.len().saturating_sub(self.window);
        let recent = &self.returns[start..];
        let mean = recent.iter().sum::<f64>() / recent.len() as f64;
        if recent.len() == self.window {
            self.best_full_window = Some(self.best_full_window.map_or(mean, |b| b.max(mean)));
            if self.solved_at.is_none() && mean >= self.threshold {
                self.solved_at = Some(self.returns.len());
            }
        }
        mean
    }

    /// 1-based episode count at which the rule first held.
    pub fn solved_at(&self) -> Option<usize> {
        self.solved_at
    }

    pub fn best_full_window(&self) -> Option<f64> {
        self.best_full_window
    }
}

/// First episode count (1-based) whose trailing window mean reaches `threshold`.
pub fn first_solving_episode(returns: &[f64], window: usize, threshold: f64) -> Option<usize> {
    let mut tracker = SolveTracker::new(window, threshold);
    returns.iter().find_map(|&r| {
        tracker.push(r);
        tracker.solved_at()
    })
}

/// Mean episodes-to-solve with unsolved runs counted at the full budget.
pub fn censored_mean(episodes_to_solve: &[Option<usize>], max_episodes: usize) -> f64 {
    let total: usize = episodes_to_solve
        .iter()
        .map(|e| e.unwrap_or(max_episodes))
        .sum();
    total as f64 / episodes_to_solve.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_seed: u64,
    /// `None` when the run never met the stopping rule.
    pub episodes_to_solve: Option<usize>,
    pub task_returns: Vec<f64>,
    pub rolling_means: Vec<f64>,
    pub best_rolling_mean: Option<f64>,
    /// Set when the run was cut short by a non-finite update.
    pub abort: Option<String>,
    pub wall_time: f64,
}

impl RunResult {
    pub fn solved(&self) -> bool {
        self.episodes_to_solve.is_some()
    }
}

/// Trains one network until it solves the task or exhausts the budget,
/// calling `observe` after every episode.
pub fn train_run_with<F>(
    config: &ExperimentConfig,
    run_seed: u64,
    mut observe: F,
) -> Result<RunResult, TrainError>
where
    F: FnMut(&EpisodeOutcome),
{
    let started = Instant::now();
    let mut run = Run::new(config, run_seed)?;
    let mut tracker = SolveTracker::new(config.window, config.solve_threshold);
    let mut task_returns = Vec::new();
    let mut rolling_means = Vec::new();
    let mut abort = None;

    while run.episodes_done() < config.max_episodes {
        match run.run_episode() {
            Ok(outcome) => {
                task_returns.push(outcome.task_return);
                rolling_means.push(tracker.push(outcome.task_return));
                observe(&outcome);
                if tracker.solved_at().is_some() {
                    break;
                }
            }
            Err(TrainError::Network(err @ NetworkError::Neuron { .. })) => {
                abort = Some(format!("episode {}: {err}", run.episodes_done()));
                break;
            }
            Err(err) => return Err(err),
        }
    }

    Ok(RunResult {
        run_seed,
        episodes_to_solve: if abort.is_some() {
            None
        } else {
            tracker.solved_at()
        },
        task_returns,
        rolling_means,
        best_rolling_mean: tracker.best_full_window(),
        abort,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

pub fn train_run(config: &ExperimentConfig, run_seed: u64) -> Result<RunResult, TrainError> {
    train_run_with(config, run_seed, |_| {})
}

/// Aggregate of `num_runs` independent runs of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub scheme: SchemeVariant,
    pub num_layers: usize,
    pub layer_width: usize,
    pub base_seed: u64,
    pub max_episodes: usize,
    pub runs: Vec<RunResult>,
    pub mean_episodes_to_solve: f64,
    pub solved: usize,
    /// Mean return per episode index over the runs that reached it.
    pub mean_curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub runs: usize,
    pub mean_return: f64,
}

impl ExperimentSummary {
    pub fn from_runs(config: &ExperimentConfig, runs: Vec<RunResult>) -> Self {
        let solves: Vec<_> = runs.iter().map(|r| r.episodes_to_solve).collect();
        let longest = runs.iter().map(|r| r.task_returns.len()).max().unwrap_or(0);
        let mean_curve = (0..longest)
            .map(|e| {
                let at: Vec<f64> = runs
                    .iter()
                    .filter_map(|r| r.task_returns.get(e).copied())
                    .collect();
                CurvePoint {
                    runs: at.len(),
                    mean_return: at.iter().sum::<f64>() / at.len() as f64,
                }
            })
            .collect();
        Self {
            scheme: config.scheme,
            num_layers: config.num_layers,
            layer_width: config.layer_width,
            base_seed: config.base_seed,
            max_episodes: config.max_episodes,
            mean_episodes_to_solve: censored_mean(&solves, config.max_episodes),
            solved: solves.iter().filter(|s| s.is_some()).count(),
            runs,
            mean_curve,
        }
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.run_seed).collect()
    }
}

/// Seeds `base_seed + 0 .. base_seed + num_runs`.
pub fn run_seeds(config: &ExperimentConfig) -> Vec<u64> {
    (0..config.num_runs as u64)
        .map(|i| config.base_seed.wrapping_add(i))
        .collect()
}

/// Runs every seed of the experiment in parallel and aggregates them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary, TrainError> {
    config.validate()?;
    let runs = run_seeds(config)
        .into_par_iter()
        .map(|seed| train_run(config, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentSummary::from_runs(config, runs))
}
