//! Per-neuron reward signals.
//!
//! Each neuron's reward at a step is a weighted sum of five components: the
//! broadcast task reward and four local signals (activity, sparsity,
//! prediction, activity trace). The active reward scheme decides which
//! components count. Rewards are finalized once an episode ends because the
//! prediction signal looks one step ahead.

use std::io::Write;

use crate::config::{ExperimentConfig, SchemeVariant, TaskRewardMode};
use crate::network::{EpisodeHistory, NetworkTopology};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub task: f64,
    pub activity: f64,
    pub sparsity: f64,
    pub prediction: f64,
    pub trace: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            task: 1.0,
            activity: 1.0,
            sparsity: 1.0,
            prediction: 1.0,
            trace: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewardScheme {
    pub variant: SchemeVariant,
    pub switch_episode: usize,
}

impl RewardScheme {
    /// Which components count during episode `episode_index` (0-based).
    pub fn mask(&self, episode_index: usize) -> ComponentMask {
        match self.variant {
            SchemeVariant::Task => ComponentMask::TASK_ONLY,
            SchemeVariant::All => ComponentMask::ALL,
            SchemeVariant::BioThenAll if episode_index < self.switch_episode => {
                ComponentMask::BIO_ONLY
            }
            SchemeVariant::BioThenAll => ComponentMask::ALL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentMask {
    pub task: bool,
    pub biological: bool,
}

impl ComponentMask {
    pub const TASK_ONLY: Self = Self {
        task: true,
        biological: false,
    };
    pub const BIO_ONLY: Self = Self {
        task: false,
        biological: true,
    };
    pub const ALL: Self = Self {
        task: true,
        biological: true,
    };
}

/// The five raw reward components of one neuron at one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardComponents {
    pub task: f64,
    pub activity: f64,
    pub sparsity: f64,
    pub prediction: f64,
    pub trace: f64,
}

/// Weighted sum of the components selected by `mask`.
pub fn assemble(mask: ComponentMask, weights: &RewardWeights, c: &RewardComponents) -> f64 {
    let gate = |on: bool, w: f64| if on { w } else { 0.0 };
    let bio = mask.biological;
    gate(mask.task, weights.task) * c.task
        + gate(bio, weights.activity) * c.activity
        + gate(bio, weights.sparsity) * c.sparsity
        + gate(bio, weights.prediction) * c.prediction
        + gate(bio, weights.trace) * c.trace
}

/// Every neuron receives the environment reward unchanged.
pub fn task_reward(env_reward: f64, num_neurons: usize) -> Vec<f64> {
    vec![env_reward; num_neurons]
}

/// +1 for firing, -1 for staying silent.
pub fn activity_reward(fired: bool) -> f64 {
    if fired {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityBand {
    pub low: f64,
    pub high: f64,
    pub penalize_underactive: bool,
}

impl Default for SparsityBand {
    fn default() -> Self {
        Self {
            low: 0.1,
            high: 0.4,
            penalize_underactive: true,
        }
    }
}

/// Rewards for one layer given the fraction `f` of it that fired.
///
/// In band: firing neurons +1, silent 0. Over-active: firing neurons -1.
/// Under-active: firing neurons +1, silent neurons -1 (or 0 when
/// under-activity penalties are disabled).
pub fn sparsity_reward(layer: &[bool], band: &SparsityBand) -> Vec<f64> {
    let fraction = layer.iter().filter(|&&f| f).count() as f64 / layer.len() as f64;
    layer
        .iter()
        .map(|&fired| sparsity_component(fired, fraction, band))
        .collect()
}

fn sparsity_component(fired: bool, fraction: f64, band: &SparsityBand) -> f64 {
    if fraction > band.high {
        if fired {
            -1.0
        } else {
            0.0
        }
    } else if fraction < band.low {
        match (fired, band.penalize_underactive) {
            (true, _) => 1.0,
            (false, true) => -1.0,
            (false, false) => 0.0,
        }
    } else if fired {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RewardError {
    #[error("step {step} out of range for an episode of {len} steps")]
    StepOutOfRange { step: usize, len: usize },
    #[error("neuron {0} does not exist")]
    UnknownNeuron(usize),
}

/// Mean agreement (+1 match, -1 mismatch) between a neuron's action at `step`
/// and each postsynaptic neuron's action at `step + 1`. Zero for the output
/// neuron and on the final step.
pub fn prediction_reward(
    history: &EpisodeHistory,
    topology: &NetworkTopology,
    neuron: usize,
    step: usize,
) -> Result<f64, RewardError> {
    if step >= history.len() {
        return Err(RewardError::StepOutOfRange {
            step,
            len: history.len(),
        });
    }
    let (layer, index) = topology
        .locate(neuron)
        .ok_or(RewardError::UnknownNeuron(neuron))?;
    if layer + 1 == topology.num_layers() || step + 1 == history.len() {
        return Ok(0.0);
    }
    let own = history.frames[step].fired(layer, index);
    let next = &history.frames[step + 1].layers[layer + 1];
    Ok(agreement(own, next.fired(), next.samples.len()))
}

fn agreement(own: bool, downstream: impl Iterator<Item = bool>, n: usize) -> f64 {
    let matches = downstream.filter(|&d| d == own).count() as f64;
    (2.0 * matches - n as f64) / n as f64
}

/// Exponential moving average of every neuron's firing.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityTraceState {
    pub traces: Vec<f64>,
    pub decay: f64,
}

impl ActivityTraceState {
    pub fn new(num_neurons: usize, initial: f64, decay: f64) -> Self {
        Self {
            traces: vec![initial; num_neurons],
            decay,
        }
    }

    /// `trace <- decay * trace + (1 - decay) * action`; returns the new value.
    pub fn update(&mut self, neuron: usize, fired: bool) -> f64 {
        let a = if fired { 1.0 } else { 0.0 };
        let t = &mut self.traces[neuron];
        *t = self.decay * *t + (1.0 - self.decay) * a;
        *t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for TraceThresholds {
    fn default() -> Self {
        Self {
            low: 0.1,
            high: 0.9,
        }
    }
}

/// -1 when the trace is outside `[low, high]`, else 0.
pub fn trace_reward(trace: f64, thresholds: &TraceThresholds) -> f64 {
    if trace > thresholds.high || trace < thresholds.low {
        -1.0
    } else {
        0.0
    }
}

/// Everything needed to turn an episode history into rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSettings {
    pub weights: RewardWeights,
    pub scheme: RewardScheme,
    pub task_mode: TaskRewardMode,
    pub sparsity: SparsityBand,
    pub trace: TraceThresholds,
}

impl RewardSettings {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            weights: RewardWeights {
                task: config.weight_task,
                activity: config.weight_activity,
                sparsity: config.weight_sparsity,
                prediction: config.weight_prediction,
                trace: config.weight_trace,
            },
            scheme: RewardScheme {
                variant: config.scheme,
                switch_episode: config.switch_episode,
            },
            task_mode: config.task_reward_mode,
            sparsity: SparsityBand {
                low: config.sparsity_low,
                high: config.sparsity_high,
                penalize_underactive: config.penalize_underactive,
            },
            trace: TraceThresholds {
                low: config.trace_low,
                high: config.trace_high,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    pub components: RewardComponents,
    pub total: f64,
}

/// Per-step, per-neuron reward decomposition for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardLedger {
    pub num_neurons: usize,
    pub mask: ComponentMask,
    pub weights: RewardWeights,
    /// Row-major by step, then neuron id.
    pub entries: Vec<LedgerEntry>,
}

impl RewardLedger {
    pub fn num_steps(&self) -> usize {
        self.entries.len() / self.num_neurons.max(1)
    }

    pub fn entry(&self, step: usize, neuron: usize) -> &LedgerEntry {
        &self.entries[step * self.num_neurons + neuron]
    }

    /// Total reward sequence of one neuron over the episode.
    pub fn totals_for(&self, neuron: usize) -> Vec<f64> {
        self.entries
            .iter()
            .skip(neuron)
            .step_by(self.num_neurons)
            .map(|e| e.total)
            .collect()
    }

    /// Total reward sequences of every neuron, indexed by id.
    pub fn totals_by_neuron(&self) -> Vec<Vec<f64>> {
        (0..self.num_neurons).map(|i| self.totals_for(i)).collect()
    }

    /// Writes one CSV row per (step, neuron) with columns
    /// `run,episode,step,neuron,task,activity,sparsity,prediction,trace,total`.
    pub fn write_csv<W: Write>(
        &self,
        out: &mut csv::Writer<W>,
        run_seed: u64,
        episode: usize,
    ) -> csv::Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            let c = &e.components;
            out.write_record([
                run_seed.to_string(),
                episode.to_string(),
                (i / self.num_neurons).to_string(),
                (i % self.num_neurons).to_string(),
                c.task.to_string(),
                c.activity.to_string(),
                c.sparsity.to_string(),
                c.prediction.to_string(),
                c.trace.to_string(),
                e.total.to_string(),
            ])?;
        }
        Ok(())
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "run",
        "episode",
        "step",
        "neuron",
        "task",
        "activity",
        "sparsity",
        "prediction",
        "trace",
        "total",
    ];
}

/// Computes every component for every neuron and step of a finished episode,
/// advancing the activity traces through the episode.
pub fn compute_ledger(
    history: &EpisodeHistory,
    topology: &NetworkTopology,
    traces: &mut ActivityTraceState,
    settings: &RewardSettings,
    episode_index: usize,
) -> RewardLedger {
    let n = topology.num_neurons();
    let steps = history.len();
    let last_layer = topology.num_layers() - 1;
    let mask = settings.scheme.mask(episode_index);
    let episode_return = history.task_return();
    let mut entries = Vec::with_capacity(n * steps);

    for (t, frame) in history.frames.iter().enumerate() {
        let task = match settings.task_mode {
            TaskRewardMode::PerStep => history.task_rewards[t],
            TaskRewardMode::EpisodeReturn if t + 1 == steps => episode_return,
            TaskRewardMode::EpisodeReturn => 0.0,
        };
        let next = history.frames.get(t + 1);
        for (layer, activity) in frame.layers.iter().enumerate() {
            let fired: Vec<bool> = activity.fired().collect();
            let sparsity = if layer == last_layer {
                vec![0.0; fired.len()]
            } else {
                sparsity_reward(&fired, &settings.sparsity)
            };
            let offset = topology.layer_offset(layer);
            for (index, &own) in fired.iter().enumerate() {
                let prediction = match next {
                    Some(next) if layer < last_layer => {
                        let downstream = &next.layers[layer + 1];
                        agreement(own, downstream.fired(), downstream.samples.len())
                    }
                    _ => 0.0,
                };
                let trace_value = traces.update(offset + index, own);
                let components = RewardComponents {
                    task,
                    activity: activity_reward(own),
                    sparsity: sparsity[index],
                    prediction,
                    trace: trace_reward(trace_value, &settings.trace),
                };
                entries.push(LedgerEntry {
                    total: assemble(mask, &settings.weights, &components),
                    components,
                });
            }
        }
    }

    RewardLedger {
        num_neurons: n,
        mask,
        weights: settings.weights,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Action;
    use crate::network::{ActivationFrame, LayerActivity};
    use crate::neuron::ActionSample;

    fn layer(bits: &[u8]) -> LayerActivity {
        LayerActivity {
            samples: bits
                .iter()
                .map(|&b| ActionSample {
                    fired: b == 1,
                    log_prob: 0.0,
                    firing_probability: 0.5,
                })
                .collect(),
        }
    }

    fn history(frames: &[&[&[u8]]]) -> EpisodeHistory {
        EpisodeHistory {
            frames: frames
                .iter()
                .enumerate()
                .map(|(t, layers)| {
                    let layers: Vec<_> = layers.iter().map(|b| layer(b)).collect();
                    let out = layers.last().unwrap().samples[0].fired;
                    ActivationFrame {
                        step_index: t,
                        layers,
                        env_action: Action::from_bit(out),
                    }
                })
                .collect(),
            task_rewards: vec![1.0; frames.len()],
        }
    }

    #[test]
    fn task_reward_is_broadcast() {
        let r = task_reward(1.0, 51);
        assert_eq!(r.len(), 51);
        assert!(r.iter().all(|&v| v == 1.0));
        assert_eq!(r.iter().sum::<f64>(), 51.0);
        assert!(task_reward(0.0, 5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn activity_signs() {
        assert_eq!(activity_reward(true), 1.0);
        assert_eq!(activity_reward(false), -1.0);
        for a in [false, true] {
            assert_eq!(activity_reward(a), 2.0 * f64::from(u8::from(a)) - 1.0);
        }
    }

    #[test]
    fn sparsity_cases() {
        let band = SparsityBand::default();
        let mut two = [false; 10];
        two[0] = true;
        two[5] = true;
        let r = sparsity_reward(&two, &band);
        assert_eq!(r.iter().filter(|&&v| v == 1.0).count(), 2);
        assert_eq!(r.iter().filter(|&&v| v == 0.0).count(), 8);
        assert_eq!(r[0], 1.0);

        let mut eight = [true; 10];
        eight[3] = false;
        eight[7] = false;
        let r = sparsity_reward(&eight, &band);
        assert_eq!(r[3], 0.0);
        assert_eq!(r.iter().filter(|&&v| v == -1.0).count(), 8);

        assert_eq!(sparsity_reward(&[false; 10], &band), vec![-1.0; 10]);
        let lenient = SparsityBand {
            penalize_underactive: false,
            ..band
        };
        assert_eq!(sparsity_reward(&[false; 10], &lenient), vec![0.0; 10]);
    }

    #[test]
    fn prediction_cases() {
        let topology = NetworkTopology::new(4, vec![1, 10, 1], 2).unwrap();
        let all = history(&[&[&[1], &[0; 10], &[0]], &[&[0], &[1; 10], &[1]]]);
        assert_eq!(prediction_reward(&all, &topology, 0, 0).unwrap(), 1.0);
        let half = history(&[
            &[&[1], &[0; 10], &[0]],
            &[&[0], &[1, 1, 1, 1, 1, 0, 0, 0, 0, 0], &[1]],
        ]);
        assert_eq!(prediction_reward(&half, &topology, 0, 0).unwrap(), 0.0);
        // Output neuron and final step.
        assert_eq!(prediction_reward(&all, &topology, 11, 0).unwrap(), 0.0);
        assert_eq!(prediction_reward(&all, &topology, 0, 1).unwrap(), 0.0);
        assert_eq!(
            prediction_reward(&all, &topology, 0, 2),
            Err(RewardError::StepOutOfRange { step: 2, len: 2 })
        );
        assert_eq!(
            prediction_reward(&all, &topology, 12, 0),
            Err(RewardError::UnknownNeuron(12))
        );
    }

    #[test]
    fn trace_update_cases() {
        let mut state = ActivityTraceState::new(2, 0.5, 0.9);
        assert!((state.update(0, true) - 0.55).abs() < 1e-15);
        state.traces[1] = 0.0;
        assert_eq!(state.update(1, false), 0.0);

        let mut state = ActivityTraceState::new(1, 0.2, 0.9);
        let mut prev = 0.2;
        for _ in 0..500 {
            let t = state.update(0, true);
            assert!(t >= prev && t <= 1.0);
            prev = t;
        }
        assert!(prev > 0.999);
    }

    #[test]
    fn trace_reward_cases() {
        let th = TraceThresholds::default();
        assert_eq!(trace_reward(0.95, &th), -1.0);
        assert_eq!(trace_reward(0.5, &th), 0.0);
        assert_eq!(trace_reward(0.05, &th), -1.0);
    }

    #[test]
    fn scheme_masking() {
        let w = RewardWeights::default();
        let c = RewardComponents {
            task: 1.0,
            activity: 1.0,
            sparsity: 1.0,
            prediction: 1.0,
            trace: 0.0,
        };
        let task = RewardScheme {
            variant: SchemeVariant::Task,
            switch_episode: 1000,
        };
        let all = RewardScheme {
            variant: SchemeVariant::All,
            switch_episode: 1000,
        };
        let bio = RewardScheme {
            variant: SchemeVariant::BioThenAll,
            switch_episode: 1000,
        };
        assert_eq!(assemble(task.mask(0), &w, &c), 1.0);
        assert_eq!(assemble(all.mask(0), &w, &c), 4.0);
        assert_eq!(bio.mask(999), ComponentMask::BIO_ONLY);
        assert_eq!(assemble(bio.mask(999), &w, &c), 3.0);
        assert_eq!(bio.mask(1000), ComponentMask::ALL);
        assert_eq!(assemble(bio.mask(1000), &w, &c), 4.0);
    }

    #[test]
    fn ledger_closes_and_task_scheme_passes_env_reward() {
        let topology = NetworkTopology::new(4, vec![3, 3, 1], 2).unwrap();
        let h = history(&[
            &[&[1, 0, 0], &[1, 1, 0], &[1]],
            &[&[0, 0, 0], &[1, 1, 1], &[0]],
            &[&[1, 1, 1], &[0, 1, 0], &[1]],
        ]);
        let mut settings = RewardSettings::from_config(&ExperimentConfig::default());
        settings.weights.sparsity = 0.5;
        let mut traces = ActivityTraceState::new(7, 0.5, 0.9);
        let ledger = compute_ledger(&h, &topology, &mut traces, &settings, 0);
        assert_eq!(ledger.num_steps(), 3);
        for e in &ledger.entries {
            let c = e.components;
            let w = &settings.weights;
            let recomputed = w.task * c.task
                + w.activity * c.activity
                + 0.5 * c.sparsity
                + w.prediction * c.prediction
                + w.trace * c.trace;
            assert!((e.total - recomputed).abs() < 1e-12);
        }
        // Output neuron never gets sparsity or prediction.
        for t in 0..3 {
            let out = ledger.entry(t, 6).components;
            assert_eq!((out.sparsity, out.prediction), (0.0, 0.0));
        }

        settings.scheme.variant = SchemeVariant::Task;
        let ledger = compute_ledger(&h, &topology, &mut traces, &settings, 0);
        assert!(ledger.entries.iter().all(|e| e.total == 1.0));
        assert_eq!(ledger.totals_for(2), vec![1.0; 3]);
    }

    #[test]
    fn episode_return_mode_pays_at_the_end() {
        let topology = NetworkTopology::new(4, vec![1, 1], 2).unwrap();
        let h = history(&[&[&[1], &[0]], &[&[0], &[1]], &[&[1], &[1]]]);
        let mut settings = RewardSettings::from_config(&ExperimentConfig::default());
        settings.task_mode = TaskRewardMode::EpisodeReturn;
        let mut traces = ActivityTraceState::new(2, 0.5, 0.9);
        let ledger = compute_ledger(&h, &topology, &mut traces, &settings, 0);
        let task: Vec<f64> = (0..3).map(|t| ledger.entry(t, 1).components.task).collect();
        assert_eq!(task, vec![0.0, 0.0, 3.0]);
    }
}
