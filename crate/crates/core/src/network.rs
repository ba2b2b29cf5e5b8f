//! Layered, feed-forward populations of neuron agents.
//!
//! Layer 0 sees the environment observation; every later layer sees the
//! binary firing vector of the layer before it. The final layer is a single
//! output neuron whose action drives the environment.

use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::environment::{Action, Observation};
use crate::neuron::{ActionSample, NeuronAgent, NeuronError, NeuronPolicy};
use crate::seeding::{firing_stream, init_stream};

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("observation has {got} entries, input layer expects {expected}")]
    ObservationDim { expected: usize, got: usize },
    #[error("neuron {id}: {source}")]
    Neuron { id: usize, source: NeuronError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTopology {
    pub observation_dim: usize,
    /// Widths of every layer; the last entry is always 1 (the output neuron).
    pub layer_widths: Vec<usize>,
    pub hidden_dim: usize,
}

impl NetworkTopology {
    pub fn new(
        observation_dim: usize,
        layer_widths: Vec<usize>,
        hidden_dim: usize,
    ) -> Result<Self, NetworkError> {
        if observation_dim == 0 || hidden_dim == 0 {
            return Err(NetworkError::Topology(
                "zero observation or hidden size".into(),
            ));
        }
        match layer_widths.last() {
            Some(1) => {}
            _ => {
                return Err(NetworkError::Topology(
                    "last layer must be a single output neuron".into(),
                ))
            }
        }
        if layer_widths.contains(&0) {
            return Err(NetworkError::Topology("empty layer".into()));
        }
        Ok(Self {
            observation_dim,
            layer_widths,
            hidden_dim,
        })
    }

    pub fn from_config(
        config: &ExperimentConfig,
        observation_dim: usize,
    ) -> Result<Self, NetworkError> {
        if config.num_layers == 0 || config.layer_width == 0 {
            return Err(NetworkError::Topology(
                "num_layers and layer_width must be positive".into(),
            ));
        }
        Self::new(observation_dim, config.layer_widths(), config.hidden_dim)
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len()
    }

    pub fn num_neurons(&self) -> usize {
        self.layer_widths.iter().sum()
    }

    pub fn input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.observation_dim
        } else {
            self.layer_widths[layer - 1]
        }
    }

    /// Flat id of the first neuron in `layer`.
    pub fn layer_offset(&self, layer: usize) -> usize {
        self.layer_widths[..layer].iter().sum()
    }

    /// `(layer, index within layer)` of a flat neuron id.
    pub fn locate(&self, id: usize) -> Option<(usize, usize)> {
        let mut offset = 0;
        for (layer, &width) in self.layer_widths.iter().enumerate() {
            if id < offset + width {
                return Some((layer, id - offset));
            }
            offset += width;
        }
        None
    }

    pub fn output_id(&self) -> usize {
        self.num_neurons() - 1
    }
}

/// Firing decisions of one layer at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivity {
    pub samples: Vec<ActionSample>,
}

impl LayerActivity {
    pub fn fired(&self) -> impl Iterator<Item = bool> + '_ {
        self.samples.iter().map(|s| s.fired)
    }

    /// The 0/1 vector downstream neurons receive.
    pub fn as_input(&self) -> Vec<f64> {
        self.fired().map(|f| if f { 1.0 } else { 0.0 }).collect()
    }

    pub fn num_firing(&self) -> usize {
        self.fired().filter(|&f| f).count()
    }
}

/// Activity of the whole network at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationFrame {
    pub step_index: usize,
    pub layers: Vec<LayerActivity>,
    pub env_action: Action,
}

impl ActivationFrame {
    pub fn output(&self) -> &ActionSample {
        &self.layers.last().expect("frame has layers").samples[0]
    }

    /// Action of neuron `index` in `layer`.
    pub fn fired(&self, layer: usize, index: usize) -> bool {
        self.layers[layer].samples[index].fired
    }
}

/// The environment action encoded by the output neuron: fire pushes right.
pub fn env_action_of(frame: &ActivationFrame) -> Action {
    Action::from_bit(frame.output().fired)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeHistory {
    pub frames: Vec<ActivationFrame>,
    pub task_rewards: Vec<f64>,
}

impl EpisodeHistory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn task_return(&self) -> f64 {
        self.task_rewards.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    topology: NetworkTopology,
    layers: Vec<Vec<NeuronAgent>>,
    history: EpisodeHistory,
}

impl Network {
    /// Builds a network with every neuron initialized from its own stream.
    pub fn build(topology: NetworkTopology, run_seed: u64) -> Self {
        let mut id = 0;
        let layers = topology
            .layer_widths
            .iter()
            .enumerate()
            .map(|(layer, &width)| {
                (0..width)
                    .map(|_| {
                        let policy = NeuronPolicy::random(
                            topology.input_dim(layer),
                            topology.hidden_dim,
                            &mut init_stream(run_seed, id),
                        );
                        let agent = NeuronAgent::new(id, policy, firing_stream(run_seed, id));
                        id += 1;
                        agent
                    })
                    .collect()
            })
            .collect();
        Self {
            topology,
            layers,
            history: EpisodeHistory::default(),
        }
    }

    pub fn from_config(
        config: &ExperimentConfig,
        observation_dim: usize,
        run_seed: u64,
    ) -> Result<Self, NetworkError> {
        Ok(Self::build(
            NetworkTopology::from_config(config, observation_dim)?,
            run_seed,
        ))
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn num_neurons(&self) -> usize {
        self.topology.num_neurons()
    }

    pub fn layers(&self) -> &[Vec<NeuronAgent>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Vec<NeuronAgent>] {
        &mut self.layers
    }

    pub fn neurons(&self) -> impl Iterator<Item = &NeuronAgent> {
        self.layers.iter().flatten()
    }

    pub fn neurons_mut(&mut self) -> impl Iterator<Item = &mut NeuronAgent> {
        self.layers.iter_mut().flatten()
    }

    pub fn history(&self) -> &EpisodeHistory {
        &self.history
    }

    /// Starts a fresh episode history, dropping any buffered experience.
    pub fn begin_episode(&mut self) {
        self.history = EpisodeHistory::default();
        for agent in self.neurons_mut() {
            agent.discard_episode();
        }
    }

    /// Propagates one observation through every layer and records the frame.
    pub fn forward(&mut self, observation: &Observation) -> Result<&ActivationFrame, NetworkError> {
        if observation.dim() != self.topology.observation_dim {
            return Err(NetworkError::ObservationDim {
                expected: self.topology.observation_dim,
                got: observation.dim(),
            });
        }
        let mut input = observation.values.clone();
        let mut activity = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let samples = layer
                .iter_mut()
                .map(|agent| {
                    agent.act(&input).map_err(|source| NetworkError::Neuron {
                        id: agent.id,
                        source,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let layer_activity = LayerActivity { samples };
            input = layer_activity.as_input();
            activity.push(layer_activity);
        }
        let mut frame = ActivationFrame {
            step_index: self.history.frames.len(),
            layers: activity,
            env_action: Action::Left,
        };
        frame.env_action = env_action_of(&frame);
        self.history.frames.push(frame);
        Ok(self.history.frames.last().expect("just pushed"))
    }

    /// Records the environment reward that followed the latest frame.
    pub fn record_task_reward(&mut self, reward: f64) {
        debug_assert_eq!(
            self.history.task_rewards.len() + 1,
            self.history.frames.len()
        );
        self.history.task_rewards.push(reward);
    }

    pub fn take_history(&mut self) -> EpisodeHistory {
        std::mem::take(&mut self.history)
    }

    /// Hands each neuron its per-step rewards (indexed by flat id) and runs
    /// every policy-gradient update.
    pub fn learn(
        &mut self,
        rewards_by_neuron: Vec<Vec<f64>>,
        gamma: f64,
        step_size: f64,
    ) -> Result<(), NetworkError> {
        debug_assert_eq!(rewards_by_neuron.len(), self.num_neurons());
        let mut first_error = None;
        for (agent, rewards) in self.layers.iter_mut().flatten().zip(rewards_by_neuron) {
            if let Err(source) = agent.learn(rewards, gamma, step_size) {
                first_error.get_or_insert(NetworkError::Neuron {
                    id: agent.id,
                    source,
                });
            }
        }
        first_error.map_or(Ok(()), Err)
    }
}
