//! Networks of neurons that are each an independent reinforcement-learning
//! agent.
//!
//! Every neuron owns a stochastic fire/silent policy and learns with
//! REINFORCE from its own reward stream. Layers of such neurons are wired
//! feed-forward; the last neuron's spike pushes a cart-pole right, silence
//! pushes it left. Neurons can be rewarded by the task alone, by four local
//! signals (activity, sparsity, prediction of downstream activity, and an
//! activity trace), or by both.

pub mod archive;
pub mod cli;
pub mod config;
pub mod environment;
pub mod network;
pub mod neuron;
pub mod rewards;
pub mod seeding;
pub mod trainer;

pub use config::{ExperimentConfig, SchemeVariant};
pub use environment::{Action, CartPole, EnvState, Environment, Observation};
pub use network::{ActivationFrame, EpisodeHistory, Network, NetworkTopology};
pub use neuron::{ActionSample, NeuronAgent, NeuronPolicy, NeuronTrajectory};
pub use rewards::{RewardLedger, RewardSettings};
pub use trainer::{run_experiment, train_run, ExperimentSummary, RunResult};
