//! A single neuron agent: a Bernoulli firing policy computed by a small
//! tanh network, trained with REINFORCE on its own reward stream.

use rand::Rng;
use thiserror::Error;

use crate::seeding::StreamRng;

#[derive(Debug, Error, PartialEq)]
pub enum NeuronError {
    #[error("input has {got} entries, neuron expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot compute returns of an empty reward sequence")]
    EmptyRewards,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectory sequences disagree in length: {inputs} inputs, {samples} samples, {rewards} rewards")]
    RaggedTrajectory {
        inputs: usize,
        samples: usize,
        rewards: usize,
    },
    #[error("non-finite policy gradient ({what})")]
    Diverged { what: &'static str },
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without cancellation for large |x|.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Outcome of one firing decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    pub fired: bool,
    pub log_prob: f64,
    pub firing_probability: f64,
}

impl ActionSample {
    pub fn action(&self) -> u8 {
        self.fired as u8
    }
}

/// Parameters of one neuron's policy: `p = sigmoid(w_out . tanh(W_in x + b_in) + b_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronPolicy {
    input_dim: usize,
    hidden_dim: usize,
    /// Row-major, `hidden_dim` rows of `input_dim`.
    pub weights_in: Vec<f64>,
    pub bias_in: Vec<f64>,
    pub weights_out: Vec<f64>,
    pub bias_out: f64,
}

/// Gradient with the same layout as [`NeuronPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub weights_in: Vec<f64>,
    pub bias_in: Vec<f64>,
    pub weights_out: Vec<f64>,
    pub bias_out: f64,
}

impl PolicyGradient {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            weights_in: vec![0.0; input_dim * hidden_dim],
            bias_in: vec![0.0; hidden_dim],
            weights_out: vec![0.0; hidden_dim],
            bias_out: 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights_in
            .iter()
            .chain(&self.bias_in)
            .chain(&self.weights_out)
            .chain(std::iter::once(&self.bias_out))
            .copied()
    }

    fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }
}

impl NeuronPolicy {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            weights_in: vec![0.0; input_dim * hidden_dim],
            bias_in: vec![0.0; hidden_dim],
            weights_out: vec![0.0; hidden_dim],
            bias_out: 0.0,
        }
    }

    /// Weights uniform in ±1/sqrt(fan_in) per layer, biases zero.
    pub fn random(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let mut policy = Self::zeros(input_dim, hidden_dim);
        let bound_in = 1.0 / (input_dim as f64).sqrt();
        for w in &mut policy.weights_in {
            *w = rng.gen_range(-bound_in..=bound_in);
        }
        let bound_out = 1.0 / (hidden_dim as f64).sqrt();
        for w in &mut policy.weights_out {
            *w = rng.gen_range(-bound_out..=bound_out);
        }
        policy
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn num_parameters(&self) -> usize {
        self.hidden_dim * (self.input_dim + 2) + 1
    }

    /// Flat view over every parameter, in the same order as [`PolicyGradient::iter`].
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights_in
            .iter()
            .chain(&self.bias_in)
            .chain(&self.weights_out)
            .chain(std::iter::once(&self.bias_out))
            .copied()
    }

    pub fn parameter_mut(&mut self, index: usize) -> &mut f64 {
        let n_in = self.weights_in.len();
        let h = self.hidden_dim;
        match index {
            i if i < n_in => &mut self.weights_in[i],
            i if i < n_in + h => &mut self.bias_in[i - n_in],
            i if i < n_in + 2 * h => &mut self.weights_out[i - n_in - h],
            i if i == n_in + 2 * h => &mut self.bias_out,
            i => panic!("parameter index {i} out of range"),
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NeuronError> {
        if input.len() != self.input_dim {
            return Err(NeuronError::DimensionMismatch {
                expected: self.input_dim,
                got: input.len(),
            });
        }
        Ok(())
    }

    fn hidden_into(&self, input: &[f64], hidden: &mut Vec<f64>) {
        hidden.clear();
        hidden.extend(
            self.weights_in
                .chunks_exact(self.input_dim.max(1))
                .take(self.hidden_dim)
                .zip(&self.bias_in)
                .map(|(row, b)| {
                    let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
                    (z + b).tanh()
                }),
        );
    }

    fn logit_from_hidden(&self, hidden: &[f64]) -> f64 {
        hidden
            .iter()
            .zip(&self.weights_out)
            .map(|(h, w)| h * w)
            .sum::<f64>()
            + self.bias_out
    }

    pub fn logit(&self, input: &[f64]) -> Result<f64, NeuronError> {
        self.check_input(input)?;
        let mut hidden = Vec::with_capacity(self.hidden_dim);
        self.hidden_into(input, &mut hidden);
        Ok(self.logit_from_hidden(&hidden))
    }

    pub fn firing_probability(&self, input: &[f64]) -> Result<f64, NeuronError> {
        self.logit(input).map(sigmoid)
    }

    /// `ln pi(action | input)`.
    pub fn log_prob(&self, input: &[f64], fired: bool) -> Result<f64, NeuronError> {
        let logit = self.logit(input)?;
        Ok(if fired {
            log_sigmoid(logit)
        } else {
            log_sigmoid(-logit)
        })
    }

    /// Samples a firing decision from this policy.
    pub fn act(&self, input: &[f64], rng: &mut impl Rng) -> Result<ActionSample, NeuronError> {
        let logit = self.logit(input)?;
        let p = sigmoid(logit);
        let fired = rng.gen::<f64>() < p;
        let log_prob = if fired {
            log_sigmoid(logit)
        } else {
            log_sigmoid(-logit)
        };
        Ok(ActionSample {
            fired,
            log_prob,
            firing_probability: p,
        })
    }

    /// `weight * grad ln pi(action | input)` added into `grad`, by backprop.
    fn accumulate_log_prob_gradient(
        &self,
        input: &[f64],
        fired: bool,
        weight: f64,
        hidden: &mut Vec<f64>,
        grad: &mut PolicyGradient,
    ) {
        self.hidden_into(input, hidden);
        let p = sigmoid(self.logit_from_hidden(hidden));
        // d ln pi / d logit = a - p for a Bernoulli(sigmoid(logit)) policy.
        let d_logit = weight * (f64::from(u8::from(fired)) - p);
        grad.bias_out += d_logit;
        for (j, &h) in hidden.iter().enumerate() {
            grad.weights_out[j] += d_logit * h;
            let d_pre = d_logit * self.weights_out[j] * (1.0 - h * h);
            grad.bias_in[j] += d_pre;
            let row = &mut grad.weights_in[j * self.input_dim..(j + 1) * self.input_dim];
            for (g, x) in row.iter_mut().zip(input) {
                *g += d_pre * x;
            }
        }
    }

    /// Gradient of `ln pi(action | input)` with respect to every parameter.
    pub fn log_prob_gradient(
        &self,
        input: &[f64],
        fired: bool,
    ) -> Result<PolicyGradient, NeuronError> {
        self.check_input(input)?;
        let mut grad = PolicyGradient::zeros(self.input_dim, self.hidden_dim);
        let mut hidden = Vec::with_capacity(self.hidden_dim);
        self.accumulate_log_prob_gradient(input, fired, 1.0, &mut hidden, &mut grad);
        Ok(grad)
    }

    /// `sum_t weights[t] * grad ln pi(a_t | x_t)`.
    pub fn weighted_score(
        &self,
        inputs: &[Vec<f64>],
        actions: &[bool],
        weights: &[f64],
    ) -> Result<PolicyGradient, NeuronError> {
        let mut grad = PolicyGradient::zeros(self.input_dim, self.hidden_dim);
        let mut hidden = Vec::with_capacity(self.hidden_dim);
        for ((input, &fired), &w) in inputs.iter().zip(actions).zip(weights) {
            self.check_input(input)?;
            if w != 0.0 {
                self.accumulate_log_prob_gradient(input, fired, w, &mut hidden, &mut grad);
            }
        }
        Ok(grad)
    }

    fn apply(&mut self, grad: &PolicyGradient, step_size: f64) {
        let pairs = self
            .weights_in
            .iter_mut()
            .zip(&grad.weights_in)
            .chain(self.bias_in.iter_mut().zip(&grad.bias_in))
            .chain(self.weights_out.iter_mut().zip(&grad.weights_out))
            .chain(std::iter::once((&mut self.bias_out, &grad.bias_out)));
        for (p, g) in pairs {
            *p += step_size * g;
        }
    }

    /// One REINFORCE ascent step on a completed episode:
    /// `theta += step_size * sum_t Ghat_t grad ln pi(a_t | x_t)` where `Ghat` are
    /// the per-episode standardized discounted returns.
    pub fn update(
        &mut self,
        trajectory: &NeuronTrajectory,
        gamma: f64,
        step_size: f64,
    ) -> Result<(), NeuronError> {
        trajectory.validate()?;
        let returns = standardize(&discounted_returns(&trajectory.rewards, gamma)?);
        let actions: Vec<bool> = trajectory.samples.iter().map(|s| s.fired).collect();
        let grad = self.weighted_score(&trajectory.inputs, &actions, &returns)?;
        if !grad.is_finite() {
            return Err(NeuronError::Diverged { what: "gradient" });
        }
        self.apply(&grad, step_size);
        if !self.parameters().all(f64::is_finite) {
            return Err(NeuronError::Diverged { what: "parameters" });
        }
        Ok(())
    }
}

/// `G_t = r_t + gamma * G_{t+1}`, with `G_T = r_T`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>, NeuronError> {
    if rewards.is_empty() {
        return Err(NeuronError::EmptyRewards);
    }
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in returns.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    Ok(returns)
}

/// Subtracts the mean and divides by the population standard deviation,
/// skipping the division when the deviation is below 1e-8.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        values.iter().map(|v| v - mean).collect()
    } else {
        values.iter().map(|v| (v - mean) / std).collect()
    }
}

/// Experience collected by one neuron over one episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeuronTrajectory {
    pub inputs: Vec<Vec<f64>>,
    pub samples: Vec<ActionSample>,
    pub rewards: Vec<f64>,
}

impl NeuronTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn clear(&mut self) {
        self.inputs.clear();
        self.samples.clear();
        self.rewards.clear();
    }

    fn validate(&self) -> Result<(), NeuronError> {
        if self.samples.is_empty() {
            return Err(NeuronError::EmptyTrajectory);
        }
        if self.inputs.len() != self.samples.len() || self.rewards.len() != self.samples.len() {
            return Err(NeuronError::RaggedTrajectory {
                inputs: self.inputs.len(),
                samples: self.samples.len(),
                rewards: self.rewards.len(),
            });
        }
        Ok(())
    }
}

/// A neuron together with its private random stream and episode buffer.
#[derive(Debug, Clone)]
pub struct NeuronAgent {
    pub id: usize,
    pub policy: NeuronPolicy,
    rng: StreamRng,
    trajectory: NeuronTrajectory,
}

impl NeuronAgent {
    pub fn new(id: usize, policy: NeuronPolicy, rng: StreamRng) -> Self {
        Self {
            id,
            policy,
            rng,
            trajectory: NeuronTrajectory::default(),
        }
    }

    /// Samples an action from the neuron's own stream and buffers the step.
    pub fn act(&mut self, input: &[f64]) -> Result<ActionSample, NeuronError> {
        let sample = self.policy.act(input, &mut self.rng)?;
        self.trajectory.inputs.push(input.to_vec());
        self.trajectory.samples.push(sample);
        Ok(sample)
    }

    pub fn trajectory(&self) -> &NeuronTrajectory {
        &self.trajectory
    }

    /// Attaches the finalized per-step rewards to the buffered episode, runs
    /// the policy-gradient step, and empties the buffer.
    pub fn learn(
        &mut self,
        rewards: Vec<f64>,
        gamma: f64,
        step_size: f64,
    ) -> Result<(), NeuronError> {
        self.trajectory.rewards = rewards;
        let result = self.policy.update(&self.trajectory, gamma, step_size);
        self.trajectory.clear();
        result
    }

    pub fn discard_episode(&mut self) {
        self.trajectory.clear();
    }
}
