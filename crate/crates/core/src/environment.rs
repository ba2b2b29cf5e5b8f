//! Episodic control environments.
//!
//! Only cart-pole ships. The dynamics are the classic formulation integrated
//! with explicit Euler steps, so a trajectory depends only on the reset stream
//! and the action sequence.

use rand::{Rng, RngCore};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("step called on a terminal environment; reset first")]
    StepAfterTerminal,
    #[error("step called before the first reset")]
    NotReset,
}

/// Discrete push applied to the cart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Left,
    Right,
}

impl Action {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Action::Right
        } else {
            Action::Left
        }
    }

    pub fn as_bit(self) -> bool {
        matches!(self, Action::Right)
    }
}

/// Observation handed to the input layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
}

impl Observation {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
    /// Number of steps taken in the episode, including this one.
    pub step_index: usize,
}

/// Reset/step interface consumed by the trainer.
pub trait Environment {
    fn observation_dim(&self) -> usize;

    /// Upper bound on the return of a single episode.
    fn max_return(&self) -> f64;

    fn reset(&mut self, rng: &mut dyn RngCore) -> Observation;

    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError>;
}

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
/// Half the pole length.
pub const POLE_HALF_LENGTH: f64 = 0.5;
pub const FORCE_MAGNITUDE: f64 = 10.0;
pub const TIME_STEP: f64 = 0.02;
pub const POSITION_LIMIT: f64 = 2.4;
/// Twelve degrees.
pub const ANGLE_LIMIT: f64 = 0.2094395;
pub const MAX_EPISODE_STEPS: usize = 500;
pub const RESET_BOUND: f64 = 0.05;
const VELOCITY_SCALE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnvState {
    pub cart_position: f64,
    pub cart_velocity: f64,
    pub pole_angle: f64,
    pub pole_angular_velocity: f64,
}

impl EnvState {
    pub fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        Self {
            cart_position: x,
            cart_velocity: x_dot,
            pole_angle: theta,
            pole_angular_velocity: theta_dot,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [
            self.cart_position,
            self.cart_velocity,
            self.pole_angle,
            self.pole_angular_velocity,
        ]
    }

    pub fn is_failure(&self) -> bool {
        self.cart_position.abs() > POSITION_LIMIT || self.pole_angle.abs() > ANGLE_LIMIT
    }

    /// One Euler step of the cart-pole equations of motion.
    pub fn advance(&self, action: Action) -> EnvState {
        let force = match action {
            Action::Right => FORCE_MAGNITUDE,
            Action::Left => -FORCE_MAGNITUDE,
        };
        let (sin, cos) = self.pole_angle.sin_cos();
        let pole_mass_length = POLE_MASS * POLE_HALF_LENGTH;
        let temp = (force
            + pole_mass_length * self.pole_angular_velocity * self.pole_angular_velocity * sin)
            / TOTAL_MASS;
        let angular_acc = (GRAVITY * sin - cos * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
        let linear_acc = temp - pole_mass_length * angular_acc * cos / TOTAL_MASS;

        EnvState {
            cart_position: self.cart_position + TIME_STEP * self.cart_velocity,
            cart_velocity: self.cart_velocity + TIME_STEP * linear_acc,
            pole_angle: self.pole_angle + TIME_STEP * self.pole_angular_velocity,
            pole_angular_velocity: self.pole_angular_velocity + TIME_STEP * angular_acc,
        }
    }
}

/// Scales a state so every coordinate is O(1): bounded coordinates by their
/// failure limits, velocities by 3.
pub fn normalize(state: &EnvState) -> Observation {
    Observation {
        values: vec![
            state.cart_position / POSITION_LIMIT,
            state.cart_velocity / VELOCITY_SCALE,
            state.pole_angle / ANGLE_LIMIT,
            state.pole_angular_velocity / VELOCITY_SCALE,
        ],
    }
}

#[derive(Debug, Clone)]
pub struct CartPole {
    state: EnvState,
    steps: usize,
    terminal: bool,
    started: bool,
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl CartPole {
    pub fn new() -> Self {
        Self {
            state: EnvState::default(),
            steps: 0,
            terminal: false,
            started: false,
        }
    }

    /// Places the environment in an arbitrary state, as if just reset there.
    pub fn with_state(state: EnvState) -> Self {
        Self {
            state,
            steps: 0,
            terminal: false,
            started: true,
        }
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }
}

impl Environment for CartPole {
    fn observation_dim(&self) -> usize {
        4
    }

    fn max_return(&self) -> f64 {
        MAX_EPISODE_STEPS as f64
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Observation {
        let mut draw = || rng.gen_range(-RESET_BOUND..=RESET_BOUND);
        self.state = EnvState::new(draw(), draw(), draw(), draw());
        self.steps = 0;
        self.terminal = false;
        self.started = true;
        normalize(&self.state)
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.terminal {
            return Err(EnvError::StepAfterTerminal);
        }
        self.state = self.state.advance(action);
        self.steps += 1;
        self.terminal = self.state.is_failure() || self.steps >= MAX_EPISODE_STEPS;
        Ok(StepOutcome {
            observation: normalize(&self.state),
            reward: 1.0,
            terminal: self.terminal,
            step_index: self.steps,
        })
    }
}
