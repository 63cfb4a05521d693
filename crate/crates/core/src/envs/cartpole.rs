//! Cart-pole balancing with the classic explicit-Euler dynamics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StepResult;
use crate::error::{Error, Result};

pub const PUSH_LEFT: usize = 0;
pub const PUSH_RIGHT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half of the pole length, in metres.
    pub half_length: f64,
    pub force_mag: f64,
    pub tau: f64,
    pub x_threshold: f64,
    /// Radians.
    pub theta_threshold: f64,
    pub max_steps: u32,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            max_steps: 500,
        }
    }
}

impl CartPoleParams {
    pub fn with_half_length(half_length: f64) -> Self {
        Self {
            half_length,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.gravity,
            self.cart_mass,
            self.pole_mass,
            self.half_length,
            self.force_mag,
            self.tau,
            self.x_threshold,
            self.theta_threshold,
        ];
        if positive.iter().all(|v| v.is_finite() && *v > 0.0) && self.max_steps > 0 {
            Ok(())
        } else {
            Err(Error::Config(format!("cart-pole parameters must be positive: {self:?}")))
        }
    }
}

/// Physical state `(x, ẋ, θ, θ̇)`; θ = 0 is upright, positive leans right.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

/// One explicit Euler step of the cart-pole ODE. Positions integrate with
/// the pre-update velocities.
pub fn cartpole_dynamics(state: CartPoleState, action: usize, params: &CartPoleParams) -> CartPoleState {
    let force = if action == PUSH_RIGHT {
        params.force_mag
    } else {
        -params.force_mag
    };
    let total_mass = params.cart_mass + params.pole_mass;
    let pole_mass_length = params.pole_mass * params.half_length;
    let (sin, cos) = state.theta.sin_cos();
    let temp = (force + pole_mass_length * state.theta_dot * state.theta_dot * sin) / total_mass;
    let theta_acc = (params.gravity * sin - cos * temp)
        / (params.half_length * (4.0 / 3.0 - params.pole_mass * cos * cos / total_mass));
    let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;
    CartPoleState {
        x: state.x + params.tau * state.x_dot,
        x_dot: state.x_dot + params.tau * x_acc,
        theta: state.theta + params.tau * state.theta_dot,
        theta_dot: state.theta_dot + params.tau * theta_acc,
    }
}

#[derive(Debug, Clone)]
pub struct CartPole {
    params: CartPoleParams,
    state: CartPoleState,
    steps: u32,
    finished: bool,
    rng: ChaCha8Rng,
}

impl CartPole {
    pub fn new(params: CartPoleParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut env = Self {
            params,
            state: CartPoleState::default(),
            steps: 0,
            finished: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset();
        Ok(env)
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    /// Takes effect on the next step, including mid-episode.
    pub fn set_params(&mut self, params: CartPoleParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    /// Places the cart at an explicit state and starts a fresh episode from it.
    pub fn set_state(&mut self, state: CartPoleState) {
        self.state = state;
        self.steps = 0;
        self.finished = false;
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Every state component uniform in [-0.05, 0.05].
    pub fn reset(&mut self) -> Vec<f64> {
        let mut draw = || self.rng.random_range(-0.05..=0.05);
        self.state = CartPoleState {
            x: draw(),
            x_dot: draw(),
            theta: draw(),
            theta_dot: draw(),
        };
        self.steps = 0;
        self.finished = false;
        self.state.to_vec()
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.finished {
            return Err(Error::Contract("cart-pole stepped after the episode ended".into()));
        }
        if action > PUSH_RIGHT {
            return Err(Error::Contract(format!("cart-pole has no action {action}")));
        }
        self.state = cartpole_dynamics(self.state, action, &self.params);
        self.steps += 1;
        let s = self.state;
        let terminated = s.x.abs() > self.params.x_threshold || s.theta.abs() > self.params.theta_threshold;
        let truncated = !terminated && self.steps >= self.params.max_steps;
        self.finished = terminated || truncated;
        Ok(StepResult {
            observation: s.to_vec(),
            reward: 1.0,
            terminated,
            truncated,
        })
    }

    pub fn render(&self) -> serde_json::Value {
        serde_json::json!({
            "x": self.state.x,
            "x_dot": self.state.x_dot,
            "theta": self.state.theta,
            "theta_dot": self.state.theta_dot,
            "half_length": self.params.half_length,
            "x_threshold": self.params.x_threshold,
            "step": self.steps,
        })
    }
}
