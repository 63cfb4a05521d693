//! Experiment configuration: a flat TOML file whose keys follow the
//! hyperparameter table names, plus run, environment and advisor keys.
//!
//! Every hyperparameter key is optional; omitted ones take the preset for the
//! chosen algorithm and environment.

use std::path::{Path, PathBuf};
use std::time::Duration;

use askac_core::advisors::{Advisor, NoisyAdvisor, RemoteAdvisor, ScriptedExpert};
use askac_core::ask::{Algorithm, TrainConfig};
use askac_core::envs::{CartPoleParams, ChangepointSchedule, EnvParams, EnvTag, GridWorldConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AdvisorKind {
    #[default]
    Scripted,
    Noisy,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub env: EnvTag,
    #[serde(default)]
    pub pole_half_length: Option<f64>,
    #[serde(default)]
    pub grid_size: Option<usize>,
    /// Switch to the three-phase changepoint sequence of the environment.
    #[serde(default)]
    pub nonstationary: bool,

    #[serde(default)]
    pub advisor: AdvisorKind,
    #[serde(default)]
    pub advisor_accuracy: Option<f64>,
    /// Listen address for the remote advisor.
    #[serde(default)]
    pub advisor_address: Option<String>,
    #[serde(default)]
    pub advisor_timeout_secs: Option<f64>,
    /// How long to wait for a console before training starts.
    #[serde(default)]
    pub console_wait_secs: Option<f64>,

    pub total_timesteps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub deterministic_timing: bool,
    /// Training return that counts as reaching the target.
    #[serde(default)]
    pub target_return: Option<f64>,
    #[serde(default)]
    pub eval_episodes: Option<usize>,

    #[serde(default)]
    pub policy_network_hidden_layers: Option<Vec<usize>>,
    #[serde(default)]
    pub value_network_hidden_layers: Option<Vec<usize>>,
    #[serde(default)]
    pub timesteps_per_iteration: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    /// Linear decay of the learning rate and clip range over the run.
    #[serde(default)]
    pub anneal: Option<bool>,
    #[serde(default)]
    pub number_of_epochs: Option<usize>,
    #[serde(default)]
    pub minibatch_size: Option<usize>,
    #[serde(default)]
    pub discount_factor: Option<f64>,
    #[serde(default)]
    pub gae_discount: Option<f64>,
    #[serde(default)]
    pub ppo_clipping: Option<f64>,
    #[serde(default)]
    pub gradient_clipping: Option<f64>,
    #[serde(default)]
    pub vf_coeff: Option<f64>,
    #[serde(default)]
    pub entropy_coeff: Option<f64>,

    #[serde(default)]
    pub exponential_decay_rate: Option<f64>,
    #[serde(default)]
    pub max_unstable_rate: Option<f64>,
    #[serde(default)]
    pub advisor_loss_coeff: Option<f64>,
    #[serde(default)]
    pub ask_loss_coeff: Option<f64>,
    #[serde(default)]
    pub heu_threshold: Option<f64>,
}

pub const DEFAULT_EVAL_EPISODES: usize = 10;
pub const DEFAULT_ADVISOR_TIMEOUT: Duration = Duration::from_secs(30);

/// Target training return per environment.
pub fn default_target(env: EnvTag) -> f64 {
    match env {
        EnvTag::CartPole => 450.0,
        EnvTag::DoorKey => 0.9,
    }
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, env: EnvTag, total_timesteps: u64, seed: u64) -> Self {
        Self {
            algorithm,
            env,
            pole_half_length: None,
            grid_size: None,
            nonstationary: false,
            advisor: AdvisorKind::Scripted,
            advisor_accuracy: None,
            advisor_address: None,
            advisor_timeout_secs: None,
            console_wait_secs: None,
            total_timesteps,
            seed,
            output_dir: None,
            deterministic_timing: false,
            target_return: None,
            eval_episodes: None,
            policy_network_hidden_layers: None,
            value_network_hidden_layers: None,
            timesteps_per_iteration: None,
            learning_rate: None,
            anneal: None,
            number_of_epochs: None,
            minibatch_size: None,
            discount_factor: None,
            gae_discount: None,
            ppo_clipping: None,
            gradient_clipping: None,
            vf_coeff: None,
            entropy_coeff: None,
            exponential_decay_rate: None,
            max_unstable_rate: None,
            advisor_loss_coeff: None,
            ask_loss_coeff: None,
            heu_threshold: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        Self::from_toml(&text).map_err(|source| Error::ConfigFile {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Applies one `key=value` environment setting.
    pub fn set_env_param(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Setting(format!("expected key=value, got {assignment:?}")))?;
        let bad = || Error::Setting(format!("cannot parse {value:?} for {key}"));
        match key.trim() {
            "pole_half_length" => self.pole_half_length = Some(value.trim().parse().map_err(|_| bad())?),
            "grid_size" => self.grid_size = Some(value.trim().parse().map_err(|_| bad())?),
            other => return Err(Error::Setting(format!("unknown environment parameter {other:?}"))),
        }
        Ok(())
    }

    pub fn target(&self) -> f64 {
        self.target_return.unwrap_or_else(|| default_target(self.env))
    }

    pub fn episodes(&self) -> usize {
        self.eval_episodes.unwrap_or(DEFAULT_EVAL_EPISODES)
    }

    /// Parameters of the first MDP.
    pub fn env_params(&self) -> Result<EnvParams> {
        match self.env {
            EnvTag::CartPole => {
                if self.grid_size.is_some() {
                    return Err(Error::Setting("grid_size applies to doorkey only".into()));
                }
                Ok(EnvParams::CartPole(CartPoleParams::with_half_length(
                    self.pole_half_length.unwrap_or(0.5),
                )))
            }
            EnvTag::DoorKey => {
                if self.pole_half_length.is_some() {
                    return Err(Error::Setting("pole_half_length applies to cartpole only".into()));
                }
                let size = self.grid_size.unwrap_or(5);
                Ok(EnvParams::DoorKey(if self.nonstationary {
                    GridWorldConfig::padded(size, 8)
                } else {
                    GridWorldConfig::new(size)
                }))
            }
        }
    }

    pub fn schedule(&self) -> ChangepointSchedule {
        match (self.nonstationary, self.env) {
            (false, _) => ChangepointSchedule::stationary(),
            (true, EnvTag::CartPole) => ChangepointSchedule::cartpole_pole_lengths(),
            (true, EnvTag::DoorKey) => ChangepointSchedule::doorkey_sizes(),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::new(self.algorithm, self.env_params()?, self.total_timesteps, self.seed);
        cfg.schedule = self.schedule();
        cfg.deterministic_timing = self.deterministic_timing;
        match (&self.policy_network_hidden_layers, &self.value_network_hidden_layers) {
            (Some(p), Some(v)) if p != v => {
                return Err(Error::Setting(format!(
                    "policy and value hidden layers must match, got {p:?} and {v:?}"
                )))
            }
            (Some(h), _) | (_, Some(h)) => cfg.ac.hidden = h.clone(),
            _ => {}
        }
        let ac = &mut cfg.ac;
        macro_rules! take {
            ($src:ident => $dst:expr) => {
                if let Some(v) = self.$src.clone() {
                    $dst = v;
                }
            };
        }
        take!(timesteps_per_iteration => ac.timesteps_per_iteration);
        take!(learning_rate => ac.learning_rate);
        take!(anneal => ac.anneal);
        take!(number_of_epochs => ac.epochs);
        take!(minibatch_size => ac.minibatch_size);
        take!(discount_factor => ac.gamma);
        take!(gae_discount => ac.gae_lambda);
        take!(ppo_clipping => ac.clip_coef);
        take!(gradient_clipping => ac.max_grad_norm);
        take!(vf_coeff => ac.vf_coef);
        take!(entropy_coeff => ac.ent_coef);
        let ask = &mut cfg.ask;
        take!(exponential_decay_rate => ask.exponential_decay_rate);
        take!(max_unstable_rate => ask.max_unstable_rate);
        take!(advisor_loss_coeff => ask.advisor_loss_coeff);
        take!(ask_loss_coeff => ask.ask_loss_coeff);
        take!(heu_threshold => ask.heu_threshold);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the configured advisor, or `None` for plain backbones.
    pub fn build_advisor(&self) -> Result<Option<Box<dyn Advisor>>> {
        if !self.algorithm.uses_advisor() {
            return Ok(None);
        }
        Ok(Some(match self.advisor {
            AdvisorKind::Scripted => Box::new(ScriptedExpert),
            AdvisorKind::Noisy => {
                let p = self
                    .advisor_accuracy
                    .ok_or_else(|| Error::Setting("noisy advisor needs advisor_accuracy".into()))?;
                Box::new(NoisyAdvisor::new(ScriptedExpert, p, advisor_seed(self.seed))?)
            }
            AdvisorKind::Remote => {
                let addr = self.advisor_address.as_deref().unwrap_or("127.0.0.1:8765");
                let timeout = self
                    .advisor_timeout_secs
                    .map(Duration::from_secs_f64)
                    .unwrap_or(DEFAULT_ADVISOR_TIMEOUT);
                let remote = RemoteAdvisor::serve(addr, self.env, timeout)?;
                log::info!("advisor console endpoint ws://{}", remote.local_addr());
                if let Some(wait) = self.console_wait_secs {
                    if !remote.wait_for_console(Duration::from_secs_f64(wait)) {
                        log::warn!("no console connected after {wait} s, starting anyway");
                    }
                }
                Box::new(remote)
            }
        }))
    }
}

/// Seed of the noisy advisor's coin, kept apart from the trainer's streams.
pub fn advisor_seed(seed: u64) -> u64 {
    seed ^ 0xad51_5e00
}
