//! The training loop shared by every algorithm.
//!
//! Each iteration samples a fixed number of steps, then runs the selector
//! and one optimisation pass. The algorithms differ only in how the
//! ask/exec decision is made and which loss terms are switched on.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::meta::{decide_meta, MetaAction};
use super::selector::{value_errors, SelectorState};
use crate::advisors::{Advisor, AdvisorQuery, IterationStats};
use crate::agent::{normalize, AcConfig, Backbone, LossSpec, LossStats, Nets, PolicyObjective, RolloutBuffer, Transition};
use crate::envs::{ChangepointSchedule, Env, EnvParams};
use crate::error::{Error, Result};
use crate::nn::{anneal_fraction, Adam, AdamConfig, CategoricalDist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    A2c,
    Ppo,
    Aska2c,
    Askppo,
    Cm,
    Heu,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::A2c,
        Algorithm::Ppo,
        Algorithm::Aska2c,
        Algorithm::Askppo,
        Algorithm::Cm,
        Algorithm::Heu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::A2c => "a2c",
            Algorithm::Ppo => "ppo",
            Algorithm::Aska2c => "aska2c",
            Algorithm::Askppo => "askppo",
            Algorithm::Cm => "cm",
            Algorithm::Heu => "heu",
        }
    }

    pub fn backbone(self) -> Backbone {
        match self {
            Algorithm::A2c | Algorithm::Aska2c => Backbone::A2c,
            _ => Backbone::Ppo,
        }
    }

    pub fn uses_requester(self) -> bool {
        matches!(self, Algorithm::Aska2c | Algorithm::Askppo)
    }

    pub fn uses_advisor(self) -> bool {
        !matches!(self, Algorithm::A2c | Algorithm::Ppo)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// Settings of the advice-seeking parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AskConfig {
    pub exponential_decay_rate: f64,
    pub max_unstable_rate: f64,
    pub advisor_loss_coeff: f64,
    pub ask_loss_coeff: f64,
    /// Importance threshold below which the heuristic baseline asks.
    pub heu_threshold: f64,
}

impl Default for AskConfig {
    fn default() -> Self {
        Self {
            exponential_decay_rate: 0.9,
            max_unstable_rate: 0.1,
            advisor_loss_coeff: 1.0,
            ask_loss_coeff: 0.5,
            heu_threshold: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub env: EnvParams,
    pub schedule: ChangepointSchedule,
    pub ac: AcConfig,
    pub ask: AskConfig,
    pub total_timesteps: u64,
    pub seed: u64,
    /// Replaces the requester by a fixed decision; the requester is then not
    /// part of the policy at all.
    pub meta_override: Option<MetaAction>,
    /// Report zero wall time so repeated runs write identical metrics.
    pub deterministic_timing: bool,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm, env: EnvParams, total_timesteps: u64, seed: u64) -> Self {
        Self {
            algorithm,
            env,
            schedule: ChangepointSchedule::stationary(),
            ac: AcConfig::preset(algorithm.backbone(), env.tag()),
            ask: AskConfig::default(),
            total_timesteps,
            seed,
            meta_override: None,
            deterministic_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ac.validate()?;
        if self.ac.backbone != self.algorithm.backbone() {
            return Err(Error::Config(format!(
                "{} runs on the {:?} backbone",
                self.algorithm,
                self.algorithm.backbone()
            )));
        }
        let a = &self.ask;
        SelectorState::new(a.exponential_decay_rate, a.max_unstable_rate)?;
        if a.advisor_loss_coeff < 0.0 || a.ask_loss_coeff < 0.0 {
            return Err(Error::Config("loss coefficients must be nonnegative".into()));
        }
        if self.iterations() == 0 {
            return Err(Error::Config(format!(
                "total timesteps {} is less than one iteration of {}",
                self.total_timesteps, self.ac.timesteps_per_iteration
            )));
        }
        Ok(())
    }

    /// Whole iterations that fit in the step budget.
    pub fn iterations(&self) -> u64 {
        self.total_timesteps / self.ac.timesteps_per_iteration as u64
    }

    pub fn effective_timesteps(&self) -> u64 {
        self.iterations() * self.ac.timesteps_per_iteration as u64
    }
}

/// One row per iteration. The first ten columns are the core record; the
/// rest are optimisation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub global_step: u64,
    pub train_return: f64,
    pub roa: f64,
    pub ask_count: u64,
    pub value_loss: f64,
    pub ewma_value_loss: f64,
    pub unstable_rate: f64,
    pub unstable_count: u64,
    pub wall_time: f64,
    pub episodes: u64,
    pub policy_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub advisor_loss: f64,
    pub ask_loss: f64,
    pub total_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub learning_rate: f64,
}

/// What happened on one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iteration: u64,
    pub global_step: u64,
    /// Decision as recorded for learning (a failed query is recorded as exec).
    pub meta: MetaAction,
    /// The advisor was queried on this step.
    pub queried: bool,
    pub action: usize,
    pub label: Option<usize>,
    /// Heuristic importance `max π − min π`, for the heuristic baseline.
    pub importance: Option<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Observer {
    fn on_step(&mut self, _record: &StepRecord) {}

    fn on_iteration(&mut self, _row: &MetricsRow) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

/// `max_a π(a|s) − min_a π(a|s)`.
pub fn heu_importance(dist: &CategoricalDist) -> f64 {
    let p = dist.probs();
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub struct Trainer {
    config: TrainConfig,
    nets: Nets,
    opt_actor: Adam,
    opt_critic: Adam,
    opt_requester: Adam,
    env: Env,
    schedule: ChangepointSchedule,
    obs: Vec<f64>,
    selector: SelectorState,
    advisor: Option<Box<dyn Advisor>>,
    rng_meta: ChaCha8Rng,
    rng_action: ChaCha8Rng,
    rng_shuffle: ChaCha8Rng,
    global_step: u64,
    iteration: u64,
    next_query_id: u64,
    episode_return: f64,
    last_train_return: f64,
    loss_history: Vec<LossStats>,
    started: Instant,
}

impl Trainer {
    /// Plain backbones never consult `advisor`; the others require one.
    pub fn new(config: TrainConfig, advisor: Option<Box<dyn Advisor>>) -> Result<Self> {
        config.validate()?;
        let never_asks = config.meta_override == Some(MetaAction::Exec) && config.algorithm.uses_requester();
        if config.algorithm.uses_advisor() && !never_asks && advisor.is_none() {
            return Err(Error::Config(format!("{} needs an advisor", config.algorithm)));
        }
        let advisor = if config.algorithm.uses_advisor() { advisor } else { None };
        let mut env = Env::new(config.env, config.seed)?;
        let obs = env.reset();
        let mut init = stream(config.seed, 0);
        let nets = Nets::new(env.observation_len(), env.num_actions(), &config.ac.hidden, &mut init)?;
        let lr = config.ac.learning_rate;
        let adam = AdamConfig::default();
        Ok(Self {
            opt_actor: Adam::new(&nets.actor, lr, adam),
            opt_critic: Adam::new(&nets.critic, lr, adam),
            opt_requester: Adam::new(&nets.requester, lr, adam),
            selector: SelectorState::new(config.ask.exponential_decay_rate, config.ask.max_unstable_rate)?,
            schedule: config.schedule.clone(),
            rng_meta: stream(config.seed, 1),
            rng_action: stream(config.seed, 2),
            rng_shuffle: stream(config.seed, 3),
            nets,
            env,
            obs,
            advisor,
            global_step: 0,
            iteration: 0,
            next_query_id: 1,
            episode_return: 0.0,
            last_train_return: 0.0,
            loss_history: Vec::new(),
            started: Instant::now(),
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn nets(&self) -> &Nets {
        &self.nets
    }

    /// For tests that start from hand-set parameters. Must be called before
    /// the first iteration, since optimiser moments are shaped by the nets.
    pub fn nets_mut(&mut self) -> &mut Nets {
        &mut self.nets
    }

    pub fn into_nets(self) -> Nets {
        self.nets
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations()
    }

    /// Mean loss terms of every iteration so far.
    pub fn loss_history(&self) -> &[LossStats] {
        &self.loss_history
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// Runs every remaining iteration.
    pub fn run(&mut self, observer: &mut dyn Observer) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        while !self.is_done() {
            rows.push(self.iterate(observer)?);
        }
        Ok(rows)
    }

    fn query(&mut self, observation: &[f64]) -> Result<usize> {
        let advisor = self
            .advisor
            .as_mut()
            .ok_or_else(|| Error::Config("no advisor configured".into()))?;
        let query = AdvisorQuery {
            env: self.env.tag(),
            state: observation.to_vec(),
            legal: (0..self.env.num_actions()).collect(),
            id: self.next_query_id,
            render: if advisor.needs_render() {
                self.env.render()
            } else {
                serde_json::Value::Null
            },
        };
        self.next_query_id += 1;
        let reply = advisor.advise(&query)?;
        if reply.id != query.id || !query.legal.contains(&reply.action) {
            return Err(Error::Protocol(format!(
                "reply {reply:?} does not answer query {}",
                query.id
            )));
        }
        Ok(reply.action)
    }

    /// Asks the advisor, turning a timeout or protocol failure into `None`.
    fn query_or_fallback(&mut self, observation: &[f64]) -> Result<Option<usize>> {
        match self.query(observation) {
            Ok(a) => Ok(Some(a)),
            Err(e @ (Error::AdvisorTimeout(_) | Error::Protocol(_))) => {
                log::warn!("advisor unavailable, agent acts on its own: {e}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// One iteration: sample, select, optimise, report.
    pub fn iterate(&mut self, observer: &mut dyn Observer) -> Result<MetricsRow> {
        if self.is_done() {
            return Err(Error::Contract("training budget already spent".into()));
        }
        let cfg = self.config.clone();
        let alg = cfg.algorithm;
        let t_len = cfg.ac.timesteps_per_iteration;
        let eps = if cfg.ac.anneal {
            anneal_fraction(self.global_step, cfg.effective_timesteps())
        } else {
            1.0
        };
        for opt in [&mut self.opt_actor, &mut self.opt_critic, &mut self.opt_requester] {
            opt.set_anneal(eps)?;
        }
        let requester_live = alg.uses_requester() && cfg.meta_override.is_none();
        let mut buf = RolloutBuffer::new(self.env.observation_len(), requester_live);
        let mut finished = Vec::new();
        let mut queries = 0u64;
        let mut carried_value: Option<f64> = None;

        for _ in 0..t_len {
            if let Some(params) = self.schedule.advance(self.global_step) {
                log::info!("step {}: environment switches to {params:?}", self.global_step);
                self.env.set_params(params)?;
            }
            let obs = std::mem::take(&mut self.obs);
            let value = match carried_value.take() {
                Some(v) => v,
                None => self.nets.value(&obs)?,
            };
            let pi = self.nets.policy(&obs)?;
            let mut importance = None;
            let (mut meta, mut logp_meta) = match alg {
                Algorithm::Aska2c | Algorithm::Askppo => match cfg.meta_override {
                    Some(y) => (y, 0.0),
                    None => decide_meta(&self.nets.requester, &obs, &mut self.rng_meta)?,
                },
                Algorithm::Heu => {
                    let i = heu_importance(&pi);
                    importance = Some(i);
                    let y = if i < cfg.ask.heu_threshold {
                        MetaAction::Ask
                    } else {
                        MetaAction::Exec
                    };
                    (y, 0.0)
                }
                _ => (MetaAction::Exec, 0.0),
            };
            let mut label = None;
            let mut queried = false;
            if meta == MetaAction::Ask {
                queried = true;
                queries += 1;
                label = self.query_or_fallback(&obs)?;
                if label.is_none() {
                    meta = MetaAction::Exec;
                    if requester_live {
                        logp_meta = self.nets.meta_policy(&obs)?.prob(MetaAction::Exec.index()).ln();
                    }
                }
            }
            let (action, logp_action) = match (meta, label) {
                (MetaAction::Ask, Some(a)) => (a, 0.0),
                _ => {
                    let a = pi.sample(&mut self.rng_action);
                    (a, pi.prob(a).ln())
                }
            };
            if alg == Algorithm::Cm {
                queried = true;
                queries += 1;
                label = self.query_or_fallback(&obs)?;
            }

            let step = self.env.step(action)?;
            self.global_step += 1;
            self.episode_return += step.reward;
            let next_value = if step.terminated {
                0.0
            } else {
                self.nets.value(&step.observation)?
            };
            let done = step.done();
            observer.on_step(&StepRecord {
                iteration: self.iteration + 1,
                global_step: self.global_step,
                meta,
                queried,
                action,
                label,
                importance,
                reward: step.reward,
                done,
            });
            buf.push(Transition {
                observation: obs,
                meta,
                action,
                label,
                logp_meta,
                logp_action,
                reward: step.reward,
                terminated: step.terminated,
                truncated: step.truncated,
                value,
                next_value,
            })?;
            if done {
                finished.push(self.episode_return);
                self.episode_return = 0.0;
                self.obs = self.env.reset();
            } else {
                carried_value = Some(next_value);
                self.obs = step.observation;
            }
        }
        self.iteration += 1;
        let iteration = self.iteration;
        let context = |e: Error| match e {
            Error::Numeric(m) => Error::Numeric(format!("{alg} iteration {iteration}: {m}")),
            other => other,
        };

        buf.finish(cfg.ac.gamma, cfg.ac.gae_lambda).map_err(context)?;
        let all: Vec<usize> = (0..buf.len()).collect();
        let errors = value_errors(&self.nets.critic, buf.gather(&all).view(), &buf.returns)?;
        let selection = self.selector.select(&errors).map_err(context)?;
        assert!(
            (0.0..=1.0).contains(&selection.rate),
            "unstable rate {} outside [0, 1]",
            selection.rate
        );
        if requester_live {
            for &i in &selection.states {
                buf.unstable[i] = true;
            }
        }
        let labelled = buf.labels.iter().filter(|l| l.is_some()).count();
        let unstable = buf.unstable.iter().filter(|&&u| u).count();
        let advantages = if cfg.ac.normalize_advantages {
            normalize(&buf.advantages)
        } else {
            buf.advantages.clone()
        };
        let num_mb = cfg.ac.num_minibatches() as f64;
        let member = |n: usize| if n == 0 { 0.0 } else { num_mb / n as f64 };
        let objective = match cfg.ac.backbone {
            Backbone::A2c => PolicyObjective::Vanilla,
            Backbone::Ppo => PolicyObjective::Clipped {
                clip: cfg.ac.clip_coef * eps,
            },
        };
        let spec = LossSpec {
            objective,
            vf_coef: cfg.ac.vf_coef,
            ent_coef: cfg.ac.ent_coef,
            org_coef: 1.0,
            adv_coef: cfg.ask.advisor_loss_coeff,
            adv_member_weight: member(labelled),
            ask_coef: cfg.ask.ask_loss_coeff,
            ask_member_weight: member(unstable),
        };

        let mut order = all;
        let mut mean = LossStats::default();
        let mut grad_norm = 0.0;
        let mut passes = 0usize;
        for _ in 0..cfg.ac.epochs {
            if cfg.ac.backbone == Backbone::Ppo {
                order.shuffle(&mut self.rng_shuffle);
            }
            for mb in order.chunks(cfg.ac.minibatch_size) {
                let (stats, mut grads) =
                    crate::agent::evaluate(&self.nets, &buf, mb, &advantages, &spec).map_err(context)?;
                grad_norm += grads.clip(cfg.ac.max_grad_norm);
                self.opt_actor.step(&mut self.nets.actor, &grads.actor).map_err(context)?;
                self.opt_critic.step(&mut self.nets.critic, &grads.critic).map_err(context)?;
                self.opt_requester
                    .step(&mut self.nets.requester, &grads.requester)
                    .map_err(context)?;
                for (acc, v) in [
                    (&mut mean.policy, stats.policy),
                    (&mut mean.value, stats.value),
                    (&mut mean.entropy, stats.entropy),
                    (&mut mean.advisor, stats.advisor),
                    (&mut mean.ask, stats.ask),
                    (&mut mean.total, stats.total),
                    (&mut mean.approx_kl, stats.approx_kl),
                    (&mut mean.clip_fraction, stats.clip_fraction),
                ] {
                    *acc += v;
                }
                passes += 1;
            }
        }
        let k = passes as f64;
        for v in [
            &mut mean.policy,
            &mut mean.value,
            &mut mean.entropy,
            &mut mean.advisor,
            &mut mean.ask,
            &mut mean.total,
            &mut mean.approx_kl,
            &mut mean.clip_fraction,
        ] {
            *v /= k;
        }
        self.loss_history.push(mean);

        if !finished.is_empty() {
            self.last_train_return = finished.iter().sum::<f64>() / finished.len() as f64;
        }
        let roa = queries as f64 / t_len as f64;
        let row = MetricsRow {
            iteration: self.iteration,
            global_step: self.global_step,
            train_return: self.last_train_return,
            roa,
            ask_count: queries,
            value_loss: selection.value_loss,
            ewma_value_loss: selection.ewma,
            unstable_rate: selection.rate,
            unstable_count: selection.count as u64,
            wall_time: if cfg.deterministic_timing {
                0.0
            } else {
                self.started.elapsed().as_secs_f64()
            },
            episodes: finished.len() as u64,
            policy_loss: mean.policy,
            critic_loss: mean.value,
            entropy: mean.entropy,
            advisor_loss: mean.advisor,
            ask_loss: mean.ask,
            total_loss: mean.total,
            approx_kl: mean.approx_kl,
            clip_fraction: mean.clip_fraction,
            grad_norm: grad_norm / k,
            learning_rate: self.opt_actor.learning_rate(),
        };
        if let Some(advisor) = self.advisor.as_mut() {
            advisor.on_iteration(&IterationStats {
                iteration: row.iteration,
                rate_of_asking: row.roa,
                average_return: row.train_return,
            });
        }
        observer.on_iteration(&row)?;
        Ok(row)
    }
}
