//! Running configured experiments and persisting their artifacts.
//!
//! A run directory holds `config.json` (the experiment and the resolved
//! training settings), `metrics.csv` written row by row, `params.json` with
//! the final networks and `summary.json`.

use std::path::{Path, PathBuf};

use askac_core::advisors::Advisor;
use askac_core::agent::Nets;
use askac_core::ask::{MetricsRow, Observer, TrainConfig, Trainer};
use askac_core::envs::{EnvParams, EnvTag};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{io_at, Error, Result};
use crate::eval::{evaluate, EvalResult, EVAL_SEED_OFFSET};
use crate::metrics::{first_crossing, write_json, Crossing, CsvSink, CROSSING_WINDOW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub env: EnvTag,
    pub seed: u64,
    pub iterations: u64,
    pub effective_timesteps: u64,
    pub total_queries: u64,
    pub test: EvalResult,
    pub target: f64,
    /// Where the smoothed training return first reached `target`.
    pub crossing: Option<Crossing>,
}

/// Final networks together with the environment they were last trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedParams {
    pub env: EnvParams,
    pub nets: Nets,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub rows: Vec<MetricsRow>,
    pub params: SavedParams,
}

#[derive(Serialize)]
struct ConfigSidecar<'a> {
    experiment: &'a ExperimentConfig,
    resolved: &'a TrainConfig,
}

/// Runs `config` with the advisor it describes.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let advisor = config.build_advisor()?;
    run_with_advisor(config, advisor)
}

/// Runs `config` with an explicitly supplied advisor.
pub fn run_with_advisor(config: &ExperimentConfig, advisor: Option<Box<dyn Advisor>>) -> Result<RunOutput> {
    let train = config.train_config()?;
    let dir = config.output_dir.as_deref();
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(io_at(dir))?;
        write_json(
            &dir.join("config.json"),
            &ConfigSidecar {
                experiment: config,
                resolved: &train,
            },
        )?;
    }
    let mut trainer = Trainer::new(train.clone(), advisor)?;
    let rows = match dir {
        Some(dir) => trainer.run(&mut CsvSink::create(&dir.join("metrics.csv"))?)?,
        None => trainer.run(&mut ())?,
    };
    let params = SavedParams {
        env: trainer.env().params(),
        nets: trainer.into_nets(),
    };
    let test = evaluate(&params.nets, params.env, config.episodes(), config.seed + EVAL_SEED_OFFSET)?;
    let summary = RunSummary {
        algorithm: config.algorithm.to_string(),
        env: config.env,
        seed: config.seed,
        iterations: train.iterations(),
        effective_timesteps: train.effective_timesteps(),
        total_queries: rows.iter().map(|r| r.ask_count).sum(),
        test,
        target: config.target(),
        crossing: first_crossing(&rows, config.target(), CROSSING_WINDOW),
    };
    if let Some(dir) = dir {
        write_json(&dir.join("params.json"), &params)?;
        write_json(&dir.join("summary.json"), &summary)?;
    }
    log::info!(
        "{} seed {}: test return {:.2} ± {:.2}, {} queries",
        summary.algorithm,
        summary.seed,
        summary.test.mean,
        summary.test.std,
        summary.total_queries
    );
    Ok(RunOutput { summary, rows, params })
}

pub fn load_params(path: &Path) -> Result<SavedParams> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    Ok(serde_json::from_str(&text)?)
}

fn seed_dir(base: Option<&Path>, seed: u64) -> Option<PathBuf> {
    base.map(|b| b.join(format!("seed_{seed}")))
}

/// One run per seed, each in `seed_<n>` under the configured output directory.
pub fn sweep(config: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<RunSummary>> {
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cfg = config.clone();
        cfg.seed = seed;
        cfg.output_dir = seed_dir(config.output_dir.as_deref(), seed);
        out.push(run_experiment(&cfg)?.summary);
    }
    if let Some(dir) = &config.output_dir {
        write_json(&dir.join("sweep.json"), &out)?;
    }
    Ok(out)
}

/// Seed sweeps of the heuristic baseline at several thresholds.
pub fn sweep_heu_threshold(config: &ExperimentConfig, thresholds: &[f64], seeds: &[u64]) -> Result<Vec<(f64, Vec<RunSummary>)>> {
    if config.algorithm != askac_core::ask::Algorithm::Heu {
        return Err(Error::Setting(format!("threshold sweep needs heu, got {}", config.algorithm)));
    }
    let mut out = Vec::new();
    for &sigma in thresholds {
        let mut cfg = config.clone();
        cfg.heu_threshold = Some(sigma);
        cfg.output_dir = config.output_dir.as_ref().map(|d| d.join(format!("sigma_{sigma}")));
        out.push((sigma, sweep(&cfg, seeds)?));
    }
    Ok(out)
}

/// Observer that forwards to two others.
pub struct Tee<'a, A: Observer, B: Observer>(pub &'a mut A, pub &'a mut B);

impl<A: Observer, B: Observer> Observer for Tee<'_, A, B> {
    fn on_step(&mut self, record: &askac_core::ask::StepRecord) {
        self.0.on_step(record);
        self.1.on_step(record);
    }

    fn on_iteration(&mut self, row: &MetricsRow) -> askac_core::Result<()> {
        self.0.on_iteration(row)?;
        self.1.on_iteration(row)
    }
}
