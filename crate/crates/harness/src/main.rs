use std::path::PathBuf;
use std::process::ExitCode;

use askac_core::ask::Algorithm;
use askac_core::envs::EnvTag;
use askac_harness::config::AdvisorKind;
use askac_harness::run::load_params;
use askac_harness::{compute_anr, compute_ser, evaluate, read_metrics, run_experiment, sweep, ExperimentConfig, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "askac", version, about = "Advisor-in-the-loop actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run.
    Train(TrainArgs),
    /// Greedy evaluation of saved parameters.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// SER or ANR from two metrics files.
    Metrics {
        #[arg(long)]
        compute: Ratio,
        /// Metrics of the interactive (or asking) run.
        #[arg(long)]
        run: PathBuf,
        /// Metrics of the reference (original or monitoring) run.
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        target: f64,
    },
    /// The same run over seeds 0..N.
    Sweep {
        #[arg(long)]
        seeds: u64,
        #[command(flatten)]
        train: TrainArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Ratio {
    Ser,
    Anr,
}

#[derive(Args)]
struct TrainArgs {
    /// Flat TOML config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_algorithm)]
    algo: Option<Algorithm>,
    #[arg(long, value_parser = parse_env)]
    env: Option<EnvTag>,
    /// pole_half_length=X or grid_size=N; repeatable.
    #[arg(long = "env-param")]
    env_param: Vec<String>,
    #[arg(long)]
    nonstationary: bool,
    #[arg(long, value_enum)]
    advisor: Option<AdvisorKind>,
    #[arg(long = "advisor-accuracy")]
    advisor_accuracy: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "total-steps")]
    total_steps: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Serve the advisor protocol on this port and take advice from a console.
    #[arg(long)]
    serve: Option<u16>,
    /// Seconds to wait for a console before training starts (with --serve).
    #[arg(long = "wait-console", default_value_t = 300.0)]
    wait_console: f64,
    /// Seconds to wait for each console answer before acting alone.
    #[arg(long = "advisor-timeout")]
    advisor_timeout: Option<f64>,
    #[arg(long = "deterministic-timing")]
    deterministic_timing: bool,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: askac_core::Error| e.to_string())
}

fn parse_env(s: &str) -> std::result::Result<EnvTag, String> {
    match s.to_ascii_lowercase().as_str() {
        "cartpole" => Ok(EnvTag::CartPole),
        "doorkey" => Ok(EnvTag::DoorKey),
        _ => Err(format!("unknown environment {s:?}")),
    }
}

impl TrainArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let missing = |what: &str| askac_harness::Error::Setting(format!("--{what} is required without --config"));
                ExperimentConfig::new(
                    self.algo.ok_or_else(|| missing("algo"))?,
                    self.env.ok_or_else(|| missing("env"))?,
                    self.total_steps.ok_or_else(|| missing("total-steps"))?,
                    0,
                )
            }
        };
        if let Some(a) = self.algo {
            cfg.algorithm = a;
        }
        if let Some(e) = self.env {
            cfg.env = e;
        }
        for p in &self.env_param {
            cfg.set_env_param(p)?;
        }
        cfg.nonstationary |= self.nonstationary;
        if let Some(a) = self.advisor {
            cfg.advisor = a;
        }
        if self.advisor_accuracy.is_some() {
            cfg.advisor_accuracy = self.advisor_accuracy;
            if self.advisor.is_none() {
                cfg.advisor = AdvisorKind::Noisy;
            }
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.total_steps {
            cfg.total_timesteps = t;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        if let Some(port) = self.serve {
            cfg.advisor = AdvisorKind::Remote;
            cfg.advisor_address = Some(format!("127.0.0.1:{port}"));
            cfg.console_wait_secs = Some(self.wait_console);
        }
        if self.advisor_timeout.is_some() {
            cfg.advisor_timeout_secs = self.advisor_timeout;
        }
        cfg.deterministic_timing |= self.deterministic_timing;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let out = run_experiment(&args.resolve()?)?;
            println!("{}", serde_json::to_string_pretty(&out.summary)?);
        }
        Command::Eval { params, episodes, seed } => {
            let saved = load_params(&params)?;
            let r = evaluate(&saved.nets, saved.env, episodes, seed)?;
            println!("{:.4} ± {:.4} over {} episodes", r.mean, r.std, r.returns.len());
        }
        Command::Metrics {
            compute,
            run,
            reference,
            target,
        } => {
            let a = read_metrics(&run)?;
            let b = read_metrics(&reference)?;
            let value = match compute {
                Ratio::Ser => compute_ser(&a, &b, target),
                Ratio::Anr => compute_anr(&a, &b, target),
            };
            match value {
                Ok(v) => println!("{v:.6}"),
                Err(askac_harness::Error::Undefined(why)) => println!("undefined ({why})"),
                Err(e) => return Err(e),
            }
        }
        Command::Sweep { seeds, train } => {
            let summaries = sweep(&train.resolve()?, &(0..seeds).collect::<Vec<_>>())?;
            for s in &summaries {
                let crossing = s
                    .crossing
                    .map(|c| format!("{} steps, {} queries", c.global_step, c.queries))
                    .unwrap_or_else(|| "not reached".into());
                println!(
                    "seed {}: test {:.2} ± {:.2}, queries {}, target {}",
                    s.seed, s.test.mean, s.test.std, s.total_queries, crossing
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("askac: {e}");
            ExitCode::FAILURE
        }
    }
}
