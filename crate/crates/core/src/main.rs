use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cartpole_rl::env::EnvParams;
use cartpole_rl::harness::{
    self, load_checkpoint, parse_config_file, save_checkpoint, write_metrics, Checkpoint, Overrides,
    RunConfig,
};
use cartpole_rl::selftest;

/// Train and evaluate Q-learning agents on Cart-Pole.
#[derive(Debug, Parser)]
#[command(name = "cartpole-rl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent and write per-episode metrics as CSV.
    Train(Box<TrainArgs>),
    /// Run a checkpointed policy greedily and report its mean score.
    Eval(EvalArgs),
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, default_value_t = 7, env = "CARTPOLE_RL_SEED")]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// qtable, dqn, ddqn, ddqn-pa, duel-dqn, duel-ddqn, d3qn-per, dqn-per, ddqn-per
    #[arg(long, env = "CARTPOLE_RL_ALGO")]
    algo: Option<String>,
    /// Maximum number of episodes (default 1000).
    #[arg(long, env = "CARTPOLE_RL_EPISODES")]
    episodes: Option<usize>,
    #[arg(long, env = "CARTPOLE_RL_SEED")]
    seed: Option<u64>,
    /// Metrics CSV path.
    #[arg(long, env = "CARTPOLE_RL_OUT")]
    out: Option<PathBuf>,
    /// Write the trained model here.
    #[arg(long, env = "CARTPOLE_RL_CHECKPOINT")]
    checkpoint: Option<PathBuf>,
    /// `key = value` file; flags and environment variables take precedence.
    #[arg(long, env = "CARTPOLE_RL_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "CARTPOLE_RL_GAMMA")]
    gamma: Option<f64>,
    #[arg(long, env = "CARTPOLE_RL_LR")]
    lr: Option<f64>,
    #[arg(long, env = "CARTPOLE_RL_EPSILON_MIN")]
    epsilon_min: Option<f64>,
    #[arg(long, env = "CARTPOLE_RL_EPSILON_DECAY")]
    epsilon_decay: Option<f64>,
    #[arg(long, env = "CARTPOLE_RL_TAU")]
    tau: Option<f64>,
    #[arg(long, env = "CARTPOLE_RL_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long, env = "CARTPOLE_RL_MEMORY_SIZE")]
    memory_size: Option<usize>,
    /// Dueling aggregation for dueling variants: max or mean.
    #[arg(long, env = "CARTPOLE_RL_HEAD")]
    head: Option<String>,
    /// Keep training after the solved criterion is met.
    #[arg(long, env = "CARTPOLE_RL_NO_EARLY_STOP")]
    no_early_stop: bool,
    /// Run K independent runs with seeds S, S+1, ...
    #[arg(long, default_value_t = 1, env = "CARTPOLE_RL_REPEAT")]
    repeat: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, env = "CARTPOLE_RL_CHECKPOINT")]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 100, env = "CARTPOLE_RL_EPISODES")]
    episodes: usize,
    #[arg(long, default_value_t = 0, env = "CARTPOLE_RL_SEED")]
    seed: u64,
}

impl TrainArgs {
    fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            algorithm: self.algo.as_deref().map(str::parse).transpose()?,
            episodes: self.episodes,
            seed: self.seed,
            gamma: self.gamma,
            learning_rate: self.lr,
            epsilon_min: self.epsilon_min,
            epsilon_decay: self.epsilon_decay,
            tau: self.tau,
            batch_size: self.batch_size,
            memory_size: self.memory_size,
            head: self.head.as_deref().map(harness::parse_head).transpose()?,
            stop_when_solved: self.no_early_stop.then_some(false),
            out: self.out.clone(),
            checkpoint: self.checkpoint.clone(),
        })
    }
}

/// `metrics.csv` becomes `metrics_run3.csv` for the third of several runs.
fn run_path(path: &Path, run: usize, total: usize) -> PathBuf {
    if total <= 1 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_run{run}.{ext}"),
        None => format!("{stem}_run{run}"),
    };
    path.with_file_name(name)
}

fn train(args: TrainArgs) -> Result<()> {
    let mut overrides = args.overrides()?;
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        overrides = overrides.or(parse_config_file(&text)?);
    }
    let Some(algorithm) = overrides.algorithm else {
        bail!("--algo is required (or set algo in the config file)");
    };
    let Some(out) = overrides.out.clone() else {
        bail!("--out is required (or set out in the config file)");
    };
    if args.repeat == 0 {
        bail!("--repeat must be at least 1");
    }
    let base = RunConfig::new(algorithm, 0).with_overrides(&overrides)?;

    for run in 1..=args.repeat {
        let config = RunConfig {
            seed: base.seed + (run as u64 - 1),
            ..base.clone()
        };
        let outcome = harness::run_training(&config)?;
        let metrics_path = run_path(&out, run, args.repeat);
        write_metrics(&outcome.records, &metrics_path)?;
        if let Some(ckpt) = &overrides.checkpoint {
            let path = run_path(ckpt, run, args.repeat);
            save_checkpoint(&Checkpoint::from_trained(algorithm, &outcome.trained), &path)?;
        }
        let last = outcome.records.last().expect("at least one episode");
        match outcome.solved_at {
            Some(ep) => println!(
                "{algorithm} seed {}: solved at episode {ep} (avg100 {:.2}) -> {}",
                config.seed,
                last.avg100,
                metrics_path.display()
            ),
            None => println!(
                "{algorithm} seed {}: not solved in {} episodes (final avg100 {:.2}) -> {}",
                config.seed,
                outcome.records.len(),
                last.avg100,
                metrics_path.display()
            ),
        }
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let report = harness::evaluate(|s| ckpt.greedy(s), &EnvParams::default(), args.episodes, args.seed)?;
    println!(
        "{}: mean score {:.2} over {} greedy episodes",
        ckpt.algorithm,
        report.mean,
        report.scores.len()
    );
    Ok(())
}

fn run_selftest(seed: u64) -> Result<bool> {
    let mut all = true;
    for r in selftest::run_all(seed) {
        println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        all &= r.passed;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => train(*args).map(|_| true),
        Command::Eval(args) => eval(args).map(|_| true),
        Command::Selftest { seed } => run_selftest(seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeat_paths() {
        let p = Path::new("/tmp/m.csv");
        assert_eq!(run_path(p, 1, 1), PathBuf::from("/tmp/m.csv"));
        assert_eq!(run_path(p, 2, 3), PathBuf::from("/tmp/m_run2.csv"));
        assert_eq!(run_path(Path::new("m"), 1, 2), PathBuf::from("m_run1"));
    }

    #[test]
    fn unknown_algorithm_is_rejected() {
        let cli = Cli::try_parse_from(["cartpole-rl", "train", "--algo", "bogus", "--out", "x.csv"]).unwrap();
        let Command::Train(args) = cli.command else { unreachable!() };
        assert!(args.overrides().is_err());
    }
}
