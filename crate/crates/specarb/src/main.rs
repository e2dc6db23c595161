//! Command-line entry point: reproducible training, backtesting, synthetic
//! data generation, and oracle self-checks. Verbosity via the SPECARB_LOG
//! environment variable (error/warn/info/debug/trace).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand_distr::{Distribution, LogNormal};
use sha2::{Digest, Sha256};

use specarb::agent::{train_loop, DqnAgent};
use specarb::backtest::{evaluate_detailed, EvaluationReport, Policy};
use specarb::config::{Mode, RunConfig};
use specarb::error::{Error, Result};
use specarb::features::Bar;
use specarb::market::{env_reset, ou_step, write_bars_csv, MarketData};
use specarb::rng::sub_rng;
use specarb::selfcheck::{oracle_check, BELLMAN_TOLERANCE, GRADIENT_TOLERANCE};

#[derive(Parser)]
#[command(name = "specarb", about = "Deep Q-learning statistical-arbitrage engine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Agent,
    Random,
    Flat,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write checkpoint, training report, and resolved
    /// config to the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of training episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a frozen policy; writes the evaluation report and one
    /// ledger CSV per episode, and prints an aggregate table.
    Backtest {
        #[arg(long)]
        config: PathBuf,
        /// Agent checkpoint (required for --policy agent).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PolicyArg::Agent)]
        policy: PolicyArg,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Concurrent episode runners (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate OU-driven synthetic bars in the replay CSV schema.
    SimulateData {
        #[arg(long)]
        config: PathBuf,
        /// Number of bars to write.
        #[arg(long)]
        steps: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in Bellman and gradient self-checks.
    OracleCheck,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("SPECARB_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, seed, episodes, out } => cmd_train(&config, seed, episodes, out),
        Command::Backtest { config, checkpoint, policy, episodes, jobs, seed, out } => {
            cmd_backtest(&config, checkpoint.as_deref(), policy, episodes, jobs, seed, out)
        }
        Command::SimulateData { config, steps, out, seed } => {
            cmd_simulate_data(&config, steps, &out, seed)
        }
        Command::OracleCheck => cmd_oracle_check(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    episodes: Option<usize>,
    out: Option<PathBuf>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(episodes) = episodes {
        cfg.agent.episodes = episodes;
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

fn cmd_train(
    config_path: &Path,
    seed: Option<u64>,
    episodes: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(config_path, seed, episodes, out)?;
    let env_cfg = cfg.env_config()?;
    let dqn_cfg = cfg.dqn_config()?;
    let layer_sizes = cfg.layer_sizes()?;

    let mut agent = DqnAgent::new(&layer_sizes, dqn_cfg, cfg.seed)?;
    let (mut env, _) = env_reset(&env_cfg, cfg.seed)?;
    log::info!(
        "training: net {layer_sizes:?}, {} episodes of {} steps, seed {}",
        cfg.agent.episodes,
        env_cfg.episode_len,
        cfg.seed
    );
    let report = train_loop(&mut agent, &mut env, cfg.agent.episodes, cfg.seed)?;

    std::fs::create_dir_all(&cfg.output_dir)?;
    let checkpoint_path = cfg.output_dir.join("checkpoint.json");
    agent.save_checkpoint(&checkpoint_path)?;
    let report_path = cfg.output_dir.join("training_report.jsonl");
    report.write_jsonl(std::fs::File::create(&report_path)?)?;
    std::fs::write(cfg.output_dir.join("resolved_config.toml"), cfg.to_toml_string()?)?;

    println!("config digest      {}", cfg.digest()?);
    println!("checkpoint digest  {}", file_digest(&checkpoint_path)?);
    println!("episodes trained   {}", report.episodes.len());
    println!("train steps        {}", agent.step_count());
    if let Some(last) = report.episodes.last() {
        println!("final mean loss    {:.6}", last.mean_loss);
        println!("final epsilon      {:.4}", last.epsilon);
    }
    println!("outputs in         {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_backtest(
    config_path: &Path,
    checkpoint: Option<&Path>,
    policy_arg: PolicyArg,
    episodes: usize,
    jobs: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(config_path, seed, None, out)?;
    let env_cfg = cfg.env_config()?;

    let agent = match (policy_arg, checkpoint) {
        (PolicyArg::Agent, Some(path)) => Some(DqnAgent::load_checkpoint(path)?),
        (PolicyArg::Agent, None) => {
            return Err(Error::validation("--policy agent requires --checkpoint"))
        }
        _ => None,
    };
    if let Some(agent) = &agent {
        let state_len = env_cfg.features.state_len();
        if agent.state_dim() != state_len {
            return Err(Error::validation(format!(
                "checkpoint input dim {} does not match feature state length {state_len}",
                agent.state_dim()
            )));
        }
    }
    let policy = match policy_arg {
        PolicyArg::Agent => Policy::Greedy(agent.as_ref().unwrap()),
        PolicyArg::Random => Policy::Random,
        PolicyArg::Flat => Policy::Flat,
    };

    let (report, ledgers) = evaluate_detailed(&policy, &env_cfg, episodes, cfg.seed, jobs)?;

    std::fs::create_dir_all(&cfg.output_dir)?;
    let report_path = cfg.output_dir.join("evaluation_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
    for (i, ledger) in ledgers.iter().enumerate() {
        let path = cfg.output_dir.join(format!("ledger_{i:04}.csv"));
        ledger.write_csv(std::fs::File::create(path)?)?;
    }

    print_aggregate_table(&report);
    println!("report written to {}", report_path.display());
    Ok(())
}

fn print_aggregate_table(report: &EvaluationReport) {
    let a = &report.aggregate;
    println!("policy             {}", report.policy);
    println!("episodes           {}", report.n_episodes);
    println!("mean total pnl     {:.6}", a.mean_total_pnl);
    println!("std total pnl      {:.6}", a.std_total_pnl);
    println!("stderr total pnl   {:.6}", a.stderr_total_pnl);
    println!("mean risk adjusted {:.6}", a.mean_risk_adjusted);
    println!("mean max drawdown  {:.6}", a.mean_max_drawdown);
    println!("mean turnover      {:.2}", a.mean_turnover);
    println!("mean trades        {:.2}", a.mean_n_trades);
}

fn cmd_simulate_data(config_path: &Path, steps: usize, out: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = load_config(config_path, seed, None, None)?;
    if cfg.env.mode != Mode::Simulate {
        return Err(Error::validation("simulate-data requires a simulate-mode config"));
    }
    let env_cfg = cfg.env_config()?;
    let ou = match env_cfg.data {
        MarketData::Simulate(ou) => ou,
        MarketData::Replay(_) => unreachable!("mode checked above"),
    };

    let mut rng = sub_rng(cfg.seed, "simulate-data");
    let volume_dist = LogNormal::new(0.0, 1.0).expect("valid log-normal");
    let mut bars = Vec::with_capacity(steps);
    let mut level = ou.s0;
    for i in 0..steps {
        let bid = level - env_cfg.half_spread;
        let ask = level + env_cfg.half_spread;
        if bid <= 0.0 {
            return Err(Error::validation(format!(
                "simulated level {level} at step {i} gives non-positive bid; \
                 raise env.ou.mu / env.ou.s0 well above half_spread"
            )));
        }
        let volume = volume_dist.sample(&mut rng);
        bars.push(Bar::new(i as i64, bid, ask, volume)?);
        level = ou_step(level, &ou, &mut rng);
    }

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_bars_csv(std::fs::File::create(out)?, &bars)?;
    println!("wrote {} bars to {}", bars.len(), out.display());
    Ok(())
}

fn cmd_oracle_check() -> Result<()> {
    let report = oracle_check(false)?;
    println!(
        "bellman_gap          {:.3e}  (tolerance {BELLMAN_TOLERANCE:.0e})",
        report.bellman_gap
    );
    println!(
        "gradient_max_rel_err {:.3e}  (tolerance {GRADIENT_TOLERANCE:.0e})",
        report.gradient_max_rel_err
    );
    if report.passed() {
        println!("oracle check: PASS");
        Ok(())
    } else {
        Err(Error::State(format!(
            "oracle check failed: bellman_gap={:.3e}, gradient_max_rel_err={:.3e}",
            report.bellman_gap, report.gradient_max_rel_err
        )))
    }
}
