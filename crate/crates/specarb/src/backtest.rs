//! Episode execution against frozen policies, trade ledgering, and
//! performance metrics.
//!
//! Evaluation is paired-seed friendly: the environment path is a function of
//! (config, episode seed) alone, while policy randomness draws from its own
//! sub-stream, so different policies see identical price paths.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{ActMode, DqnAgent};
use crate::error::{Error, Result};
use crate::features::{StateVector, SIGMA_FLOOR};
use crate::market::{env_reset, Action, EnvConfig, StepRecord};
use crate::rng::sub_rng;

/// A frozen policy under evaluation. Agents act greedily (ε = 0).
#[derive(Clone)]
pub enum Policy<'a> {
    Greedy(&'a DqnAgent),
    Random,
    /// Always Hold; from a flat start it never trades.
    Flat,
}

impl Policy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Greedy(_) => "agent",
            Policy::Random => "random",
            Policy::Flat => "flat",
        }
    }

    fn select(&self, state: &StateVector, rng: &mut ChaCha8Rng) -> Result<Action> {
        let idx = match self {
            Policy::Greedy(agent) => agent.act(state, ActMode::Greedy, rng)?,
            Policy::Random => rng.random_range(0..crate::market::N_ACTIONS),
            Policy::Flat => Action::Hold.index(),
        };
        Action::from_index(idx)
    }
}

/// Every step of one evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub episode_seed: u64,
    pub entries: Vec<StepRecord>,
}

impl Ledger {
    /// CSV export: `t,action,qty,level,cost,step_pnl,position`.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "t,action,qty,level,cost,step_pnl,position")?;
        for e in &self.entries {
            writeln!(
                writer,
                "{},{},{},{},{},{},{}",
                e.t, e.action, e.trade_qty, e.price_level, e.cost, e.step_pnl, e.position_after
            )?;
        }
        Ok(())
    }
}

/// Episode-level performance statistics, a pure function of the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total_pnl: f64,
    pub mean_step_pnl: f64,
    /// Mean over floored population sigma of the step pnls.
    pub risk_adjusted: f64,
    /// Most negative peak-to-trough of cumulative pnl; always <= 0.
    pub max_drawdown: f64,
    /// Total traded quantity.
    pub turnover: f64,
    /// Number of steps on which any quantity traded.
    pub n_trades: usize,
}

/// Run one full episode with no learning, recording every step.
pub fn run_episode(policy: &Policy, env_cfg: &EnvConfig, seed: u64) -> Result<Ledger> {
    if let Policy::Greedy(agent) = policy {
        let state_len = env_cfg.features.state_len();
        if agent.state_dim() != state_len {
            return Err(Error::validation(format!(
                "agent input dim {} does not match feature state length {state_len}",
                agent.state_dim()
            )));
        }
    }
    let (mut env, mut state) = env_reset(env_cfg, seed)?;
    let mut policy_rng = sub_rng(seed, "policy");
    let mut entries = Vec::with_capacity(env_cfg.episode_len);
    loop {
        let action = policy.select(&state, &mut policy_rng)?;
        let (next_state, _reward, terminal) = env.env_step(action)?;
        entries.push(*env.last_record().expect("record exists after a step"));
        state = next_state;
        if terminal {
            break;
        }
    }
    Ok(Ledger { episode_seed: seed, entries })
}

/// Totals and ratios over one ledger.
pub fn compute_metrics(ledger: &Ledger) -> Result<Metrics> {
    if ledger.entries.is_empty() {
        return Err(Error::validation("compute_metrics on empty ledger"));
    }
    let pnls: Vec<f64> = ledger.entries.iter().map(|e| e.step_pnl).collect();
    let n = pnls.len() as f64;
    let total_pnl: f64 = pnls.iter().sum();
    let mean = total_pnl / n;
    let var = pnls.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let risk_adjusted = mean / var.sqrt().max(SIGMA_FLOOR);

    // Peak-to-trough on the cumulative curve, with the flat start at 0
    // counting as a peak.
    let mut cum = 0.0f64;
    let mut peak = 0.0f64;
    let mut max_drawdown = 0.0f64;
    for p in &pnls {
        cum += p;
        peak = peak.max(cum);
        max_drawdown = max_drawdown.min(cum - peak);
    }

    Ok(Metrics {
        total_pnl,
        mean_step_pnl: mean,
        risk_adjusted,
        max_drawdown,
        turnover: ledger.entries.iter().map(|e| e.trade_qty as f64).sum(),
        n_trades: ledger.entries.iter().filter(|e| e.trade_qty > 0).count(),
    })
}

/// Aggregate statistics over per-episode metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_total_pnl: f64,
    /// Population sigma of per-episode total pnl.
    pub std_total_pnl: f64,
    /// Standard error of the mean: sigma / sqrt(n).
    pub stderr_total_pnl: f64,
    pub mean_risk_adjusted: f64,
    pub mean_max_drawdown: f64,
    pub mean_turnover: f64,
    pub mean_n_trades: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_digest: String,
    pub policy: String,
    pub n_episodes: usize,
    pub per_episode: Vec<Metrics>,
    pub aggregate: Aggregate,
}

/// SHA-256 of the canonical JSON serialization of the environment config.
pub fn config_digest(cfg: &EnvConfig) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    let mut hasher = Sha256::new();
    hasher.update(&json);
    Ok(hex::encode(hasher.finalize()))
}

fn aggregate(per_episode: &[Metrics]) -> Aggregate {
    let n = per_episode.len() as f64;
    let totals: Vec<f64> = per_episode.iter().map(|m| m.total_pnl).collect();
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    Aggregate {
        mean_total_pnl: mean,
        std_total_pnl: std,
        stderr_total_pnl: std / n.sqrt(),
        mean_risk_adjusted: per_episode.iter().map(|m| m.risk_adjusted).sum::<f64>() / n,
        mean_max_drawdown: per_episode.iter().map(|m| m.max_drawdown).sum::<f64>() / n,
        mean_turnover: per_episode.iter().map(|m| m.turnover).sum::<f64>() / n,
        mean_n_trades: per_episode.iter().map(|m| m.n_trades as f64).sum::<f64>() / n,
    }
}

/// Evaluate a policy over `n_episodes` episodes seeded `seed + i`, returning
/// the report and the raw ledgers. Episodes run in parallel on up to `jobs`
/// threads (0 = one per core); results fold in episode-index order either
/// way.
pub fn evaluate_detailed(
    policy: &Policy,
    env_cfg: &EnvConfig,
    n_episodes: usize,
    seed: u64,
    jobs: usize,
) -> Result<(EvaluationReport, Vec<Ledger>)> {
    if n_episodes == 0 {
        return Err(Error::validation("n_episodes must be >= 1"));
    }
    env_cfg.validate()?;

    let run_all = || -> Result<Vec<Ledger>> {
        use rayon::prelude::*;
        (0..n_episodes)
            .into_par_iter()
            .map(|i| run_episode(policy, env_cfg, seed.wrapping_add(i as u64)))
            .collect()
    };
    let ledgers = if jobs == 1 {
        (0..n_episodes)
            .map(|i| run_episode(policy, env_cfg, seed.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::State(format!("thread pool: {e}")))?;
        pool.install(run_all)?
    };

    let per_episode = ledgers.iter().map(compute_metrics).collect::<Result<Vec<_>>>()?;
    let report = EvaluationReport {
        config_digest: config_digest(env_cfg)?,
        policy: policy.name().to_string(),
        n_episodes,
        aggregate: aggregate(&per_episode),
        per_episode,
    };
    Ok((report, ledgers))
}

/// [`evaluate_detailed`] without the ledgers.
pub fn evaluate(
    policy: &Policy,
    env_cfg: &EnvConfig,
    n_episodes: usize,
    seed: u64,
    jobs: usize,
) -> Result<EvaluationReport> {
    Ok(evaluate_detailed(policy, env_cfg, n_episodes, seed, jobs)?.0)
}
