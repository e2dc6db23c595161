//! The trading environment: a simulated mean-reverting spread or replayed
//! historical bars, unit-inventory position accounting, transaction costs,
//! and the step reward.
//!
//! Action semantics: Buy and Sell move the position one unit toward +1 / -1;
//! Hold keeps it. Trades cost `half_spread + fee` per unit. Each step the
//! level advances and mark-to-market pnl accrues to the position held through
//! the move. At the episode horizon the position is force-flattened.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{assemble_state, validate_bar_series, Bar, FeatureConfig, StateVector, SIGMA_FLOOR};
use crate::rng::sub_rng;

/// Discrete Ornstein-Uhlenbeck (AR(1)) parameters for the simulated spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Long-run mean.
    pub mu: f64,
    /// Reversion rate per unit time, >= 0.
    pub kappa: f64,
    /// Diffusion coefficient, >= 0.
    pub sigma: f64,
    /// Step size, > 0. Stability requires kappa * dt <= 1.
    pub dt: f64,
    /// Initial level.
    pub s0: f64,
}

impl OuParams {
    pub fn validate(&self) -> Result<()> {
        let all_finite = self.mu.is_finite()
            && self.kappa.is_finite()
            && self.sigma.is_finite()
            && self.dt.is_finite()
            && self.s0.is_finite();
        if !all_finite {
            return Err(Error::validation("OU parameters must be finite"));
        }
        if self.kappa < 0.0 || self.sigma < 0.0 || self.dt <= 0.0 {
            return Err(Error::validation(
                "OU requires kappa >= 0, sigma >= 0, dt > 0",
            ));
        }
        if self.kappa * self.dt > 1.0 {
            return Err(Error::validation(format!(
                "kappa * dt = {} > 1 is unstable for this discretization",
                self.kappa * self.dt
            )));
        }
        Ok(())
    }

    /// Stationary variance of the discrete scheme,
    /// `sigma^2 dt / (2 kappa dt - (kappa dt)^2)`.
    pub fn stationary_variance(&self) -> f64 {
        let kdt = self.kappa * self.dt;
        self.sigma * self.sigma * self.dt / (2.0 * kdt - kdt * kdt)
    }
}

impl Default for OuParams {
    fn default() -> Self {
        Self { mu: 0.0, kappa: 0.1, sigma: 0.435_889_894_354_067_4, dt: 1.0, s0: 0.0 }
    }
}

/// One Euler step of the OU spread:
/// `level' = level + kappa (mu - level) dt + sigma sqrt(dt) z`.
pub fn ou_step<R: Rng + ?Sized>(level: f64, p: &OuParams, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    level + p.kappa * (p.mu - level) * p.dt + p.sigma * p.dt.sqrt() * z
}

/// Trading decision. Index order matters: ties in greedy action selection
/// resolve to the lowest index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Buy,
    Hold,
    Sell,
}

pub const N_ACTIONS: usize = 3;

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::Buy => 0,
            Action::Hold => 1,
            Action::Sell => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Action::Buy),
            1 => Ok(Action::Hold),
            2 => Ok(Action::Sell),
            _ => Err(Error::index(format!("action index {i} not in 0..3"))),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Buy => "buy",
            Action::Hold => "hold",
            Action::Sell => "sell",
        };
        f.write_str(s)
    }
}

/// How the per-step reward is derived from step pnl.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RewardMode {
    RawPnl,
    /// Mean over sigma of the trailing `window` step pnls.
    RiskAdjusted { window: usize },
}

/// Price source for the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MarketData {
    Simulate(OuParams),
    Replay(Vec<Bar>),
}

/// Full environment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub data: MarketData,
    /// Cost per traded unit from crossing half the quoted spread.
    pub half_spread: f64,
    /// Fixed cost per traded unit.
    pub fee: f64,
    /// Episode horizon T.
    pub episode_len: usize,
    pub reward_mode: RewardMode,
    pub features: FeatureConfig,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.half_spread < 0.0 || self.fee < 0.0 {
            return Err(Error::validation("costs must be >= 0"));
        }
        if self.episode_len == 0 {
            return Err(Error::validation("episode_len must be >= 1"));
        }
        if let RewardMode::RiskAdjusted { window } = self.reward_mode {
            if window == 0 {
                return Err(Error::validation("risk window must be >= 1"));
            }
        }
        self.features.validate()?;
        match &self.data {
            MarketData::Simulate(ou) => ou.validate(),
            MarketData::Replay(bars) => {
                validate_bar_series(bars)?;
                let need = self.features.min_price_len() + self.episode_len;
                if bars.len() < need {
                    return Err(Error::warmup(format!(
                        "replay needs {need} bars (feature warm-up {} + episode {}), got {}",
                        self.features.min_price_len(),
                        self.episode_len,
                        bars.len()
                    )));
                }
                Ok(())
            }
        }
    }
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            data: MarketData::Simulate(OuParams::default()),
            half_spread: 0.0,
            fee: 0.0,
            episode_len: 200,
            reward_mode: RewardMode::RiskAdjusted { window: 50 },
            features: FeatureConfig::default(),
        }
    }
}

/// What happened during one environment step; doubles as a ledger row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub action: Action,
    /// Units traded this step, including any terminal flatten.
    pub trade_qty: u32,
    /// Level at which the action's trade executed (pre-advance).
    pub price_level: f64,
    pub cost: f64,
    pub step_pnl: f64,
    pub position_after: i32,
}

/// Mean over floored population sigma of the trailing step-pnl window.
pub fn risk_adjusted_reward(pnl_window: &[f64]) -> f64 {
    if pnl_window.is_empty() {
        return 0.0;
    }
    let n = pnl_window.len() as f64;
    let mean = pnl_window.iter().sum::<f64>() / n;
    let var = pnl_window.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    mean / var.sqrt().max(SIGMA_FLOOR)
}

/// The market environment for one episode runner.
#[derive(Debug, Clone)]
pub struct MarketEnv {
    cfg: EnvConfig,
    rng: ChaCha8Rng,
    t: usize,
    position: i32,
    cash: f64,
    pnl_history: Vec<f64>,
    prices: Vec<f64>,
    volumes: Vec<f64>,
    spreads: Vec<f64>,
    /// Next bar to consume in replay mode.
    replay_cursor: usize,
    done: bool,
    last_record: Option<StepRecord>,
    volume_dist: LogNormal<f64>,
}

/// Build an environment and its first observation. Fully determined by
/// `(cfg, seed)`.
pub fn env_reset(cfg: &EnvConfig, seed: u64) -> Result<(MarketEnv, StateVector)> {
    cfg.validate()?;
    let mut env = MarketEnv {
        cfg: cfg.clone(),
        rng: sub_rng(seed, "market"),
        t: 0,
        position: 0,
        cash: 0.0,
        pnl_history: Vec::with_capacity(cfg.episode_len),
        prices: Vec::new(),
        volumes: Vec::new(),
        spreads: Vec::new(),
        replay_cursor: 0,
        done: false,
        last_record: None,
        volume_dist: LogNormal::new(0.0, 1.0).expect("valid log-normal"),
    };
    let warmup = cfg.features.min_price_len();
    match &cfg.data {
        MarketData::Simulate(ou) => {
            let mut level = ou.s0;
            for _ in 0..warmup {
                env.push_simulated_point(level);
                level = ou_step(level, ou, &mut env.rng);
            }
        }
        MarketData::Replay(bars) => {
            for bar in &bars[..warmup] {
                env.prices.push(bar.mid());
                env.volumes.push(bar.volume);
                env.spreads.push(bar.spread());
            }
            env.replay_cursor = warmup;
        }
    }
    let state = env.observe()?;
    Ok((env, state))
}

impl MarketEnv {
    fn push_simulated_point(&mut self, level: f64) {
        self.prices.push(level);
        self.volumes.push(self.volume_dist.sample(&mut self.rng));
        self.spreads.push(2.0 * self.cfg.half_spread);
    }

    fn observe(&self) -> Result<StateVector> {
        match &self.cfg.data {
            MarketData::Simulate(_) => {
                // The spread level itself feeds returns/indicators; it can be
                // negative, so shift it into positive territory around a base
                // of 100 for the log-return computation. The shift cancels in
                // every difference-based feature and z-scoring removes the
                // rest.
                let shifted: Vec<f64> = self.prices.iter().map(|p| p + 100.0).collect();
                if shifted.iter().any(|&p| p <= 0.0) {
                    return Err(Error::validation(
                        "simulated level drifted below -100; re-center ou.mu near 0",
                    ));
                }
                assemble_state(&shifted, &self.volumes, &self.spreads, &self.cfg.features)
            }
            MarketData::Replay(_) => {
                assemble_state(&self.prices, &self.volumes, &self.spreads, &self.cfg.features)
            }
        }
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn position(&self) -> i32 {
        self.position
    }

    pub fn cash(&self) -> f64 {
        self.cash
    }

    pub fn level(&self) -> f64 {
        *self.prices.last().unwrap()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn last_record(&self) -> Option<&StepRecord> {
        self.last_record.as_ref()
    }

    /// Advance one step: trade toward the action's target position at the
    /// current level, advance the level, accrue mark-to-market pnl, and
    /// force-flatten at the horizon.
    pub fn env_step(&mut self, action: Action) -> Result<(StateVector, f64, bool)> {
        if self.done {
            return Err(Error::state("env_step called after terminal step"));
        }
        let unit_cost = self.cfg.half_spread + self.cfg.fee;
        let target = match action {
            Action::Buy => (self.position + 1).min(1),
            Action::Hold => self.position,
            Action::Sell => (self.position - 1).max(-1),
        };
        let trade = target - self.position;
        let mut qty = trade.unsigned_abs();
        let mut cost = qty as f64 * unit_cost;
        let level_before = self.level();
        // Trade cashflow: pay level per unit bought, receive per unit sold.
        self.cash -= trade as f64 * level_before + cost;
        self.position = target;

        // Level advances; the post-trade position rides the move.
        match &self.cfg.data {
            MarketData::Simulate(ou) => {
                let ou = *ou;
                let next = ou_step(level_before, &ou, &mut self.rng);
                self.push_simulated_point(next);
            }
            MarketData::Replay(bars) => {
                let bar = bars[self.replay_cursor];
                self.replay_cursor += 1;
                self.prices.push(bar.mid());
                self.volumes.push(bar.volume);
                self.spreads.push(bar.spread());
            }
        }
        let level_after = self.level();
        let mut step_pnl = self.position as f64 * (level_after - level_before) - cost;

        self.t += 1;
        let horizon = self.t >= self.cfg.episode_len;
        if horizon {
            let flat_qty = self.position.unsigned_abs();
            let flat_cost = flat_qty as f64 * unit_cost;
            self.cash += self.position as f64 * level_after - flat_cost;
            self.position = 0;
            step_pnl -= flat_cost;
            qty += flat_qty;
            cost += flat_cost;
            self.done = true;
        }

        self.pnl_history.push(step_pnl);
        let reward = match self.cfg.reward_mode {
            RewardMode::RawPnl => step_pnl,
            RewardMode::RiskAdjusted { window } => {
                let n = self.pnl_history.len();
                risk_adjusted_reward(&self.pnl_history[n.saturating_sub(window)..])
            }
        };

        self.last_record = Some(StepRecord {
            t: self.t - 1,
            action,
            trade_qty: qty,
            price_level: level_before,
            cost,
            step_pnl,
            position_after: self.position,
        });

        let state = self.observe()?;
        Ok((state, reward, self.done))
    }
}

// ---------------------------------------------------------------------------
// Bar CSV I/O: header `timestamp,bid,ask,volume`, malformed rows are hard
// errors carrying their line number.
// ---------------------------------------------------------------------------

pub const BAR_CSV_HEADER: &str = "timestamp,bid,ask,volume";

pub fn read_bars_csv<R: std::io::Read>(reader: R) -> Result<Vec<Bar>> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("empty CSV: missing header"))??;
    if header.trim_end() != BAR_CSV_HEADER {
        return Err(Error::parse(format!(
            "line 1: expected header '{BAR_CSV_HEADER}', got '{header}'"
        )));
    }
    let mut bars = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            return Err(Error::parse(format!("line {line_no}: blank line")));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(format!(
                "line {line_no}: expected 4 fields, got {}",
                fields.len()
            )));
        }
        let parse_f = |s: &str, name: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::parse(format!("line {line_no}: bad {name} '{s}'")))
        };
        let timestamp: i64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(format!("line {line_no}: bad timestamp '{}'", fields[0])))?;
        let bar = Bar::new(
            timestamp,
            parse_f(fields[1], "bid")?,
            parse_f(fields[2], "ask")?,
            parse_f(fields[3], "volume")?,
        )
        .map_err(|e| Error::parse(format!("line {line_no}: {e}")))?;
        if let Some(prev) = bars.last() {
            let prev: &Bar = prev;
            if bar.timestamp <= prev.timestamp {
                return Err(Error::parse(format!(
                    "line {line_no}: timestamp {} not strictly increasing",
                    bar.timestamp
                )));
            }
        }
        bars.push(bar);
    }
    Ok(bars)
}

pub fn load_bars_csv(path: impl AsRef<Path>) -> Result<Vec<Bar>> {
    let file = std::fs::File::open(&path)?;
    read_bars_csv(file)
}

pub fn write_bars_csv<W: Write>(mut writer: W, bars: &[Bar]) -> Result<()> {
    writeln!(writer, "{BAR_CSV_HEADER}")?;
    for bar in bars {
        writeln!(writer, "{},{},{},{}", bar.timestamp, bar.bid, bar.ask, bar.volume)?;
    }
    Ok(())
}
