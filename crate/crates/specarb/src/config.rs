//! Run configuration: a TOML file with nested sections, strict about unknown
//! keys, validated against every domain invariant at load time. A resolved
//! snapshot (all defaults materialized) is written next to every run's
//! outputs so runs can be reproduced from the snapshot alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::DqnConfig;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, Indicator};
use crate::market::{load_bars_csv, EnvConfig, MarketData, OuParams, RewardMode};
use crate::qcore::Hyperparameters;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub alpha: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub warmup: usize,
    pub target_sync_period: usize,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub hidden_layers: Vec<usize>,
    pub episodes: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        let d = DqnConfig::default();
        Self {
            alpha: d.hyper.alpha,
            gamma: d.hyper.gamma,
            lr: d.lr,
            batch_size: d.batch_size,
            warmup: d.warmup,
            target_sync_period: d.target_sync_period,
            replay_capacity: d.replay_capacity,
            epsilon_start: d.hyper.epsilon_start,
            epsilon_end: d.hyper.epsilon_end,
            epsilon_decay_steps: d.hyper.epsilon_decay_steps,
            hidden_layers: vec![64, 64],
            episodes: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub mode: Mode,
    pub half_spread: f64,
    pub fee: f64,
    pub episode_len: usize,
    /// `raw_pnl` or `risk_adjusted`.
    pub reward_mode: String,
    pub risk_window: usize,
    /// Bars CSV for replay mode.
    pub bars_path: Option<PathBuf>,
    pub ou: OuSection,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            mode: Mode::Simulate,
            half_spread: 0.0,
            fee: 0.0,
            episode_len: 200,
            reward_mode: "risk_adjusted".to_string(),
            risk_window: 50,
            bars_path: None,
            ou: OuSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuSection {
    pub mu: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub dt: f64,
    pub s0: f64,
}

impl Default for OuSection {
    fn default() -> Self {
        let d = OuParams::default();
        Self { mu: d.mu, kappa: d.kappa, sigma: d.sigma, dt: d.dt, s0: d.s0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    pub n_returns: usize,
    pub indicators: Vec<String>,
    pub zscore_window: usize,
    pub clamp: f64,
}

impl Default for FeatureSection {
    fn default() -> Self {
        let d = FeatureConfig::default();
        Self {
            n_returns: d.n_returns,
            indicators: d.indicators.iter().map(|i| i.to_string()).collect(),
            zscore_window: d.zscore_window,
            clamp: d.clamp,
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub agent: AgentSection,
    pub env: EnvSection,
    pub features: FeatureSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/out"),
            agent: AgentSection::default(),
            env: EnvSection::default(),
            features: FeatureSection::default(),
        }
    }
}

impl RunConfig {
    /// Parse and fully validate. TOML errors carry line/column diagnostics.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parse(format!("config file {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
            .map_err(|e| Error::parse(format!("{}: {e}", path.display())))
    }

    /// Validate by building every domain config.
    pub fn validate(&self) -> Result<()> {
        self.dqn_config()?;
        self.feature_config()?;
        // Replay-mode bar data is validated when actually loaded; here we
        // check everything that does not require touching the filesystem.
        if self.env.mode == Mode::Replay && self.env.bars_path.is_none() {
            return Err(Error::validation("replay mode requires env.bars_path"));
        }
        if self.env.half_spread < 0.0 || self.env.fee < 0.0 {
            return Err(Error::validation("env costs must be >= 0"));
        }
        if self.env.episode_len == 0 {
            return Err(Error::validation("env.episode_len must be >= 1"));
        }
        if self.env.risk_window == 0 {
            return Err(Error::validation("env.risk_window must be >= 1"));
        }
        self.reward_mode()?;
        self.ou_params().validate()?;
        Ok(())
    }

    pub fn feature_config(&self) -> Result<FeatureConfig> {
        let indicators: Vec<Indicator> = self
            .features
            .indicators
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        let cfg = FeatureConfig {
            n_returns: self.features.n_returns,
            indicators,
            zscore_window: self.features.zscore_window,
            clamp: self.features.clamp,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hyperparameters(&self) -> Result<Hyperparameters> {
        Hyperparameters::new(
            self.agent.alpha,
            self.agent.gamma,
            self.agent.epsilon_start,
            self.agent.epsilon_end,
            self.agent.epsilon_decay_steps,
        )
    }

    pub fn dqn_config(&self) -> Result<DqnConfig> {
        let cfg = DqnConfig {
            hyper: self.hyperparameters()?,
            lr: self.agent.lr,
            batch_size: self.agent.batch_size,
            target_sync_period: self.agent.target_sync_period,
            warmup: self.agent.warmup,
            replay_capacity: self.agent.replay_capacity,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ou_params(&self) -> OuParams {
        OuParams {
            mu: self.env.ou.mu,
            kappa: self.env.ou.kappa,
            sigma: self.env.ou.sigma,
            dt: self.env.ou.dt,
            s0: self.env.ou.s0,
        }
    }

    pub fn reward_mode(&self) -> Result<RewardMode> {
        match self.env.reward_mode.as_str() {
            "raw_pnl" => Ok(RewardMode::RawPnl),
            "risk_adjusted" => Ok(RewardMode::RiskAdjusted { window: self.env.risk_window }),
            other => Err(Error::validation(format!(
                "reward_mode '{other}' (expected raw_pnl or risk_adjusted)"
            ))),
        }
    }

    /// Build the environment config, loading replay bars from disk if needed.
    pub fn env_config(&self) -> Result<EnvConfig> {
        let data = match self.env.mode {
            Mode::Simulate => MarketData::Simulate(self.ou_params()),
            Mode::Replay => {
                let path = self
                    .env
                    .bars_path
                    .as_ref()
                    .ok_or_else(|| Error::validation("replay mode requires env.bars_path"))?;
                MarketData::Replay(load_bars_csv(path)?)
            }
        };
        let cfg = EnvConfig {
            data,
            half_spread: self.env.half_spread,
            fee: self.env.fee,
            episode_len: self.env.episode_len,
            reward_mode: self.reward_mode()?,
            features: self.feature_config()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// MLP layer sizes: state length, hidden layers, 3 actions.
    pub fn layer_sizes(&self) -> Result<Vec<usize>> {
        let features = self.feature_config()?;
        let mut sizes = vec![features.state_len()];
        sizes.extend(&self.agent.hidden_layers);
        sizes.push(crate::market::N_ACTIONS);
        Ok(sizes)
    }

    /// Resolved snapshot with every default materialized.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse(e.to_string()))
    }

    /// SHA-256 over the semantic configuration. The output directory is
    /// excluded so runs into different directories digest identically.
    pub fn digest(&self) -> Result<String> {
        let mut semantic = self.clone();
        semantic.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&semantic)?;
        let mut hasher = Sha256::new();
        hasher.update(&json);
        Ok(hex::encode(hasher.finalize()))
    }
}
