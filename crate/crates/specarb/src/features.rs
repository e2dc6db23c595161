//! Technical indicators and state-vector assembly.
//!
//! The agent's observation is the concatenation
//! `[log returns ..., indicator values ..., volume, bid-ask spread]`,
//! z-scored per coordinate against its own rolling window and clamped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to every standard deviation used for normalization, so a
/// zero-variance window normalizes to 0 instead of dividing by zero.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// One market bar: quote pair plus traded volume at a timestamp
/// (epoch microseconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub timestamp: i64,
    pub bid: f64,
    pub ask: f64,
    pub volume: f64,
}

impl Bar {
    pub fn new(timestamp: i64, bid: f64, ask: f64, volume: f64) -> Result<Self> {
        let bar = Self { timestamp, bid, ask, volume };
        bar.validate()?;
        Ok(bar)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bid.is_finite() && self.ask.is_finite() && self.volume.is_finite()) {
            return Err(Error::validation("bar has non-finite fields"));
        }
        if self.bid <= 0.0 || self.ask < self.bid {
            return Err(Error::validation(format!(
                "bar requires ask >= bid > 0, got bid={} ask={}",
                self.bid, self.ask
            )));
        }
        if self.volume < 0.0 {
            return Err(Error::validation(format!("negative volume {}", self.volume)));
        }
        Ok(())
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }

    pub fn spread(&self) -> f64 {
        self.ask - self.bid
    }
}

/// Check a bar series: each bar valid, timestamps strictly increasing.
pub fn validate_bar_series(bars: &[Bar]) -> Result<()> {
    for (i, bar) in bars.iter().enumerate() {
        bar.validate()
            .map_err(|e| Error::validation(format!("bar {i}: {e}")))?;
        if i > 0 && bar.timestamp <= bars[i - 1].timestamp {
            return Err(Error::validation(format!(
                "bar {i}: timestamp {} not strictly after {}",
                bar.timestamp,
                bars[i - 1].timestamp
            )));
        }
    }
    Ok(())
}

/// A technical indicator with its window parameters.
///
/// Text form (used in config files): `sma:10`, `ema:10`, `bollinger:20:2`,
/// `rsi:14`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Indicator {
    Sma { window: usize },
    Ema { window: usize },
    /// Upper and lower band: window mean ± k · population sigma.
    Bollinger { window: usize, k: f64 },
    Rsi { window: usize },
}

impl Indicator {
    pub fn window(&self) -> usize {
        match *self {
            Indicator::Sma { window }
            | Indicator::Ema { window }
            | Indicator::Bollinger { window, .. }
            | Indicator::Rsi { window } => window,
        }
    }

    /// Number of values this indicator contributes to the state.
    pub fn output_len(&self) -> usize {
        match self {
            Indicator::Bollinger { .. } => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window() < 2 {
            return Err(Error::validation(format!("indicator window must be >= 2: {self}")));
        }
        if let Indicator::Bollinger { k, .. } = self {
            if !k.is_finite() || *k < 0.0 {
                return Err(Error::validation(format!("bollinger k must be finite and >= 0, got {k}")));
            }
        }
        Ok(())
    }

    /// Evaluate on a price series ending "now". SMA, Bollinger, and RSI look
    /// at the trailing `window` prices; EMA recurses over the whole series
    /// seeded by its first value with smoothing 2/(window+1).
    pub fn compute(&self, prices: &[f64]) -> Result<Vec<f64>> {
        if prices.len() < self.window() {
            return Err(Error::warmup(format!(
                "{self} needs {} prices, got {}",
                self.window(),
                prices.len()
            )));
        }
        Ok(match *self {
            Indicator::Sma { window } => {
                vec![mean(&prices[prices.len() - window..])]
            }
            Indicator::Ema { window } => {
                let alpha = 2.0 / (window as f64 + 1.0);
                let mut ema = prices[0];
                for &p in &prices[1..] {
                    // Incremental form: exact on constant series.
                    ema += alpha * (p - ema);
                }
                vec![ema]
            }
            Indicator::Bollinger { window, k } => {
                let tail = &prices[prices.len() - window..];
                let m = mean(tail);
                let sd = population_std(tail, m);
                vec![m + k * sd, m - k * sd]
            }
            Indicator::Rsi { window } => {
                let tail = &prices[prices.len() - window..];
                let mut gain = 0.0;
                let mut loss = 0.0;
                for pair in tail.windows(2) {
                    let d = pair[1] - pair[0];
                    if d > 0.0 {
                        gain += d;
                    } else {
                        loss -= d;
                    }
                }
                let n = (window - 1) as f64;
                let mean_gain = gain / n;
                let mean_loss = loss / n;
                let rsi = if mean_gain == 0.0 && mean_loss == 0.0 {
                    50.0
                } else if mean_loss == 0.0 {
                    100.0
                } else {
                    100.0 - 100.0 / (1.0 + mean_gain / mean_loss)
                };
                vec![rsi]
            }
        })
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Indicator::Sma { window } => write!(f, "sma:{window}"),
            Indicator::Ema { window } => write!(f, "ema:{window}"),
            Indicator::Bollinger { window, k } => write!(f, "bollinger:{window}:{k}"),
            Indicator::Rsi { window } => write!(f, "rsi:{window}"),
        }
    }
}

impl FromStr for Indicator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let window = |idx: usize| -> Result<usize> {
            parts
                .get(idx)
                .ok_or_else(|| Error::parse(format!("indicator '{s}' is missing its window")))?
                .parse()
                .map_err(|_| Error::parse(format!("indicator '{s}' has a bad window")))
        };
        let ind = match parts[0] {
            "sma" if parts.len() == 2 => Indicator::Sma { window: window(1)? },
            "ema" if parts.len() == 2 => Indicator::Ema { window: window(1)? },
            "rsi" if parts.len() == 2 => Indicator::Rsi { window: window(1)? },
            "bollinger" if parts.len() == 3 => {
                let k: f64 = parts[2]
                    .parse()
                    .map_err(|_| Error::parse(format!("indicator '{s}' has a bad k")))?;
                Indicator::Bollinger { window: window(1)?, k }
            }
            _ => {
                return Err(Error::parse(format!(
                    "unknown indicator '{s}' (expected sma:W, ema:W, bollinger:W:K, rsi:W)"
                )))
            }
        };
        ind.validate()?;
        Ok(ind)
    }
}

impl Serialize for Indicator {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Indicator {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Shape of the observation: how many returns, which indicators, and the
/// rolling z-score window / clamp used for normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_returns: usize,
    pub indicators: Vec<Indicator>,
    pub zscore_window: usize,
    pub clamp: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_returns: 8,
            indicators: vec![
                Indicator::Sma { window: 10 },
                Indicator::Ema { window: 10 },
                Indicator::Bollinger { window: 20, k: 2.0 },
                Indicator::Rsi { window: 14 },
            ],
            zscore_window: 50,
            clamp: 5.0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        for ind in &self.indicators {
            ind.validate()?;
        }
        if self.zscore_window < 2 {
            return Err(Error::validation("zscore_window must be >= 2"));
        }
        if !self.clamp.is_finite() || self.clamp <= 0.0 {
            return Err(Error::validation(format!("clamp must be finite and > 0, got {}", self.clamp)));
        }
        Ok(())
    }

    /// Total state length: n returns + indicator outputs + volume + spread.
    pub fn state_len(&self) -> usize {
        self.n_returns + self.indicator_len() + 2
    }

    pub fn indicator_len(&self) -> usize {
        self.indicators.iter().map(Indicator::output_len).sum()
    }

    /// Prices needed to evaluate one raw feature vector.
    pub fn lookback(&self) -> usize {
        let mut need = self.n_returns + 1;
        for ind in &self.indicators {
            need = need.max(ind.window());
        }
        need.max(2)
    }

    /// Prices needed by [`assemble_state`]: one raw vector per slot of the
    /// z-score window, each with full lookback.
    pub fn min_price_len(&self) -> usize {
        self.lookback() + self.zscore_window - 1
    }
}

/// The agent's observation. Finite by construction, fixed length for a
/// fixed [`FeatureConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector {
    values: Vec<f64>,
}

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("state vector must be non-empty and finite"));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Log returns `ln(p_t / p_{t-1})` for the `n` most recent steps, most
/// recent first.
pub fn log_returns(prices: &[f64], n: usize) -> Result<Vec<f64>> {
    if prices.len() < n + 1 {
        return Err(Error::warmup(format!(
            "log_returns needs {} prices for {n} returns, got {}",
            n + 1,
            prices.len()
        )));
    }
    if prices.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::validation("prices must be positive and finite"));
    }
    let t = prices.len() - 1;
    Ok((0..n).map(|i| (prices[t - i] / prices[t - i - 1]).ln()).collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64], mean: f64) -> f64 {
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    var.sqrt()
}

/// Raw (unnormalized) feature vector at the end of the given series.
fn raw_features(prices: &[f64], volume: f64, spread: f64, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(cfg.state_len());
    out.extend(log_returns(prices, cfg.n_returns)?);
    for ind in &cfg.indicators {
        out.extend(ind.compute(prices)?);
    }
    out.push(volume);
    out.push(spread);
    Ok(out)
}

/// Assemble the current observation from aligned series of prices, volumes,
/// and spreads (last element = now).
///
/// Each coordinate is z-scored against its own values over the trailing
/// `zscore_window` time steps (population sigma, floored at
/// [`SIGMA_FLOOR`]) and clamped to ±`clamp`.
pub fn assemble_state(
    prices: &[f64],
    volumes: &[f64],
    spreads: &[f64],
    cfg: &FeatureConfig,
) -> Result<StateVector> {
    cfg.validate()?;
    let w = cfg.zscore_window;
    if prices.len() < cfg.min_price_len() {
        return Err(Error::warmup(format!(
            "assemble_state needs {} prices, got {}",
            cfg.min_price_len(),
            prices.len()
        )));
    }
    if volumes.len() < w || spreads.len() < w {
        return Err(Error::warmup(format!(
            "assemble_state needs {w} volumes and spreads, got {} and {}",
            volumes.len(),
            spreads.len()
        )));
    }

    // One raw vector per z-score slot; index 0 is "now".
    let dim = cfg.state_len();
    let mut window = Vec::with_capacity(w);
    for j in 0..w {
        let p_end = prices.len() - j;
        let v = volumes[volumes.len() - 1 - j];
        let s = spreads[spreads.len() - 1 - j];
        window.push(raw_features(&prices[..p_end], v, s, cfg)?);
    }

    let current = &window[0];
    let mut values = Vec::with_capacity(dim);
    for k in 0..dim {
        let col: Vec<f64> = window.iter().map(|row| row[k]).collect();
        let m = mean(&col);
        let sd = population_std(&col, m).max(SIGMA_FLOOR);
        let z = (current[k] - m) / sd;
        values.push(z.clamp(-cfg.clamp, cfg.clamp));
    }
    StateVector::new(values)
}

/// [`assemble_state`] over a bar series: indicator prices are mids,
/// volume and spread come straight from the bars.
pub fn assemble_state_from_bars(bars: &[Bar], cfg: &FeatureConfig) -> Result<StateVector> {
    let prices: Vec<f64> = bars.iter().map(Bar::mid).collect();
    let volumes: Vec<f64> = bars.iter().map(|b| b.volume).collect();
    let spreads: Vec<f64> = bars.iter().map(Bar::spread).collect();
    assemble_state(&prices, &volumes, &spreads, cfg)
}
