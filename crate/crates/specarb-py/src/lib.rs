//! Python bindings for the specarb engine.
//!
//! Exposes the main types (MLP, replay buffer, market environment, DQN
//! agent) and operations (indicators, value iteration, training,
//! evaluation) as the `specarb_py` extension module. See
//! `python/smoke_test.py` for usage.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use specarb::agent::{self, ActMode};
use specarb::backtest::{self, Policy};
use specarb::config::RunConfig;
use specarb::error::Error;
use specarb::features::{self, Indicator, StateVector};
use specarb::market::{self, Action, EnvConfig};
use specarb::neural;
use specarb::qcore;
use specarb::replay;
use specarb::rng::sub_rng;
use specarb::selfcheck;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Validation(_) | Error::Index(_) | Error::Parse(_) | Error::Warmup(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn state_vector(values: Vec<f64>) -> PyResult<StateVector> {
    StateVector::new(values).map_err(to_py_err)
}

// ---------------------------------------------------------------------------
// Mlp
// ---------------------------------------------------------------------------

/// Feed-forward MLP with rectifier hidden layers and a linear output.
#[pyclass]
struct Mlp {
    inner: neural::Mlp,
}

#[pymethods]
impl Mlp {
    /// Fresh network with seeded uniform weights and zero biases.
    #[staticmethod]
    fn init(layer_sizes: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: neural::init_weights(&layer_sizes, seed).map_err(to_py_err)? })
    }

    fn layer_sizes(&self) -> Vec<usize> {
        self.inner.layer_sizes().to_vec()
    }

    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    fn forward(&self, input: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&input).map_err(to_py_err)
    }

    fn save(&self, path: &str, step_count: usize) -> PyResult<()> {
        self.inner.save(path, step_count).map_err(to_py_err)
    }

    /// Returns (network, step_count).
    #[staticmethod]
    fn load(path: &str) -> PyResult<(Mlp, usize)> {
        let (inner, steps) = neural::Mlp::load(path).map_err(to_py_err)?;
        Ok((Mlp { inner }, steps))
    }
}

// ---------------------------------------------------------------------------
// ReplayBuffer
// ---------------------------------------------------------------------------

type ExperienceTuple = (Vec<f64>, usize, f64, Vec<f64>, bool);

/// Fixed-capacity FIFO experience store with uniform sampling.
#[pyclass]
struct ReplayBuffer {
    inner: replay::ReplayBuffer,
}

#[pymethods]
impl ReplayBuffer {
    #[new]
    fn new(capacity: usize) -> PyResult<Self> {
        Ok(Self { inner: replay::ReplayBuffer::new(capacity).map_err(to_py_err)? })
    }

    fn push(
        &mut self,
        state: Vec<f64>,
        action: usize,
        reward: f64,
        next_state: Vec<f64>,
        terminal: bool,
    ) -> PyResult<()> {
        let e = replay::Experience::new(
            state_vector(state)?,
            action,
            reward,
            state_vector(next_state)?,
            terminal,
        )
        .map_err(to_py_err)?;
        self.inner.push(e);
        Ok(())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn capacity(&self) -> usize {
        self.inner.capacity()
    }

    /// `batch_size` uniform draws with replacement, deterministic in `seed`.
    fn sample(&self, batch_size: usize, seed: u64) -> PyResult<Vec<ExperienceTuple>> {
        let mut rng = sub_rng(seed, "py-sample");
        let batch = self.inner.sample_uniform(batch_size, &mut rng).map_err(to_py_err)?;
        Ok(batch
            .into_iter()
            .map(|e| {
                (
                    e.state.into_vec(),
                    e.action,
                    e.reward,
                    e.next_state.into_vec(),
                    e.terminal,
                )
            })
            .collect())
    }

    /// Stored experiences oldest-first (debug aid).
    fn contents(&self) -> Vec<ExperienceTuple> {
        self.inner
            .iter_in_order()
            .map(|e| {
                (
                    e.state.clone().into_vec(),
                    e.action,
                    e.reward,
                    e.next_state.clone().into_vec(),
                    e.terminal,
                )
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// MarketEnv
// ---------------------------------------------------------------------------

/// Simulated or replayed spread market with position and cost accounting.
///
/// Build from a run-config TOML string, then `reset(seed)` before stepping.
/// Actions: 0 = buy, 1 = hold, 2 = sell.
#[pyclass]
struct MarketEnv {
    cfg: EnvConfig,
    inner: Option<market::MarketEnv>,
}

impl MarketEnv {
    fn env(&self) -> PyResult<&market::MarketEnv> {
        self.inner
            .as_ref()
            .ok_or_else(|| PyRuntimeError::new_err("environment not reset yet"))
    }
}

#[pymethods]
impl MarketEnv {
    #[staticmethod]
    fn from_config(config_toml: &str) -> PyResult<Self> {
        let run_cfg = RunConfig::from_toml_str(config_toml).map_err(to_py_err)?;
        Ok(Self { cfg: run_cfg.env_config().map_err(to_py_err)?, inner: None })
    }

    fn state_dim(&self) -> usize {
        self.cfg.features.state_len()
    }

    fn n_actions(&self) -> usize {
        market::N_ACTIONS
    }

    /// Start a fresh episode; returns the first observation.
    fn reset(&mut self, seed: u64) -> PyResult<Vec<f64>> {
        let (env, state) = market::env_reset(&self.cfg, seed).map_err(to_py_err)?;
        self.inner = Some(env);
        Ok(state.into_vec())
    }

    /// Returns (state, reward, terminal).
    fn step(&mut self, action: usize) -> PyResult<(Vec<f64>, f64, bool)> {
        let env = self
            .inner
            .as_mut()
            .ok_or_else(|| PyRuntimeError::new_err("environment not reset yet"))?;
        let a = Action::from_index(action).map_err(to_py_err)?;
        let (state, reward, terminal) = env.env_step(a).map_err(to_py_err)?;
        Ok((state.into_vec(), reward, terminal))
    }

    fn position(&self) -> PyResult<i32> {
        Ok(self.env()?.position())
    }

    fn cash(&self) -> PyResult<f64> {
        Ok(self.env()?.cash())
    }

    fn level(&self) -> PyResult<f64> {
        Ok(self.env()?.level())
    }

    /// (trade_qty, cost, step_pnl, position_after) of the last step.
    fn last_step(&self) -> PyResult<(u32, f64, f64, i32)> {
        let rec = self
            .env()?
            .last_record()
            .ok_or_else(|| PyRuntimeError::new_err("no step taken yet"))?;
        Ok((rec.trade_qty, rec.cost, rec.step_pnl, rec.position_after))
    }
}

// ---------------------------------------------------------------------------
// DqnAgent
// ---------------------------------------------------------------------------

/// Trained or fresh DQN agent.
#[pyclass]
struct DqnAgent {
    inner: agent::DqnAgent,
}

#[pymethods]
impl DqnAgent {
    /// Fresh agent sized from a run-config TOML string.
    #[staticmethod]
    fn from_config(config_toml: &str) -> PyResult<Self> {
        let cfg = RunConfig::from_toml_str(config_toml).map_err(to_py_err)?;
        let layers = cfg.layer_sizes().map_err(to_py_err)?;
        let dqn_cfg = cfg.dqn_config().map_err(to_py_err)?;
        Ok(Self { inner: agent::DqnAgent::new(&layers, dqn_cfg, cfg.seed).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: agent::DqnAgent::load_checkpoint(path).map_err(to_py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_checkpoint(path).map_err(to_py_err)
    }

    fn step_count(&self) -> usize {
        self.inner.step_count()
    }

    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    /// Greedy action for a state (pure; ties break to the lowest index).
    fn act_greedy(&self, state: Vec<f64>) -> PyResult<usize> {
        let s = state_vector(state)?;
        let mut rng = sub_rng(0, "py-greedy-unused");
        self.inner.act(&s, ActMode::Greedy, &mut rng).map_err(to_py_err)
    }

    /// Q-values for all actions in a state.
    fn q_values(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.online().forward(&state).map_err(to_py_err)
    }
}

// ---------------------------------------------------------------------------
// Indicators and plumbing functions
// ---------------------------------------------------------------------------

#[pyfunction]
fn sma(prices: Vec<f64>, window: usize) -> PyResult<f64> {
    Ok(Indicator::Sma { window }.compute(&prices).map_err(to_py_err)?[0])
}

#[pyfunction]
fn ema(prices: Vec<f64>, window: usize) -> PyResult<f64> {
    Ok(Indicator::Ema { window }.compute(&prices).map_err(to_py_err)?[0])
}

/// Returns (upper, lower) band.
#[pyfunction]
fn bollinger(prices: Vec<f64>, window: usize, k: f64) -> PyResult<(f64, f64)> {
    let v = Indicator::Bollinger { window, k }.compute(&prices).map_err(to_py_err)?;
    Ok((v[0], v[1]))
}

#[pyfunction]
fn rsi(prices: Vec<f64>, window: usize) -> PyResult<f64> {
    Ok(Indicator::Rsi { window }.compute(&prices).map_err(to_py_err)?[0])
}

/// Log returns, most recent first.
#[pyfunction]
fn log_returns(prices: Vec<f64>, n: usize) -> PyResult<Vec<f64>> {
    features::log_returns(&prices, n).map_err(to_py_err)
}

/// Mean over floored population sigma of a step-pnl window.
#[pyfunction]
fn risk_adjusted_reward(pnls: Vec<f64>) -> f64 {
    market::risk_adjusted_reward(&pnls)
}

/// Bellman-optimal Q for an MDP fixture in the JSON schema
/// `{"n_states", "n_actions", "transitions": [[s, a, p, s2, r, terminal], ...]}`.
/// Returns one row of Q-values per state.
#[pyfunction]
fn value_iteration(mdp_json: &str, gamma: f64, tol: f64) -> PyResult<Vec<Vec<f64>>> {
    let mdp = qcore::DiscreteMdp::from_json_str(mdp_json).map_err(to_py_err)?;
    let q = qcore::value_iteration_oracle(&mdp, gamma, tol).map_err(to_py_err)?;
    Ok((0..q.n_states()).map(|s| q.row(s).to_vec()).collect())
}

/// Built-in Bellman and gradient self-checks.
/// Returns (bellman_gap, gradient_max_rel_err, passed).
#[pyfunction]
fn oracle_check() -> PyResult<(f64, f64, bool)> {
    let report = selfcheck::oracle_check(false).map_err(to_py_err)?;
    Ok((report.bellman_gap, report.gradient_max_rel_err, report.passed()))
}

/// Train an agent per the run-config TOML string.
/// Returns the agent and per-episode rows
/// (episode, steps, mean_loss, total_reward, epsilon).
#[pyfunction]
fn train_from_config(config_toml: &str) -> PyResult<(DqnAgent, Vec<(usize, usize, f64, f64, f64)>)> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(to_py_err)?;
    let env_cfg = cfg.env_config().map_err(to_py_err)?;
    let layers = cfg.layer_sizes().map_err(to_py_err)?;
    let dqn_cfg = cfg.dqn_config().map_err(to_py_err)?;

    let mut agent = agent::DqnAgent::new(&layers, dqn_cfg, cfg.seed).map_err(to_py_err)?;
    let (mut env, _) = market::env_reset(&env_cfg, cfg.seed).map_err(to_py_err)?;
    let report =
        agent::train_loop(&mut agent, &mut env, cfg.agent.episodes, cfg.seed).map_err(to_py_err)?;
    let rows = report
        .episodes
        .iter()
        .map(|r| (r.episode, r.steps, r.mean_loss, r.total_reward, r.epsilon))
        .collect();
    Ok((DqnAgent { inner: agent }, rows))
}

/// Evaluate a frozen policy ("agent", "random", or "flat") over paired-seed
/// episodes. Returns the aggregate statistics as a dict.
#[pyfunction]
#[pyo3(signature = (config_toml, policy, n_episodes, seed, agent=None))]
fn evaluate_from_config<'py>(
    py: Python<'py>,
    config_toml: &str,
    policy: &str,
    n_episodes: usize,
    seed: u64,
    agent: Option<PyRef<'py, DqnAgent>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(to_py_err)?;
    let env_cfg = cfg.env_config().map_err(to_py_err)?;
    let policy = match (policy, &agent) {
        ("agent", Some(a)) => Policy::Greedy(&a.inner),
        ("agent", None) => return Err(PyValueError::new_err("policy 'agent' needs an agent")),
        ("random", _) => Policy::Random,
        ("flat", _) => Policy::Flat,
        (other, _) => {
            return Err(PyValueError::new_err(format!(
                "unknown policy '{other}' (expected agent, random, flat)"
            )))
        }
    };
    let report = backtest::evaluate(&policy, &env_cfg, n_episodes, seed, 0).map_err(to_py_err)?;

    let out = PyDict::new(py);
    out.set_item("policy", report.policy)?;
    out.set_item("n_episodes", report.n_episodes)?;
    out.set_item("config_digest", report.config_digest)?;
    out.set_item("mean_total_pnl", report.aggregate.mean_total_pnl)?;
    out.set_item("std_total_pnl", report.aggregate.std_total_pnl)?;
    out.set_item("stderr_total_pnl", report.aggregate.stderr_total_pnl)?;
    out.set_item("mean_risk_adjusted", report.aggregate.mean_risk_adjusted)?;
    out.set_item("mean_max_drawdown", report.aggregate.mean_max_drawdown)?;
    out.set_item("mean_turnover", report.aggregate.mean_turnover)?;
    Ok(out)
}

#[pymodule]
fn specarb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mlp>()?;
    m.add_class::<ReplayBuffer>()?;
    m.add_class::<MarketEnv>()?;
    m.add_class::<DqnAgent>()?;
    m.add_function(wrap_pyfunction!(sma, m)?)?;
    m.add_function(wrap_pyfunction!(ema, m)?)?;
    m.add_function(wrap_pyfunction!(bollinger, m)?)?;
    m.add_function(wrap_pyfunction!(rsi, m)?)?;
    m.add_function(wrap_pyfunction!(log_returns, m)?)?;
    m.add_function(wrap_pyfunction!(risk_adjusted_reward, m)?)?;
    m.add_function(wrap_pyfunction!(value_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add_function(wrap_pyfunction!(train_from_config, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_from_config, m)?)?;
    Ok(())
}
