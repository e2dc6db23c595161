//! The DQN agent: online network, target network, replay-batch training
//! step, and periodic hard target sync.
//!
//! Targets are `r + gamma * max_a' Q(s', a'; target)` (bare `r` on terminal
//! transitions) and the loss is the MSE over the taken-action outputs only;
//! untaken actions receive zero upstream gradient.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::features::StateVector;
use crate::neural::{init_weights, mse_loss, Checkpoint, GradientBuffer, Mlp};
use crate::qcore::{argmax, epsilon_greedy, epsilon_schedule, Hyperparameters};
use crate::replay::{Experience, ReplayBuffer};
use crate::rng::{sub_rng, sub_seed};

const AGENT_CHECKPOINT_VERSION: u32 = 1;

/// Agent hyperparameters on top of the shared [`Hyperparameters`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hyper: Hyperparameters,
    pub lr: f64,
    pub batch_size: usize,
    pub target_sync_period: usize,
    /// Minimum buffer fill before any parameter update happens.
    pub warmup: usize,
    pub replay_capacity: usize,
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::validation(format!("lr {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        if self.target_sync_period == 0 {
            return Err(Error::validation("target_sync_period must be >= 1"));
        }
        if self.replay_capacity == 0 {
            return Err(Error::validation("replay_capacity must be >= 1"));
        }
        Ok(())
    }
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparameters::default(),
            lr: 1e-3,
            batch_size: 64,
            target_sync_period: 500,
            warmup: 1000,
            replay_capacity: 100_000,
        }
    }
}

/// Greedy evaluation or ε-greedy exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Explore,
    Greedy,
}

/// Result of one [`DqnAgent::train_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainOutcome {
    /// Buffer below warm-up; nothing was mutated.
    Skipped,
    /// Pre-update batch loss.
    Loss(f64),
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    online: Mlp,
    target: Mlp,
    config: DqnConfig,
    step_count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentCheckpoint {
    version: u32,
    config: DqnConfig,
    step_count: usize,
    online: Checkpoint,
    target: Checkpoint,
}

impl DqnAgent {
    /// Fresh agent with both networks initialized identically from `seed`.
    pub fn new(layer_sizes: &[usize], config: DqnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let online = init_weights(layer_sizes, sub_seed(seed, "init"))?;
        let target = online.clone();
        Ok(Self { online, target, config, step_count: 0 })
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn state_dim(&self) -> usize {
        self.online.input_dim()
    }

    pub fn n_actions(&self) -> usize {
        self.online.output_dim()
    }

    /// Current exploration rate under the linear schedule.
    pub fn epsilon(&self) -> f64 {
        epsilon_schedule(self.step_count, &self.config.hyper)
    }

    /// Select an action. Greedy mode is a pure function of (agent, state);
    /// explore mode is ε-greedy at the scheduled ε.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &StateVector,
        mode: ActMode,
        rng: &mut R,
    ) -> Result<usize> {
        let q_row = self.online.forward(state.as_slice())?;
        match mode {
            ActMode::Greedy => Ok(argmax(&q_row)),
            ActMode::Explore => epsilon_greedy(&q_row, self.epsilon(), rng),
        }
    }

    /// Training targets `y_i = r_i + gamma * max_a' Q(s'_i, a'; target)`,
    /// with bare `r_i` on terminal transitions. Uses only the target network.
    pub fn compute_targets(&self, batch: &[Experience]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::validation("compute_targets on empty batch"));
        }
        let gamma = self.config.hyper.gamma;
        batch
            .iter()
            .map(|e| {
                if e.terminal {
                    Ok(e.reward)
                } else {
                    let q_next = self.target.forward(e.next_state.as_slice())?;
                    let best = q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    Ok(e.reward + gamma * best)
                }
            })
            .collect()
    }

    /// One training step: sample a batch, regress the taken-action outputs
    /// onto the targets with a single SGD step, and sync the target network
    /// on period boundaries. Below warm-up nothing happens at all.
    ///
    /// Returns the pre-update batch loss.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buf: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<TrainOutcome> {
        if buf.len() < self.config.warmup {
            return Ok(TrainOutcome::Skipped);
        }
        let batch = buf.sample_uniform(self.config.batch_size, rng)?;
        let targets = self.compute_targets(&batch)?;

        let n = batch.len() as f64;
        let mut predictions = Vec::with_capacity(batch.len());
        let mut grads = GradientBuffer::zeros_like(&self.online);
        for (e, &y) in batch.iter().zip(&targets) {
            let q_row = self.online.forward(e.state.as_slice())?;
            let pred = q_row[e.action];
            predictions.push(pred);
            // d(mean_i (pred_i - y_i)^2) / d pred = 2 (pred - y) / n,
            // zero upstream on every untaken action.
            let mut upstream = vec![0.0; self.online.output_dim()];
            upstream[e.action] = 2.0 * (pred - y) / n;
            grads.accumulate(&self.online.backward(e.state.as_slice(), &upstream)?);
        }
        let loss = mse_loss(&predictions, &targets)?;

        self.online.sgd_step(&grads, self.config.lr)?;
        self.step_count += 1;
        if self.step_count % self.config.target_sync_period == 0 {
            self.sync_target();
        }
        Ok(TrainOutcome::Loss(loss))
    }

    /// Hard sync: the target network becomes a value-copy of the online one.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let ck = AgentCheckpoint {
            version: AGENT_CHECKPOINT_VERSION,
            config: self.config.clone(),
            step_count: self.step_count,
            online: self.online.to_checkpoint(self.step_count),
            target: self.target.to_checkpoint(self.step_count),
        };
        let json = serde_json::to_string_pretty(&ck)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: AgentCheckpoint = serde_json::from_str(&text)?;
        if ck.version != AGENT_CHECKPOINT_VERSION {
            return Err(Error::parse(format!("unsupported agent checkpoint version {}", ck.version)));
        }
        ck.config.validate()?;
        let online = Mlp::from_checkpoint(&ck.online)?;
        let target = Mlp::from_checkpoint(&ck.target)?;
        if online.layer_sizes() != target.layer_sizes() {
            return Err(Error::parse("online and target layer sizes differ"));
        }
        Ok(Self { online, target, config: ck.config, step_count: ck.step_count })
    }
}

/// One row of a [`TrainingReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    /// Mean pre-update batch loss over the episode's train steps
    /// (0 when every step was skipped for warm-up).
    pub mean_loss: f64,
    pub total_reward: f64,
    /// Exploration rate at episode end.
    pub epsilon: f64,
}

/// Per-episode training trace, serialized as JSON lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub episodes: Vec<EpisodeRecord>,
}

impl TrainingReport {
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for record in &self.episodes {
            serde_json::to_writer(&mut writer, record)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut episodes = Vec::new();
        for line in BufReader::new(reader).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            episodes.push(serde_json::from_str(&line)?);
        }
        Ok(Self { episodes })
    }
}

/// Run `episodes` episodes of act → step → store → train. Fully
/// deterministic given `seed`: exploration, sampling, and per-episode
/// environment seeds all flow from named sub-streams.
pub fn train_loop<E: Environment>(
    agent: &mut DqnAgent,
    env: &mut E,
    episodes: usize,
    seed: u64,
) -> Result<TrainingReport> {
    if env.state_dim() != agent.state_dim() {
        return Err(Error::validation(format!(
            "environment state dim {} does not match agent input dim {}",
            env.state_dim(),
            agent.state_dim()
        )));
    }
    if env.n_actions() != agent.n_actions() {
        return Err(Error::validation(format!(
            "environment action count {} does not match agent output dim {}",
            env.n_actions(),
            agent.n_actions()
        )));
    }

    let mut explore_rng = sub_rng(seed, "exploration");
    let mut sample_rng = sub_rng(seed, "sampling");
    let mut buf = ReplayBuffer::new(agent.config.replay_capacity)?;
    let mut report = TrainingReport::default();

    for episode in 0..episodes {
        let mut state = env.reset(sub_seed(seed, &format!("env/{episode}")))?;
        let mut total_reward = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        let mut steps = 0usize;
        loop {
            let action = agent.act(&state, ActMode::Explore, &mut explore_rng)?;
            let (next_state, reward, terminal) = env.step(action)?;
            buf.push(Experience::new(
                state,
                action,
                reward,
                next_state.clone(),
                terminal,
            )?);
            if let TrainOutcome::Loss(loss) = agent.train_step(&buf, &mut sample_rng)? {
                loss_sum += loss;
                loss_count += 1;
            }
            total_reward += reward;
            steps += 1;
            state = next_state;
            if terminal {
                break;
            }
        }
        let record = EpisodeRecord {
            episode,
            steps,
            mean_loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 },
            total_reward,
            epsilon: agent.epsilon(),
        };
        log::debug!(
            "episode {episode}: steps={steps} mean_loss={:.6} total_reward={:.4} eps={:.3}",
            record.mean_loss,
            record.total_reward,
            record.epsilon
        );
        report.episodes.push(record);
    }
    Ok(report)
}
