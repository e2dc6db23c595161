//! Environment abstraction for the training loop, plus a wrapper that turns
//! a small finite MDP into an environment with one-hot observations. The
//! wrapper is how DQN convergence gets checked against the tabular oracle.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::StateVector;
use crate::market::{Action, MarketEnv};
use crate::qcore::DiscreteMdp;
use crate::rng::sub_rng;

/// Anything the agent can train against.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Start a fresh episode; fully determined by `seed`.
    fn reset(&mut self, seed: u64) -> Result<StateVector>;
    /// Returns (next state, reward, terminal).
    fn step(&mut self, action: usize) -> Result<(StateVector, f64, bool)>;
}

impl Environment for MarketEnv {
    fn state_dim(&self) -> usize {
        self.config().features.state_len()
    }

    fn n_actions(&self) -> usize {
        crate::market::N_ACTIONS
    }

    fn reset(&mut self, seed: u64) -> Result<StateVector> {
        let cfg = self.config().clone();
        let (env, state) = crate::market::env_reset(&cfg, seed)?;
        *self = env;
        Ok(state)
    }

    fn step(&mut self, action: usize) -> Result<(StateVector, f64, bool)> {
        self.env_step(Action::from_index(action)?)
    }
}

/// A [`DiscreteMdp`] exposed as an [`Environment`] with one-hot states.
///
/// Episodes start in state 0 and end on a terminal transition or after
/// `max_steps`, whichever comes first.
#[derive(Debug, Clone)]
pub struct MdpEnv {
    mdp: DiscreteMdp,
    max_steps: usize,
    state: usize,
    steps: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl MdpEnv {
    pub fn new(mdp: DiscreteMdp, max_steps: usize) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::validation("max_steps must be >= 1"));
        }
        Ok(Self { mdp, max_steps, state: 0, steps: 0, done: false, rng: sub_rng(0, "mdp-env") })
    }

    pub fn mdp(&self) -> &DiscreteMdp {
        &self.mdp
    }

    pub fn one_hot(&self, state: usize) -> StateVector {
        let mut v = vec![0.0; self.mdp.n_states()];
        v[state] = 1.0;
        StateVector::new(v).expect("one-hot is valid")
    }
}

impl Environment for MdpEnv {
    fn state_dim(&self) -> usize {
        self.mdp.n_states()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn reset(&mut self, seed: u64) -> Result<StateVector> {
        self.rng = sub_rng(seed, "mdp-env");
        self.state = 0;
        self.steps = 0;
        self.done = false;
        Ok(self.one_hot(0))
    }

    fn step(&mut self, action: usize) -> Result<(StateVector, f64, bool)> {
        if self.done {
            return Err(Error::state("step called after terminal step"));
        }
        if action >= self.mdp.n_actions() {
            return Err(Error::index(format!("action {action} out of range")));
        }
        let outcomes = self.mdp.outcomes(self.state, action);
        let outcome = if outcomes.len() == 1 {
            &outcomes[0]
        } else {
            // Sample the stochastic branch by inverse CDF.
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut chosen = &outcomes[outcomes.len() - 1];
            for o in outcomes {
                acc += o.probability;
                if u < acc {
                    chosen = o;
                    break;
                }
            }
            chosen
        };
        self.state = outcome.next_state;
        self.steps += 1;
        self.done = outcome.terminal || self.steps >= self.max_steps;
        Ok((self.one_hot(self.state), outcome.reward, self.done))
    }
}
