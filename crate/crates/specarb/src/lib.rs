//! Deep Q-learning statistical-arbitrage engine.
//!
//! A from-scratch DQN (MLP Q-approximation, MSE loss against a target
//! network, experience replay, ε-greedy exploration) trained and evaluated
//! against a mean-reverting spread simulator or replayed bar data, with an
//! exact tabular Q-learning path for verifying the Bellman machinery.

pub mod agent;
pub mod backtest;
pub mod config;
pub mod env;
pub mod error;
pub mod features;
pub mod market;
pub mod neural;
pub mod qcore;
pub mod replay;
pub mod rng;
pub mod selfcheck;

pub use error::{Error, Result};
