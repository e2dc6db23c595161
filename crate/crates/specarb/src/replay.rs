//! Fixed-capacity experience store with uniform mini-batch sampling.
//!
//! A plain ring: once full, each push overwrites the oldest entry. Sampling
//! draws independent uniform indices with replacement, so batch size does
//! not depend on how full the buffer is.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::StateVector;

/// One transition tuple `(s, a, r, s', terminal)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
    pub next_state: StateVector,
    pub terminal: bool,
}

impl Experience {
    pub fn new(
        state: StateVector,
        action: usize,
        reward: f64,
        next_state: StateVector,
        terminal: bool,
    ) -> Result<Self> {
        if state.len() != next_state.len() {
            return Err(Error::validation(format!(
                "state length {} != next_state length {}",
                state.len(),
                next_state.len()
            )));
        }
        if action > 2 {
            return Err(Error::validation(format!("action {action} not in {{0, 1, 2}}")));
        }
        if !reward.is_finite() {
            return Err(Error::validation(format!("non-finite reward {reward}")));
        }
        Ok(Self { state, action, reward, next_state, terminal })
    }
}

/// Ring buffer of experiences with FIFO eviction.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Experience>,
    write_cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::validation("replay buffer capacity must be positive"));
        }
        Ok(Self { capacity, storage: Vec::with_capacity(capacity.min(4096)), write_cursor: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Store an experience, evicting the oldest one once at capacity.
    pub fn push(&mut self, e: Experience) {
        if self.storage.len() < self.capacity {
            self.storage.push(e);
        } else {
            self.storage[self.write_cursor] = e;
        }
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
    }

    /// Stored experiences in insertion order, oldest first.
    pub fn iter_in_order(&self) -> impl Iterator<Item = &Experience> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.write_cursor };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }

    /// `batch_size` independent uniform draws with replacement.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<Experience>> {
        if self.is_empty() {
            return Err(Error::state("cannot sample from an empty replay buffer"));
        }
        if batch_size == 0 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        Ok((0..batch_size)
            .map(|_| self.storage[rng.random_range(0..self.storage.len())].clone())
            .collect())
    }

    /// Debug dump: one experience per line as JSON, oldest first.
    pub fn dump_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for e in self.iter_in_order() {
            serde_json::to_writer(&mut writer, e)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sub_rng;

    fn exp(reward: f64) -> Experience {
        Experience::new(
            StateVector::new(vec![reward, 0.0]).unwrap(),
            0,
            reward,
            StateVector::new(vec![0.0, reward]).unwrap(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn capacity_zero_rejected() {
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn push_grows_then_evicts_fifo() {
        let mut buf = ReplayBuffer::new(2).unwrap();
        buf.push(exp(1.0));
        assert_eq!(buf.len(), 1);
        buf.push(exp(2.0));
        buf.push(exp(3.0));
        assert_eq!(buf.len(), 2);
        let rewards: Vec<f64> = buf.iter_in_order().map(|e| e.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
    }

    #[test]
    fn overflow_keeps_exactly_the_last_n() {
        let n = 16;
        let mut buf = ReplayBuffer::new(n).unwrap();
        for i in 0..3 * n {
            buf.push(exp(i as f64));
        }
        let rewards: Vec<f64> = buf.iter_in_order().map(|e| e.reward).collect();
        let want: Vec<f64> = (2 * n..3 * n).map(|i| i as f64).collect();
        assert_eq!(rewards, want);
    }

    #[test]
    fn fifo_eviction_exhaustive_small_capacities() {
        // Every push count up to 3x capacity, for capacities 1..=4: the
        // retained set must always be the most recent `min(pushes, cap)`
        // items in insertion order.
        for cap in 1..=4usize {
            for pushes in 0..=3 * cap {
                let mut buf = ReplayBuffer::new(cap).unwrap();
                for i in 0..pushes {
                    buf.push(exp(i as f64));
                }
                let got: Vec<f64> = buf.iter_in_order().map(|e| e.reward).collect();
                let start = pushes.saturating_sub(cap);
                let want: Vec<f64> = (start..pushes).map(|i| i as f64).collect();
                assert_eq!(got, want, "cap={cap} pushes={pushes}");
            }
        }
    }

    #[test]
    fn push_does_not_disturb_other_slots() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for i in 0..3 {
            buf.push(exp(i as f64));
        }
        let before: Vec<Experience> = buf.iter_in_order().cloned().collect();
        buf.push(exp(99.0));
        let after: Vec<Experience> = buf.iter_in_order().cloned().collect();
        // Oldest evicted; the two surviving entries are bit-identical.
        assert_eq!(&before[1..], &after[..2]);
        assert_eq!(after[2].reward, 99.0);
    }

    #[test]
    fn sampling_empty_buffer_is_a_state_error() {
        let buf = ReplayBuffer::new(4).unwrap();
        let mut rng = sub_rng(0, "sample");
        assert!(matches!(buf.sample_uniform(1, &mut rng), Err(Error::State(_))));
    }

    #[test]
    fn singleton_buffer_always_returns_it() {
        let mut buf = ReplayBuffer::new(4).unwrap();
        buf.push(exp(7.0));
        let mut rng = sub_rng(0, "sample");
        let batch = buf.sample_uniform(32, &mut rng).unwrap();
        assert_eq!(batch.len(), 32);
        assert!(batch.iter().all(|e| e.reward == 7.0));
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let mut buf = ReplayBuffer::new(8).unwrap();
        for i in 0..8 {
            buf.push(exp(i as f64));
        }
        let a = buf.sample_uniform(16, &mut sub_rng(3, "sample")).unwrap();
        let b = buf.sample_uniform(16, &mut sub_rng(3, "sample")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn samples_never_fabricate_experiences() {
        let mut buf = ReplayBuffer::new(5) .unwrap();
        for i in 0..13 {
            buf.push(exp(i as f64));
        }
        let stored: Vec<Experience> = buf.iter_in_order().cloned().collect();
        let batch = buf.sample_uniform(64, &mut sub_rng(4, "sample")).unwrap();
        for e in batch {
            assert!(stored.contains(&e));
        }
    }

    #[test]
    fn sampling_frequencies_are_uniform() {
        // Size-10 buffer, 1e5 draws: each index frequency in [0.09, 0.11].
        let mut buf = ReplayBuffer::new(10).unwrap();
        for i in 0..10 {
            buf.push(exp(i as f64));
        }
        let mut rng = sub_rng(11, "uniformity");
        let n = 100_000;
        let mut counts = [0usize; 10];
        for e in buf.sample_uniform(n, &mut rng).unwrap() {
            counts[e.reward as usize] += 1;
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((0.09..=0.11).contains(&freq), "frequency {freq} outside bound");
        }
    }

    #[test]
    fn experience_validation() {
        let s2 = StateVector::new(vec![1.0, 2.0]).unwrap();
        let s3 = StateVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(Experience::new(s2.clone(), 3, 0.0, s2.clone(), false).is_err());
        assert!(Experience::new(s2.clone(), 0, f64::NAN, s2.clone(), false).is_err());
        assert!(Experience::new(s2.clone(), 0, 0.0, s3, false).is_err());
        assert!(Experience::new(s2.clone(), 2, -1.0, s2, true).is_ok());
    }

    #[test]
    fn jsonl_dump_one_line_per_experience() {
        let mut buf = ReplayBuffer::new(4).unwrap();
        for i in 0..3 {
            buf.push(exp(i as f64));
        }
        let mut out = Vec::new();
        buf.dump_jsonl(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        let first: Experience = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.reward, 0.0);
    }
}
