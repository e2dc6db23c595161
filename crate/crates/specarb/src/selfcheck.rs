//! Built-in oracle self-tests: tabular convergence against value iteration
//! and gradient checks against central finite differences. Backs the
//! `oracle-check` CLI subcommand.

use crate::error::Result;
use crate::neural::{init_weights, Mlp};
use crate::qcore::{bellman_update, value_iteration_oracle, DiscreteMdp, DiscreteTransition, Hyperparameters, QTable};
use crate::rng::sub_rng;

pub const BELLMAN_TOLERANCE: f64 = 1e-6;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    /// Final sup-norm gap between swept Q-learning and the oracle.
    pub bellman_gap: f64,
    /// Worst relative error between analytic and finite-difference gradients.
    pub gradient_max_rel_err: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.bellman_gap < BELLMAN_TOLERANCE && self.gradient_max_rel_err < GRADIENT_TOLERANCE
    }
}

/// Sweep tabular Q-learning on the chain fixture until it meets the oracle.
fn bellman_check() -> Result<f64> {
    let mdp = DiscreteMdp::chain(5);
    let h = Hyperparameters { alpha: 0.5, gamma: 0.9, ..Hyperparameters::default() };
    let q_star = value_iteration_oracle(&mdp, h.gamma, 1e-12)?;
    let mut q = QTable::zeros(mdp.n_states(), mdp.n_actions());
    let mut gap = f64::INFINITY;
    for _ in 0..10_000 {
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let o = &mdp.outcomes(s, a)[0];
                let t = DiscreteTransition {
                    state: s,
                    action: a,
                    reward: o.reward,
                    next_state: o.next_state,
                    terminal: o.terminal,
                };
                bellman_update(&mut q, &t, &h)?;
            }
        }
        gap = q.max_abs_diff(&q_star);
        if gap < BELLMAN_TOLERANCE {
            break;
        }
    }
    Ok(gap)
}

/// Central finite differences of `L(theta) = sum_k upstream_k * output_k`.
fn fd_gradients(net: &Mlp, input: &[f64], upstream: &[f64], h: f64) -> Vec<f64> {
    let loss = |n: &Mlp| -> f64 {
        n.forward(input)
            .expect("probe input is valid")
            .iter()
            .zip(upstream)
            .map(|(o, u)| o * u)
            .sum()
    };
    (0..net.n_params())
        .map(|idx| {
            let mut plus = net.clone();
            *plus.flat_params_mut()[idx] += h;
            let mut minus = net.clone();
            *minus.flat_params_mut()[idx] -= h;
            (loss(&plus) - loss(&minus)) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Smallest |pre-activation| over all hidden units. Finite differences are
/// only valid away from rectifier kinks, so probe inputs must clear a margin.
fn min_kink_margin(net: &Mlp, input: &[f64]) -> f64 {
    let sizes = net.layer_sizes();
    let mut x = input.to_vec();
    let mut margin = f64::INFINITY;
    for l in 0..sizes.len() - 1 {
        let hidden = l < sizes.len() - 2;
        let mut y = vec![0.0; sizes[l + 1]];
        for o in 0..sizes[l + 1] {
            let mut z = net.bias(l, o);
            for i in 0..sizes[l] {
                z += net.weight(l, o, i) * x[i];
            }
            if hidden {
                margin = margin.min(z.abs());
                z = z.max(0.0);
            }
            y[o] = z;
        }
        x = y;
    }
    margin
}

/// Gradient check over a handful of seeded nets. `negate_gradients` is a
/// test hook that flips the analytic gradient's sign, which must make the
/// check fail.
fn gradient_check(negate_gradients: bool) -> Result<f64> {
    use rand::Rng;
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let net = init_weights(&[6, 16, 16, 3], 1000 + seed)?;
        let mut rng = sub_rng(seed, "selfcheck");
        let mut input: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        while min_kink_margin(&net, &input) < 1e-3 {
            input = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        }
        let upstream: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();

        let grads = net.backward(&input, &upstream)?;
        let mut analytic = grads.flat();
        if negate_gradients {
            for g in &mut analytic {
                *g = -*g;
            }
        }
        let numeric = fd_gradients(&net, &input, &upstream, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max(relative_error(*a, *n));
        }
    }
    Ok(worst)
}

/// Run both checks and report the residuals.
pub fn oracle_check(negate_gradients: bool) -> Result<CheckReport> {
    Ok(CheckReport {
        bellman_gap: bellman_check()?,
        gradient_max_rel_err: gradient_check(negate_gradients)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_build_passes() {
        let report = oracle_check(false).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn negated_gradients_fail_loudly() {
        let report = oracle_check(true).unwrap();
        assert!(!report.passed());
        assert!(report.gradient_max_rel_err > GRADIENT_TOLERANCE);
    }
}
