//! Closed-form pieces of the discrete SAC objectives. All expectations over
//! actions are exact sums over the (small) action set.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("action value and probability counts differ ({0} vs {1})")]
    Length(usize, usize),
}

/// `p log p` with the convention `0 log 0 = 0`.
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `V = Σ_a π(a) (Q(a) − α log π(a))`.
pub fn soft_state_value(q: &[f64], pi: &[f64], alpha: f64) -> Result<f64, LossError> {
    if !(alpha > 0.0) {
        return Err(LossError::Temperature(alpha));
    }
    if q.len() != pi.len() {
        return Err(LossError::Length(q.len(), pi.len()));
    }
    Ok(q.iter()
        .zip(pi)
        .map(|(&q, &p)| p * q - alpha * plogp(p))
        .sum())
}

/// Bootstrapped critic target `r + γ V(o')`, or `r` for terminal transitions.
pub fn critic_target(reward: f64, terminal: bool, gamma: f64, next_value: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_value
    }
}

/// Per-observation policy loss `Σ_a π(a) (α log π(a) − Q(a))` and its
/// gradient with respect to the log-probabilities.
pub fn policy_loss_and_grad(log_pi: &[f64], q: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    assert_eq!(log_pi.len(), q.len());
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(q.len());
    for (&l, &qa) in log_pi.iter().zip(q) {
        let p = l.exp();
        loss += p * (alpha * l - qa);
        // d/dl [e^l (α l − q)] = e^l (α l − q) + α e^l
        grad.push(p * (alpha * l - qa) + alpha * p);
    }
    (loss, grad)
}

/// `H̄ = scale · ln k`.
pub fn target_entropy(scale: f64, k: usize) -> f64 {
    scale * (k as f64).ln()
}

/// `J(α) = E[−α(log π + H̄)] = α (H − H̄)` for a policy with entropy `H`;
/// returns `(J, dJ/d log α)`.
pub fn temperature_grad(alpha: f64, entropy: f64, target: f64) -> (f64, f64) {
    let j = alpha * (entropy - target);
    (j, j)
}
