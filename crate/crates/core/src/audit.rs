//! Numerical checks of the inequalities the actor-critic relies on: drift of
//! the iterates away from the behavior policy, the performance-difference
//! identity in the learned model, and the visitation error caused by a wrong
//! transition model.

use serde::{Deserialize, Serialize};

use crate::drac::{critic_exact, DracError, DracOutput};
use crate::game::{Dynamics, GameError, ProductPolicy};
use crate::learn::LearnedModel;
use crate::table::{l1_distance, CondTable};

/// Smallest `B (t-1) / λ - max χ²(π^t, ν)` over the trace; negative means a violation.
/// With `λ = 0` the bound is vacuous and the slack is infinite.
pub fn drift_slack(out: &DracOutput) -> f64 {
    let lambda = out.params.lambda;
    if lambda == 0.0 {
        return f64::INFINITY;
    }
    out.trace
        .iter()
        .map(|row| out.bound * (row.t as f64 - 1.0) / lambda - row.max_chi2)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfDifference {
    /// `V̂_i(μ'_i, π_{-i}) - V̂_i(μ_i, π_{-i})`.
    pub value_gap: f64,
    /// `Σ_h E_{d̂^{μ'_i}_h} <Q̂^{μ_i, π_{-i}}_{i,h}, μ'_{i,h} - μ_{i,h}>`.
    pub advantage_sum: f64,
}

impl PerfDifference {
    pub fn error(&self) -> f64 {
        (self.value_gap - self.advantage_sum).abs()
    }
}

/// Both sides of the performance-difference identity for agent `i` switching
/// from `μ` to `μ'` while the others keep `π_{-i}`, all in the learned model.
pub fn performance_difference(
    model: &LearnedModel,
    others: &ProductPolicy,
    i: usize,
    mu: &[CondTable],
    mu_prime: &[CondTable],
) -> Result<PerfDifference, DracError> {
    let d = &model.dynamics;
    let base = others.with_agent(i, mu.to_vec());
    let dev = others.with_agent(i, mu_prime.to_vec());
    d.check_policy(&base)?;
    d.check_policy(&dev)?;
    let v_base = d.value_factored(&base, &model.rewards)?[i];
    let v_dev = d.value_factored(&dev, &model.rewards)?[i];
    let q = critic_exact(model, &base, i)?;
    let ag = &d.agents[i];
    let mut advantage_sum = 0.0;
    for c in 0..d.n_contexts {
        let vis = d.local_visitation(i, mu_prime, c);
        for h in 0..d.horizon {
            for s in 0..ag.n_states {
                let row = c * ag.n_states + s;
                let state_prob: f64 = (0..ag.n_actions).map(|a| vis[h][s * ag.n_actions + a]).sum();
                if state_prob == 0.0 {
                    continue;
                }
                let inner: f64 = (0..ag.n_actions)
                    .map(|a| q[h][row * ag.n_actions + a] * (mu_prime[h].get(row, a) - mu[h].get(row, a)))
                    .sum();
                advantage_sum += d.rho[c] * state_prob * inner;
            }
        }
    }
    Ok(PerfDifference { value_gap: v_dev - v_base, advantage_sum })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvRow {
    pub h: usize,
    /// `E_c ‖d^π_h(·|c) - d̂^π_h(·|c)‖₁` over joint state-actions.
    pub joint_l1: f64,
    /// `Σ_i Σ_{h'<h} E_{c, d^{π_i}_{h'}} ‖P̂_{i,h'} - P_{i,h'}‖₁`.
    pub bound: f64,
    /// Per-agent local visitation error and its bound.
    pub local_l1: Vec<f64>,
    pub local_bound: Vec<f64>,
}

/// Visitation errors caused by replacing `truth` transitions with `learned`
/// ones, against the accumulated per-step transition errors. Joint visitations
/// are enumerated, so keep the joint state-action space small.
pub fn visitation_tv(truth: &Dynamics, learned: &Dynamics, policy: &ProductPolicy) -> Result<Vec<TvRow>, GameError> {
    truth.validate()?;
    learned.validate()?;
    truth.check_policy(policy)?;
    learned.check_policy(policy)?;
    let same_shape = truth.n_contexts == learned.n_contexts
        && truth.horizon == learned.horizon
        && truth.agents.iter().zip(&learned.agents).all(|(a, b)| a.n_states == b.n_states && a.n_actions == b.n_actions && a.init_state == b.init_state);
    if !same_shape || truth.agents.len() != learned.agents.len() {
        return Err(GameError::Shape("true and learned dynamics differ in shape".into()));
    }
    let n = truth.n_agents();
    let mut rows: Vec<TvRow> = (0..truth.horizon)
        .map(|h| TvRow { h, joint_l1: 0.0, bound: 0.0, local_l1: vec![0.0; n], local_bound: vec![0.0; n] })
        .collect();
    for c in 0..truth.n_contexts {
        let w = truth.rho[c];
        let true_vis: Vec<Vec<Vec<f64>>> = (0..n).map(|i| truth.local_visitation(i, policy.agent(i), c)).collect();
        let learned_vis: Vec<Vec<Vec<f64>>> = (0..n).map(|i| learned.local_visitation(i, policy.agent(i), c)).collect();
        // step_err[i][h] = E_{d^{π_i}_h}‖P̂_{i,h} - P_{i,h}‖₁ at context c
        let step_err: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let (ta, la) = (&truth.agents[i], &learned.agents[i]);
                (0..truth.horizon)
                    .map(|h| {
                        (0..ta.sa_size())
                            .map(|sa| {
                                let x = c * ta.sa_size() + sa;
                                true_vis[i][h][sa] * l1_distance(ta.kernels[h].row(x), la.kernels[h].row(x))
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect();
        for (h, row) in rows.iter_mut().enumerate() {
            let factors_t: Vec<&[f64]> = (0..n).map(|i| true_vis[i][h].as_slice()).collect();
            let factors_l: Vec<&[f64]> = (0..n).map(|i| learned_vis[i][h].as_slice()).collect();
            row.joint_l1 += w * product_l1(&factors_t, &factors_l);
            for i in 0..n {
                let acc: f64 = step_err[i][..h].iter().sum();
                row.local_l1[i] += w * l1_distance(&true_vis[i][h], &learned_vis[i][h]);
                row.local_bound[i] += w * acc;
                row.bound += w * acc;
            }
        }
    }
    Ok(rows)
}

/// `Σ |Π_i p_i - Π_i q_i|` over the product space.
fn product_l1(p: &[&[f64]], q: &[&[f64]]) -> f64 {
    let dims: Vec<usize> = p.iter().map(|v| v.len()).collect();
    let total: usize = dims.iter().product();
    let mut coords = vec![0; dims.len()];
    let mut acc = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        for (k, &d) in dims.iter().enumerate().rev() {
            coords[k] = rem % d;
            rem /= d;
        }
        let a: f64 = coords.iter().enumerate().map(|(k, &y)| p[k][y]).product();
        let b: f64 = coords.iter().enumerate().map(|(k, &y)| q[k][y]).product();
        acc += (a - b).abs();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_l1_of_identical_factors_is_zero() {
        let p = [0.3, 0.7];
        assert_eq!(product_l1(&[&p, &p], &[&p, &p]), 0.0);
        let q = [0.5, 0.5];
        assert!((product_l1(&[&p], &[&q]) - 0.4).abs() < 1e-15);
    }
}
