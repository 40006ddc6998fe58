//! Equilibrium gaps in the true game.
//!
//! Against a uniform mixture of product policies, agent `i` deviates with a
//! single local policy `μ_i` and is scored by the average over components `t`
//! of `V_i(μ_i × π^t_{-i})`. Because transitions are decoupled, this is a
//! single-agent problem for agent `i` with reward
//! `r̃_{i,h}(c,s,a) = (1/T) Σ_t E_{d^{π^t_j}_h(·|c), j≠i}[r_{i,h}(c, s, a)]`,
//! solved exactly by backward induction over deterministic policies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{DecoupledGame, GameError, MixturePolicy};
use crate::table::CondTable;

pub const MIXTURE_CONVENTION: &str = "single deviation scored by the average over mixture components of V_i(mu_i x pi^t_-i)";

#[derive(Debug, Error)]
pub enum GapError {
    #[error("action {value} of agent {agent} outside [-1, 1]")]
    ActionRange { agent: usize, value: f64 },
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    /// Deterministic deviation, one table per step with rows `c * S + s`.
    pub policy: Vec<CondTable>,
    pub value: f64,
}

/// Component-averaged expected reward of agent `i`, `[h][x]`.
fn deviation_rewards(game: &DecoupledGame, mixture: &MixturePolicy, i: usize) -> Result<Vec<Vec<f64>>, GameError> {
    let d = &game.dynamics;
    let ag = &d.agents[i];
    let mut out = vec![vec![0.0; d.n_contexts * ag.sa_size()]; d.horizon];
    for comp in &mixture.components {
        d.check_policy(comp)?;
        let vis: Vec<Vec<Vec<Vec<f64>>>> = (0..d.n_agents())
            .map(|j| {
                if j == i {
                    Vec::new()
                } else {
                    (0..d.n_contexts).map(|c| d.local_visitation(j, comp.agent(j), c)).collect()
                }
            })
            .collect();
        for (h, out_h) in out.iter_mut().enumerate() {
            for c in 0..d.n_contexts {
                let slots: Vec<&[f64]> = (0..d.n_agents()).filter(|&j| j != i).map(|j| vis[j][c][h].as_slice()).collect();
                for sa in 0..ag.sa_size() {
                    let x = c * ag.sa_size() + sa;
                    out_h[x] += game.rewards[i][h].expect_slots(x, &slots);
                }
            }
        }
    }
    let t = mixture.len() as f64;
    out.iter_mut().flatten().for_each(|v| *v /= t);
    Ok(out)
}

pub fn best_response(game: &DecoupledGame, mixture: &MixturePolicy, i: usize) -> Result<BestResponse, GameError> {
    if i >= game.n_agents() {
        return Err(GameError::Shape(format!("agent {i} out of range")));
    }
    let d = &game.dynamics;
    let ag = &d.agents[i];
    let rewards = deviation_rewards(game, mixture, i)?;
    let mut policy = vec![CondTable::uniform(d.n_contexts * ag.n_states, ag.n_actions); d.horizon];
    let mut v_next = vec![0.0; d.n_contexts * ag.n_states];
    for h in (0..d.horizon).rev() {
        let mut v = vec![0.0; d.n_contexts * ag.n_states];
        let mut choice = vec![0; d.n_contexts * ag.n_states];
        for cs in 0..d.n_contexts * ag.n_states {
            let c = cs / ag.n_states;
            let mut best = f64::NEG_INFINITY;
            for a in 0..ag.n_actions {
                let x = cs * ag.n_actions + a;
                let cont: f64 = ag.kernels[h].row(x).iter().enumerate().map(|(sp, p)| p * v_next[c * ag.n_states + sp]).sum();
                let q = rewards[h][x] + cont;
                if q > best {
                    best = q;
                    choice[cs] = a;
                }
            }
            v[cs] = best;
        }
        policy[h] = CondTable::deterministic(d.n_contexts * ag.n_states, ag.n_actions, |r| choice[r]);
        v_next = v;
    }
    let value = (0..d.n_contexts).map(|c| d.rho[c] * v_next[c * ag.n_states + ag.init_state]).sum();
    Ok(BestResponse { policy, value })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentGap {
    pub best_response_value: f64,
    pub policy_value: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub agents: Vec<AgentGap>,
    pub max_gap: f64,
    /// Arg-max deviation of each agent.
    pub deviations: Vec<Vec<CondTable>>,
    pub mixture_convention: String,
}

pub fn gap(game: &DecoupledGame, mixture: &MixturePolicy) -> Result<GapReport, GameError> {
    let values = game.exact_value_mixture(mixture)?;
    let mut agents = Vec::with_capacity(game.n_agents());
    let mut deviations = Vec::with_capacity(game.n_agents());
    for (i, &policy_value) in values.iter().enumerate() {
        let br = best_response(game, mixture, i)?;
        agents.push(AgentGap { best_response_value: br.value, policy_value, gap: br.value - policy_value });
        deviations.push(br.policy);
    }
    let max_gap = agents.iter().map(|a| a.gap).fold(f64::NEG_INFINITY, f64::max);
    Ok(GapReport { agents, max_gap, deviations, mixture_convention: MIXTURE_CONVENTION.into() })
}

/// Gap of a deterministic joint action in the quadratic game with reward
/// `a_i Σ_j a_j / √N` (reported without the `1/√N` factor). The deviation
/// payoff `a (a + Σ_{j≠i} π_j)` is convex in `a`, so its maximum over `[-1, 1]`
/// sits at `±1` and equals `1 + |Σ_{j≠i} π_j|`.
pub fn quadratic_gap(actions: &[f64]) -> Result<f64, GapError> {
    if let Some((agent, &value)) = actions.iter().enumerate().find(|(_, v)| !(v.abs() <= 1.0)) {
        return Err(GapError::ActionRange { agent, value });
    }
    let total: f64 = actions.iter().sum();
    Ok(actions
        .iter()
        .map(|&pi| {
            let others = total - pi;
            1.0 + others.abs() - pi * total
        })
        .fold(f64::NEG_INFINITY, f64::max))
}
