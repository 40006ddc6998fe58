//! Decentralized regularized actor-critic in a learned decoupled model.
//!
//! Each iteration evaluates the current product policy `π^t` for every agent in
//! the learned model (exactly by dynamic programming or by Monte-Carlo
//! rollouts with state resets), then moves each agent's action distribution at
//! every `(h, c, s)` cell with the χ²-regularized mirror step. The output is the
//! uniform mixture of `π^1 = ν, .., π^T`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::BehaviorPolicy;
use crate::game::{slot_of, Dynamics, GameError, MixturePolicy, ProductPolicy};
use crate::learn::LearnedModel;
use crate::mirror::{self, MirrorError, UpdateParams};
use crate::seeding::{self, streams};
use crate::table::{sample_index, CondTable};

#[derive(Debug, Error)]
pub enum DracError {
    #[error("update failed at iteration {t}, agent {agent}, step {step}, context {context}, state {state}: {source}")]
    Update { t: usize, agent: usize, step: usize, context: usize, state: usize, source: MirrorError },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Mirror(#[from] MirrorError),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CriticMode {
    ExactDp,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DracParams {
    pub iterations: usize,
    pub lambda: f64,
    pub eta: f64,
    pub critic: CriticMode,
    pub seed: u64,
}

impl DracParams {
    pub fn validate(&self) -> Result<(), DracError> {
        if self.iterations == 0 {
            return Err(DracError::Params("at least one iteration required".into()));
        }
        if let CriticMode::MonteCarlo { samples: 0 } = self.critic {
            return Err(DracError::Params("Monte-Carlo critic needs at least one sample".into()));
        }
        UpdateParams::new(self.lambda, self.eta, 1.0)?;
        Ok(())
    }
}

/// `Q[h][x]` for one agent, with `x = (c * S + s) * A + a`.
pub type CriticTable = Vec<Vec<f64>>;

/// Expected step-`h` reward of agent `i` given its own `(c, s, a)` when the
/// other agents follow their visitations in `vis` (`[agent][context][step]`).
fn expected_reward(model: &LearnedModel, vis: &[Vec<Vec<Vec<f64>>>], i: usize, h: usize) -> Vec<f64> {
    let d = &model.dynamics;
    let ag = &d.agents[i];
    let mut out = vec![0.0; d.n_contexts * ag.sa_size()];
    for c in 0..d.n_contexts {
        let slots: Vec<&[f64]> = (0..d.n_agents()).filter(|&j| j != i).map(|j| vis[j][c][h].as_slice()).collect();
        for sa in 0..ag.sa_size() {
            let x = c * ag.sa_size() + sa;
            out[x] = model.rewards[i][h].expect_slots(x, &slots);
        }
    }
    out
}

/// Backward recursion `Q_h = r̃_h + P̂_h V_{h+1}`, `V_h = <π_h, Q_h>`.
fn backward(model: &LearnedModel, policy_i: &[CondTable], i: usize, rewards: &[Vec<f64>]) -> CriticTable {
    let d = &model.dynamics;
    let ag = &d.agents[i];
    let mut q = vec![Vec::new(); d.horizon];
    let mut v_next = vec![0.0; d.n_contexts * ag.n_states];
    for h in (0..d.horizon).rev() {
        let mut qh = rewards[h].clone();
        for (x, val) in qh.iter_mut().enumerate() {
            let c = x / ag.sa_size();
            let row = ag.kernels[h].row(x);
            *val += row.iter().enumerate().map(|(sp, p)| p * v_next[c * ag.n_states + sp]).sum::<f64>();
        }
        let mut v = vec![0.0; d.n_contexts * ag.n_states];
        for (cs, vv) in v.iter_mut().enumerate() {
            let pi = policy_i[h].row(cs);
            *vv = (0..ag.n_actions).map(|a| pi[a] * qh[cs * ag.n_actions + a]).sum();
        }
        q[h] = qh;
        v_next = v;
    }
    q
}

/// Exact critic of agent `i` for the product policy in the learned model.
pub fn critic_exact(model: &LearnedModel, policy: &ProductPolicy, i: usize) -> Result<CriticTable, DracError> {
    model.dynamics.check_policy(policy)?;
    let vis = model.dynamics.visitations(policy);
    let rewards: Vec<Vec<f64>> = (0..model.dynamics.horizon).map(|h| expected_reward(model, &vis, i, h)).collect();
    Ok(backward(model, policy.agent(i), i, &rewards))
}

fn critic_exact_all(model: &LearnedModel, policy: &ProductPolicy) -> Vec<CriticTable> {
    let vis = model.dynamics.visitations(policy);
    (0..model.n_agents())
        .into_par_iter()
        .map(|i| {
            let rewards: Vec<Vec<f64>> = (0..model.dynamics.horizon).map(|h| expected_reward(model, &vis, i, h)).collect();
            backward(model, policy.agent(i), i, &rewards)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McCritic {
    /// Per-cell average return; 0 where no rollout landed.
    pub values: Vec<f64>,
    pub visits: Vec<usize>,
}

impl McCritic {
    pub fn unvisited(&self) -> usize {
        self.visits.iter().filter(|&&n| n == 0).count()
    }
}

/// Monte-Carlo estimate of agent `i`'s step-`h` critic.
///
/// Every rollout draws `c`, runs `π` in the learned model up to step `h`, resets
/// agent `i` to `s ~ σ_{i,h}(·|c)`, draws its action from `(ν + π) / 2`, and sums
/// agent `i`'s learned rewards until the horizon. The tabular least-squares fit
/// of the returns is the per-cell average. Rollout `k` uses its own stream, so
/// the result does not depend on scheduling.
pub fn critic_monte_carlo(
    model: &LearnedModel,
    policy: &ProductPolicy,
    behavior: &BehaviorPolicy,
    i: usize,
    h: usize,
    samples: usize,
    seed: u64,
) -> Result<McCritic, DracError> {
    let d = &model.dynamics;
    d.check_policy(policy)?;
    let sigma = behavior.resolved_state_dists(d)?;
    let sigma_ih = &sigma[i][h];
    let n = d.n_agents();
    let ag_i = &d.agents[i];
    let cells = d.n_contexts * ag_i.sa_size();
    let returns: Vec<(usize, f64)> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeding::rng(seed, &[streams::MONTE_CARLO, i as u64, h as u64, k as u64]);
            let c = sample_index(&d.rho, &mut rng);
            let mut s: Vec<usize> = d.agents.iter().map(|a| a.init_state).collect();
            for step in 0..h {
                for j in 0..n {
                    let ag = &d.agents[j];
                    let a = sample_index(policy.tables[j][step].row(c * ag.n_states + s[j]), &mut rng);
                    s[j] = sample_index(ag.kernels[step].row(ag.x_index(c, s[j], a)), &mut rng);
                }
            }
            s[i] = sample_index(sigma_ih.row(c), &mut rng);
            let mut a = vec![0; n];
            let row_i = c * ag_i.n_states + s[i];
            a[i] = if rng.random::<bool>() {
                sample_index(behavior.policy.tables[i][h].row(row_i), &mut rng)
            } else {
                sample_index(policy.tables[i][h].row(row_i), &mut rng)
            };
            let cell = ag_i.x_index(c, s[i], a[i]);
            let mut ret = 0.0;
            let mut y = vec![0; n - 1];
            for step in h..d.horizon {
                for j in 0..n {
                    if step > h || j != i {
                        let ag = &d.agents[j];
                        a[j] = sample_index(policy.tables[j][step].row(c * ag.n_states + s[j]), &mut rng);
                    }
                }
                for j in (0..n).filter(|&j| j != i) {
                    y[slot_of(i, j)] = s[j] * d.agents[j].n_actions + a[j];
                }
                ret += model.rewards[i][step].evaluate_unchecked(ag_i.x_index(c, s[i], a[i]), &y);
                for j in 0..n {
                    let ag = &d.agents[j];
                    s[j] = sample_index(ag.kernels[step].row(ag.x_index(c, s[j], a[j])), &mut rng);
                }
            }
            (cell, ret)
        })
        .collect();
    let mut sums = vec![0.0; cells];
    let mut visits = vec![0; cells];
    for (cell, ret) in returns {
        sums[cell] += ret;
        visits[cell] += 1;
    }
    let values = sums.iter().zip(&visits).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect();
    Ok(McCritic { values, visits })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub i: usize,
    pub h: usize,
    /// Largest `χ²(π^t_{i,h}(c,s), ν_{i,h}(c,s))` over cells.
    pub max_chi2: f64,
    pub mean_q: f64,
    pub cell_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DracOutput {
    pub policy: MixturePolicy,
    pub trace: Vec<TraceRow>,
    /// Gain range bound passed to every update.
    pub bound: f64,
    pub params: DracParams,
}

fn max_chi2(pi: &CondTable, nu: &CondTable) -> Result<f64, MirrorError> {
    let mut worst: f64 = 0.0;
    for r in 0..pi.rows() {
        worst = worst.max(mirror::chi_square(pi.row(r), nu.row(r))?);
    }
    Ok(worst)
}

/// One regularized step of every agent at every cell, given per-agent critics.
pub fn actor_step(
    dynamics: &Dynamics,
    current: &ProductPolicy,
    behavior: &ProductPolicy,
    critics: &[CriticTable],
    params: &UpdateParams,
    t: usize,
) -> Result<ProductPolicy, DracError> {
    let tables = current
        .tables
        .par_iter()
        .enumerate()
        .map(|(i, per_h)| {
            let ns = dynamics.agents[i].n_states;
            per_h
                .iter()
                .enumerate()
                .map(|(h, pi)| {
                    let nu = &behavior.tables[i][h];
                    let na = pi.cols();
                    let mut next = pi.clone();
                    for row in 0..pi.rows() {
                        let gains = &critics[i][h][row * na..(row + 1) * na];
                        let p = mirror::regularized_update(gains, pi.row(row), nu.row(row), params).map_err(|source| {
                            DracError::Update { t, agent: i, step: h, context: row / ns, state: row % ns, source }
                        })?;
                        next.set_row(row, p.as_slice());
                    }
                    Ok(next)
                })
                .collect::<Result<Vec<_>, DracError>>()
        })
        .collect::<Result<Vec<_>, DracError>>()?;
    Ok(ProductPolicy { tables })
}

/// Runs the actor-critic for `params.iterations` iterations from `π^1 = ν`.
pub fn run_drac(model: &LearnedModel, behavior: &BehaviorPolicy, params: &DracParams) -> Result<DracOutput, DracError> {
    params.validate()?;
    let d = &model.dynamics;
    d.check_policy(&behavior.policy)?;
    let bound = d.horizon as f64 * model.reward_width();
    let update = UpdateParams::new(params.lambda, params.eta, bound.max(f64::MIN_POSITIVE))?;
    let nu = &behavior.policy;
    let mut current = nu.clone();
    let mut components = Vec::with_capacity(params.iterations);
    let mut trace = Vec::with_capacity(params.iterations * d.n_agents() * d.horizon);
    for t in 1..=params.iterations {
        let critics: Vec<CriticTable> = match params.critic {
            CriticMode::ExactDp => critic_exact_all(model, &current),
            CriticMode::MonteCarlo { samples } => (0..d.n_agents())
                .map(|i| {
                    (0..d.horizon)
                        .map(|h| {
                            let seed = seeding::derive(params.seed, &[t as u64]);
                            critic_monte_carlo(model, &current, behavior, i, h, samples, seed).map(|c| c.values)
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        for i in 0..d.n_agents() {
            for h in 0..d.horizon {
                let q = &critics[i][h];
                trace.push(TraceRow {
                    t,
                    i,
                    h,
                    max_chi2: max_chi2(&current.tables[i][h], &nu.tables[i][h])?,
                    mean_q: q.iter().sum::<f64>() / q.len() as f64,
                    cell_count: current.tables[i][h].rows(),
                });
            }
        }
        let next = if t < params.iterations { Some(actor_step(d, &current, nu, &critics, &update, t)?) } else { None };
        components.push(current);
        match next {
            Some(p) => current = p,
            None => break,
        }
    }
    Ok(DracOutput { policy: MixturePolicy::new(components)?, trace, bound, params: *params })
}

/// The one-step, stateless version of the procedure, written directly: the
/// gain of agent `i` at `(c, a)` is the learned reward averaged over every
/// joint action of the other agents under `π^t(c)`.
pub fn run_contextual(model: &LearnedModel, nu: &ProductPolicy, iterations: usize, lambda: f64, eta: f64) -> Result<MixturePolicy, DracError> {
    let d = &model.dynamics;
    if d.horizon != 1 || d.agents.iter().any(|a| a.n_states != 1) {
        return Err(DracError::Params("contextual procedure needs H = 1 and one state per agent".into()));
    }
    let n = d.n_agents();
    let sizes: Vec<usize> = d.agents.iter().map(|a| a.n_actions).collect();
    let bound = model.reward_width();
    let update = UpdateParams::new(lambda, eta, bound.max(f64::MIN_POSITIVE))?;
    let mut current = nu.clone();
    let mut out = Vec::with_capacity(iterations);
    for t in 1..=iterations {
        out.push(current.clone());
        if t == iterations {
            break;
        }
        let mut next = current.clone();
        for i in 0..n {
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let n_joint: usize = others.iter().map(|&j| sizes[j]).product();
            for c in 0..d.n_contexts {
                let mut gains = vec![0.0; sizes[i]];
                let mut y = vec![0; n - 1];
                for joint in 0..n_joint {
                    let mut rem = joint;
                    let mut w = 1.0;
                    for &j in others.iter().rev() {
                        let a = rem % sizes[j];
                        rem /= sizes[j];
                        y[slot_of(i, j)] = a;
                        w *= current.tables[j][0].get(c, a);
                    }
                    if w == 0.0 {
                        continue;
                    }
                    for (a, g) in gains.iter_mut().enumerate() {
                        *g += w * model.rewards[i][0].evaluate_unchecked(c * sizes[i] + a, &y);
                    }
                }
                let p = mirror::regularized_update(&gains, current.tables[i][0].row(c), nu.tables[i][0].row(c), &update)
                    .map_err(|source| DracError::Update { t, agent: i, step: 0, context: c, state: 0, source })?;
                next.tables[i][0].set_row(c, p.as_slice());
            }
        }
        current = next;
    }
    Ok(MixturePolicy::new(out)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Contextual,
    Markov,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub eta: f64,
    pub lambda: f64,
}

fn ceil_tol(x: f64) -> usize {
    (x * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Iteration count, step size and regularization from the sample-complexity analysis.
///
/// Contextual games: `λ = η = (2N²)^{(K-1)/(3K-1)} ε^{1/(3K-1)}`, `T = ⌈1/λ²⌉`.
/// Markov games: `λ = C_S^{K/(3K+2)} H^{3K/(3K+2)} (2N²)^{(K-1)/(3K+2)} ε^{1/(3K+2)}`,
/// `η = λ/H²`, `T = ⌈H²/λ²⌉`.
pub fn theoretical_hyperparams(setting: Setting, k: usize, n: usize, h: usize, eps: f64, c_s: f64) -> Result<Schedule, DracError> {
    if k == 0 || n == 0 || h == 0 || !(eps > 0.0 && eps.is_finite()) || !(c_s > 0.0 && c_s.is_finite()) {
        return Err(DracError::Params("K, N, H, ε and C_S must all be positive".into()));
    }
    let kf = k as f64;
    let nn = 2.0 * (n as f64).powi(2);
    match setting {
        Setting::Contextual => {
            let e = 3.0 * kf - 1.0;
            let lambda = nn.powf((kf - 1.0) / e) * eps.powf(1.0 / e);
            let t = nn.powf(-(2.0 * kf - 2.0) / e) * eps.powf(-2.0 / e);
            Ok(Schedule { iterations: ceil_tol(t), eta: lambda, lambda })
        }
        Setting::Markov => {
            let e = 3.0 * kf + 2.0;
            let hf = h as f64;
            let lambda = c_s.powf(kf / e) * hf.powf(3.0 * kf / e) * nn.powf((kf - 1.0) / e) * eps.powf(1.0 / e);
            Ok(Schedule { iterations: ceil_tol(hf * hf / (lambda * lambda)), eta: lambda / (hf * hf), lambda })
        }
    }
}
