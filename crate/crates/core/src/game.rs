//! Finite Markov games with decoupled per-agent transitions.
//!
//! Agent `i`'s local state evolves from `(c, s_i, a_i)` alone; rewards couple
//! agents through [`IrFunction`]s with `x = (c, s_i, a_i)` flattened as
//! `(c * S_i + s_i) * A_i + a_i` and one slot per other agent `j`, holding
//! `y = s_j * A_j + a_j`. Slots are ordered by agent index with `i` skipped.
//! A contextual game is the special case `H = 1` with one state per agent.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::NoiseSpec;
use crate::ir::{IrError, IrFunction};
use crate::table::{sample_index, CondTable, TableError};

pub const SCHEMA_VERSION: u32 = 1;
pub const BRUTEFORCE_LIMIT: f64 = 1e7;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("instance too large for enumeration: {0:.3e} joint configurations")]
    TooLarge(f64),
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("reward of agent {agent} at step {step} leaves the declared range: [{lo}, {hi}]")]
    RewardRange { agent: usize, step: usize, lo: f64, hi: f64 },
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Slot index of agent `j` in agent `i`'s reward.
pub fn slot_of(i: usize, j: usize) -> usize {
    debug_assert!(i != j);
    if j < i {
        j
    } else {
        j - 1
    }
}

/// Agent owning slot `w` in agent `i`'s reward.
pub fn agent_of_slot(i: usize, w: usize) -> usize {
    if w < i {
        w
    } else {
        w + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentDynamics {
    pub n_states: usize,
    pub n_actions: usize,
    pub init_state: usize,
    /// One table per step; row `(c * S + s) * A + a`, column `s'`.
    pub kernels: Vec<CondTable>,
}

impl AgentDynamics {
    pub fn x_index(&self, c: usize, s: usize, a: usize) -> usize {
        (c * self.n_states + s) * self.n_actions + a
    }

    pub fn sa_size(&self) -> usize {
        self.n_states * self.n_actions
    }
}

/// Context distribution, horizon and per-agent transition kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub n_contexts: usize,
    pub horizon: usize,
    pub rho: Vec<f64>,
    pub agents: Vec<AgentDynamics>,
}

impl Dynamics {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.n_contexts == 0 || self.horizon == 0 || self.agents.is_empty() {
            return Err(GameError::Shape("need at least one context, step and agent".into()));
        }
        check_prob(&self.rho, self.n_contexts, "context distribution")?;
        for (i, ag) in self.agents.iter().enumerate() {
            if ag.n_states == 0 || ag.n_actions == 0 || ag.init_state >= ag.n_states {
                return Err(GameError::Shape(format!("agent {i}: bad state/action sizes or initial state")));
            }
            if ag.kernels.len() != self.horizon {
                return Err(GameError::Shape(format!("agent {i}: {} kernels for horizon {}", ag.kernels.len(), self.horizon)));
            }
            for (h, k) in ag.kernels.iter().enumerate() {
                k.validate()?;
                if k.rows() != self.n_contexts * ag.sa_size() || k.cols() != ag.n_states {
                    return Err(GameError::Shape(format!("agent {i} step {h}: kernel is {}x{}", k.rows(), k.cols())));
                }
            }
        }
        Ok(())
    }

    /// Dynamics of a contextual game: one step, one state per agent.
    pub fn contextual(rho: Vec<f64>, action_sizes: &[usize]) -> Result<Self, GameError> {
        let n_contexts = rho.len();
        let d = Dynamics {
            n_contexts,
            horizon: 1,
            rho,
            agents: action_sizes
                .iter()
                .map(|&n| AgentDynamics {
                    n_states: 1,
                    n_actions: n,
                    init_state: 0,
                    kernels: vec![CondTable::uniform(n_contexts * n, 1)],
                })
                .collect(),
        };
        d.validate()?;
        Ok(d)
    }

    /// Domain sizes of agent `i`'s reward function.
    pub fn reward_domain(&self, i: usize) -> (usize, Vec<usize>) {
        let x = self.n_contexts * self.agents[i].sa_size();
        let ys = (0..self.n_agents()).filter(|&j| j != i).map(|j| self.agents[j].sa_size()).collect();
        (x, ys)
    }

    pub fn check_policy(&self, policy: &ProductPolicy) -> Result<(), GameError> {
        if policy.tables.len() != self.n_agents() {
            return Err(GameError::Shape(format!("policy has {} agents, game has {}", policy.tables.len(), self.n_agents())));
        }
        for (i, (tabs, ag)) in policy.tables.iter().zip(&self.agents).enumerate() {
            if tabs.len() != self.horizon {
                return Err(GameError::Shape(format!("agent {i}: policy has {} steps", tabs.len())));
            }
            for (h, t) in tabs.iter().enumerate() {
                if t.rows() != self.n_contexts * ag.n_states || t.cols() != ag.n_actions {
                    return Err(GameError::Shape(format!("agent {i} step {h}: policy table is {}x{}", t.rows(), t.cols())));
                }
            }
        }
        Ok(())
    }

    pub fn check_rewards(&self, rewards: &[Vec<IrFunction>]) -> Result<(), GameError> {
        if rewards.len() != self.n_agents() {
            return Err(GameError::Shape("one reward list per agent required".into()));
        }
        for (i, per_h) in rewards.iter().enumerate() {
            if per_h.len() != self.horizon {
                return Err(GameError::Shape(format!("agent {i}: {} reward steps", per_h.len())));
            }
            let (x, ys) = self.reward_domain(i);
            for (h, r) in per_h.iter().enumerate() {
                if r.x_size() != x || r.y_sizes() != ys.as_slice() {
                    return Err(GameError::Shape(format!("agent {i} step {h}: reward domain mismatch")));
                }
            }
        }
        Ok(())
    }

    /// State-action visitation `d^{π_i}_h(s, a | c)` for every step, flattened as `s * A + a`.
    pub fn local_visitation(&self, i: usize, policy_i: &[CondTable], c: usize) -> Vec<Vec<f64>> {
        let ag = &self.agents[i];
        let mut d = vec![0.0; ag.n_states];
        d[ag.init_state] = 1.0;
        let mut out = Vec::with_capacity(self.horizon);
        for h in 0..self.horizon {
            let mut sa = vec![0.0; ag.sa_size()];
            let mut next = vec![0.0; ag.n_states];
            for s in 0..ag.n_states {
                if d[s] == 0.0 {
                    continue;
                }
                let pi = policy_i[h].row(c * ag.n_states + s);
                for a in 0..ag.n_actions {
                    let w = d[s] * pi[a];
                    sa[s * ag.n_actions + a] = w;
                    if w > 0.0 {
                        let row = ag.kernels[h].row(ag.x_index(c, s, a));
                        next.iter_mut().zip(row).for_each(|(n, p)| *n += w * p);
                    }
                }
            }
            out.push(sa);
            d = next;
        }
        out
    }

    /// Visitations of every agent: `[agent][context][step]`.
    pub fn visitations(&self, policy: &ProductPolicy) -> Vec<Vec<Vec<Vec<f64>>>> {
        (0..self.n_agents())
            .map(|i| (0..self.n_contexts).map(|c| self.local_visitation(i, &policy.tables[i], c)).collect())
            .collect()
    }

    /// Exact per-agent values of a product policy, factored through the
    /// agents' independent local visitations.
    pub fn value_factored(&self, policy: &ProductPolicy, rewards: &[Vec<IrFunction>]) -> Result<Vec<f64>, GameError> {
        self.check_policy(policy)?;
        self.check_rewards(rewards)?;
        let vis = self.visitations(policy);
        Ok((0..self.n_agents())
            .map(|i| {
                let mut v = 0.0;
                for c in 0..self.n_contexts {
                    if self.rho[c] == 0.0 {
                        continue;
                    }
                    for h in 0..self.horizon {
                        let slots: Vec<&[f64]> =
                            (0..self.n_agents()).filter(|&j| j != i).map(|j| vis[j][c][h].as_slice()).collect();
                        let ag = &self.agents[i];
                        let mut vh = 0.0;
                        for (sa, &w) in vis[i][c][h].iter().enumerate() {
                            if w > 0.0 {
                                vh += w * rewards[i][h].expect_slots(c * ag.sa_size() + sa, &slots);
                            }
                        }
                        v += self.rho[c] * vh;
                    }
                }
                v
            })
            .collect())
    }

    /// Exact per-agent values of a mixture by propagating the joint local-state
    /// distribution and enumerating joint actions, without using the reward
    /// decomposition or the factorization of visitations.
    pub fn value_bruteforce(&self, policy: &MixturePolicy, rewards: &[Vec<IrFunction>]) -> Result<Vec<f64>, GameError> {
        self.check_rewards(rewards)?;
        let n = self.n_agents();
        let s_dims: Vec<usize> = self.agents.iter().map(|a| a.n_states).collect();
        let a_dims: Vec<usize> = self.agents.iter().map(|a| a.n_actions).collect();
        let n_joint_s: usize = s_dims.iter().product();
        let n_joint_a: usize = a_dims.iter().product();
        let work = (self.n_contexts * self.horizon * policy.components.len()) as f64 * n_joint_s as f64 * n_joint_a as f64;
        if work > BRUTEFORCE_LIMIT {
            return Err(GameError::TooLarge(work));
        }
        let mut total = vec![0.0; n];
        let mut s = vec![0; n];
        let mut a = vec![0; n];
        let mut y = vec![0; n.saturating_sub(1)];
        for comp in &policy.components {
            self.check_policy(comp)?;
            for c in 0..self.n_contexts {
                let mut dist = vec![0.0; n_joint_s];
                dist[crate::ir::encode(self.agents.iter().map(|a| a.init_state), &s_dims)] = 1.0;
                for h in 0..self.horizon {
                    let mut next = vec![0.0; n_joint_s];
                    for (js, &ps) in dist.iter().enumerate() {
                        if ps == 0.0 {
                            continue;
                        }
                        crate::ir::decode(js, &s_dims, &mut s);
                        for ja in 0..n_joint_a {
                            crate::ir::decode(ja, &a_dims, &mut a);
                            let mut w = ps;
                            for i in 0..n {
                                w *= comp.tables[i][h].get(c * s_dims[i] + s[i], a[i]);
                            }
                            if w == 0.0 {
                                continue;
                            }
                            for i in 0..n {
                                for j in (0..n).filter(|&j| j != i) {
                                    y[slot_of(i, j)] = s[j] * a_dims[j] + a[j];
                                }
                                let x = self.agents[i].x_index(c, s[i], a[i]);
                                total[i] += self.rho[c] * w * rewards[i][h].evaluate_unchecked(x, &y);
                            }
                            for (jn, slot) in next.iter_mut().enumerate() {
                                let mut p = w;
                                let mut rem = jn;
                                for i in (0..n).rev() {
                                    let sp = rem % s_dims[i];
                                    rem /= s_dims[i];
                                    p *= self.agents[i].kernels[h].get(self.agents[i].x_index(c, s[i], a[i]), sp);
                                    if p == 0.0 {
                                        break;
                                    }
                                }
                                *slot += p;
                            }
                        }
                    }
                    dist = next;
                }
            }
        }
        let t = policy.components.len() as f64;
        Ok(total.into_iter().map(|v| v / t).collect())
    }
}

fn check_prob(p: &[f64], n: usize, what: &str) -> Result<(), GameError> {
    if p.len() != n || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(GameError::Distribution(format!("{what}: bad entries or length")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 * n as f64 {
        return Err(GameError::Distribution(format!("{what} sums to {s}")));
    }
    Ok(())
}

/// Per-agent, per-step conditional action tables `π_{i,h}(a | c, s_i)`, row `c * S_i + s_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductPolicy {
    pub tables: Vec<Vec<CondTable>>,
}

impl ProductPolicy {
    pub fn uniform(dynamics: &Dynamics) -> Self {
        ProductPolicy {
            tables: dynamics
                .agents
                .iter()
                .map(|ag| vec![CondTable::uniform(dynamics.n_contexts * ag.n_states, ag.n_actions); dynamics.horizon])
                .collect(),
        }
    }

    pub fn agent(&self, i: usize) -> &[CondTable] {
        &self.tables[i]
    }

    /// Replaces agent `i`'s tables.
    pub fn with_agent(&self, i: usize, tables: Vec<CondTable>) -> Self {
        let mut out = self.clone();
        out.tables[i] = tables;
        out
    }

    /// Agent `i` becomes agent `perm[i]`.
    pub fn permute_agents(&self, perm: &[usize]) -> Self {
        let mut tables = self.tables.clone();
        for (i, &p) in perm.iter().enumerate() {
            tables[p] = self.tables[i].clone();
        }
        ProductPolicy { tables }
    }
}

/// A uniform mixture of product policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixturePolicy {
    pub components: Vec<ProductPolicy>,
}

impl MixturePolicy {
    pub fn new(components: Vec<ProductPolicy>) -> Result<Self, GameError> {
        if components.is_empty() {
            return Err(GameError::Shape("a mixture needs at least one component".into()));
        }
        Ok(MixturePolicy { components })
    }

    pub fn single(p: ProductPolicy) -> Self {
        MixturePolicy { components: vec![p] }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoupledGame {
    pub schema_version: u32,
    pub dynamics: Dynamics,
    /// `rewards[i][h]` is the mean reward of agent `i` at step `h`.
    pub rewards: Vec<Vec<IrFunction>>,
    /// Declared range of the mean rewards.
    pub reward_range: (f64, f64),
    pub noise: NoiseSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub context: usize,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn returns(&self) -> Vec<f64> {
        let n = self.steps.first().map_or(0, |s| s.rewards.len());
        (0..n).map(|i| self.steps.iter().map(|s| s.rewards[i]).sum()).collect()
    }
}

impl DecoupledGame {
    pub fn new(dynamics: Dynamics, rewards: Vec<Vec<IrFunction>>, reward_range: (f64, f64), noise: NoiseSpec) -> Result<Self, GameError> {
        let g = DecoupledGame { schema_version: SCHEMA_VERSION, dynamics, rewards, reward_range, noise };
        g.validate()?;
        Ok(g)
    }

    /// A one-step stateless game; `rewards[i]` has `x = c * A_i + a_i` and slots `a_j`.
    pub fn contextual(rho: Vec<f64>, action_sizes: &[usize], rewards: Vec<IrFunction>, reward_range: (f64, f64), noise: NoiseSpec) -> Result<Self, GameError> {
        let dynamics = Dynamics::contextual(rho, action_sizes)?;
        DecoupledGame::new(dynamics, rewards.into_iter().map(|r| vec![r]).collect(), reward_range, noise)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(GameError::Schema(self.schema_version));
        }
        self.dynamics.validate()?;
        self.dynamics.check_rewards(&self.rewards)?;
        let (lo, hi) = self.reward_range;
        if !(lo <= hi) {
            return Err(GameError::Shape("reward range must satisfy lo <= hi".into()));
        }
        for (i, per_h) in self.rewards.iter().enumerate() {
            for (h, r) in per_h.iter().enumerate() {
                let (mn, mx) = value_range(r);
                if mn < lo - 1e-9 || mx > hi + 1e-9 {
                    return Err(GameError::RewardRange { agent: i, step: h, lo: mn, hi: mx });
                }
            }
        }
        self.noise.check_range(self.reward_range).map_err(|e| GameError::Distribution(e.to_string()))?;
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.dynamics.n_agents()
    }

    pub fn horizon(&self) -> usize {
        self.dynamics.horizon
    }

    pub fn range_width(&self) -> f64 {
        self.reward_range.1 - self.reward_range.0
    }

    /// Mean rewards of all agents at step `h` for a joint state-action.
    pub fn mean_rewards(&self, h: usize, c: usize, s: &[usize], a: &[usize]) -> Vec<f64> {
        let n = self.n_agents();
        let mut y = vec![0; n.saturating_sub(1)];
        (0..n)
            .map(|i| {
                for j in (0..n).filter(|&j| j != i) {
                    y[slot_of(i, j)] = s[j] * self.dynamics.agents[j].n_actions + a[j];
                }
                self.rewards[i][h].evaluate_unchecked(self.dynamics.agents[i].x_index(c, s[i], a[i]), &y)
            })
            .collect()
    }

    pub fn sample_episode<R: Rng + ?Sized>(&self, policy: &ProductPolicy, rng: &mut R) -> Result<Trajectory, GameError> {
        self.dynamics.check_policy(policy)?;
        let d = &self.dynamics;
        let c = sample_index(&d.rho, rng);
        let mut s: Vec<usize> = d.agents.iter().map(|a| a.init_state).collect();
        let mut steps = Vec::with_capacity(d.horizon);
        for h in 0..d.horizon {
            let a: Vec<usize> = (0..d.n_agents())
                .map(|i| sample_index(policy.tables[i][h].row(c * d.agents[i].n_states + s[i]), rng))
                .collect();
            let rewards = self
                .mean_rewards(h, c, &s, &a)
                .into_iter()
                .map(|m| self.noise.sample(m, rng))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| GameError::Distribution(e.to_string()))?;
            let next: Vec<usize> = (0..d.n_agents())
                .map(|i| sample_index(d.agents[i].kernels[h].row(d.agents[i].x_index(c, s[i], a[i])), rng))
                .collect();
            steps.push(Step { states: s.clone(), actions: a, rewards });
            s = next;
        }
        Ok(Trajectory { context: c, steps })
    }

    pub fn local_visitation(&self, i: usize, policy_i: &[CondTable], c: usize) -> Result<Vec<Vec<f64>>, GameError> {
        if i >= self.n_agents() || c >= self.dynamics.n_contexts {
            return Err(GameError::Shape(format!("agent {i} or context {c} out of range")));
        }
        Ok(self.dynamics.local_visitation(i, policy_i, c))
    }

    pub fn exact_value_factored(&self, policy: &ProductPolicy) -> Result<Vec<f64>, GameError> {
        self.dynamics.value_factored(policy, &self.rewards)
    }

    /// Value of a mixture: the average of its components' values.
    pub fn exact_value_mixture(&self, policy: &MixturePolicy) -> Result<Vec<f64>, GameError> {
        let mut acc = vec![0.0; self.n_agents()];
        for comp in &policy.components {
            let v = self.exact_value_factored(comp)?;
            acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        Ok(acc.into_iter().map(|v| v / policy.len() as f64).collect())
    }

    pub fn exact_value_bruteforce(&self, policy: &MixturePolicy) -> Result<Vec<f64>, GameError> {
        self.dynamics.value_bruteforce(policy, &self.rewards)
    }

    /// Relabels agents: agent `i` becomes agent `perm[i]`.
    pub fn permute_agents(&self, perm: &[usize]) -> Result<DecoupledGame, GameError> {
        let n = self.n_agents();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(GameError::Shape(format!("{perm:?} is not a permutation of {n} agents")));
        }
        let mut agents = self.dynamics.agents.clone();
        let mut rewards = self.rewards.clone();
        for i in 0..n {
            agents[perm[i]] = self.dynamics.agents[i].clone();
            let slot_perm: Vec<usize> = (0..n - 1).map(|w| slot_of(perm[i], perm[agent_of_slot(i, w)])).collect();
            rewards[perm[i]] = self.rewards[i]
                .iter()
                .map(|r| r.permute_slots(&slot_perm))
                .collect::<Result<Vec<_>, _>>()?;
        }
        DecoupledGame::new(Dynamics { agents, ..self.dynamics.clone() }, rewards, self.reward_range, self.noise.clone())
    }
}

/// Exact range of a small function by enumeration, falling back to table bounds.
pub fn value_range(f: &IrFunction) -> (f64, f64) {
    let size = f.x_size() as f64 * f.y_sizes().iter().map(|&n| n as f64).product::<f64>();
    let bounds = f.range_bounds();
    if size > 1e6 {
        return bounds;
    }
    let mut dims = vec![f.x_size()];
    dims.extend_from_slice(f.y_sizes());
    let mut coords = vec![0; dims.len()];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for idx in 0..size as usize {
        crate::ir::decode(idx, &dims, &mut coords);
        let v = f.evaluate_unchecked(coords[0], &coords[1..]);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}
