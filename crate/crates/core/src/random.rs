//! Random instance generators shared by the verification suites, tests and examples.

use rand::Rng;

use crate::data::NoiseSpec;
use crate::game::{AgentDynamics, DecoupledGame, Dynamics, ProductPolicy};
use crate::ir::{subsets_below_rank, BaseDistribution, IrFunction};
use crate::table::CondTable;

/// A probability vector with every entry at least `floor / n`.
pub fn simplex<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    let w = 1.0 - floor;
    raw.iter().map(|v| floor / n as f64 + w * v / s).collect()
}

pub fn cond_table<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, floor: f64) -> CondTable {
    let data: Vec<f64> = (0..rows).flat_map(|_| simplex(rng, cols, floor)).collect();
    CondTable::from_weights(rows, cols, data).expect("positive rows")
}

/// Every table of rank `< rank`, entries uniform on `[-scale, scale]`.
pub fn ir_function<R: Rng + ?Sized>(rng: &mut R, x_size: usize, y_sizes: &[usize], rank: usize, scale: f64) -> IrFunction {
    let mut f = IrFunction::new(x_size, y_sizes.to_vec(), rank).expect("valid domain");
    for key in subsets_below_rank(y_sizes.len(), rank) {
        let values = (0..f.table_len(&key)).map(|_| rng.random_range(-scale..=scale)).collect();
        f.set_table(key, values).expect("key respects rank");
    }
    f
}

/// Strictly positive base distribution; `floor` keeps entries away from zero.
pub fn base<R: Rng + ?Sized>(rng: &mut R, x_size: usize, y_sizes: &[usize], floor: f64) -> BaseDistribution {
    let x = simplex(rng, x_size, floor);
    let y = y_sizes.iter().map(|&n| cond_table(rng, x_size, n, floor)).collect();
    BaseDistribution::new(x, y).expect("valid distribution")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GameShape {
    pub n_agents: usize,
    pub horizon: usize,
    pub n_contexts: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub rank: usize,
}

/// Random decoupled game with rewards in `[0, 1]` and Bernoulli observations.
/// Each reward is a nonnegative `rank`-IR function whose tables are scaled so
/// the total never exceeds 1.
pub fn game<R: Rng + ?Sized>(rng: &mut R, shape: &GameShape) -> DecoupledGame {
    let n = shape.n_agents;
    let agents: Vec<AgentDynamics> = (0..n)
        .map(|_| {
            let n_states = rng.random_range(1..=shape.max_states);
            let n_actions = rng.random_range(1..=shape.max_actions).max(if n_states == 1 { 2 } else { 1 });
            let rows = shape.n_contexts * n_states * n_actions;
            AgentDynamics {
                n_states,
                n_actions,
                init_state: rng.random_range(0..n_states),
                kernels: (0..shape.horizon).map(|_| sparse_kernel(rng, rows, n_states)).collect(),
            }
        })
        .collect();
    let dynamics = Dynamics { n_contexts: shape.n_contexts, horizon: shape.horizon, rho: simplex(rng, shape.n_contexts, 0.2), agents };
    let rewards = (0..n)
        .map(|i| (0..shape.horizon).map(|_| nonnegative_reward(rng, &dynamics, i, shape.rank)).collect())
        .collect();
    DecoupledGame::new(dynamics, rewards, (0.0, 1.0), NoiseSpec::Bernoulli).expect("generated game is valid")
}

/// Random game with exact sizes and full-support transition rows (every
/// successor has probability at least `0.2 / |S|`).
pub fn dense_game<R: Rng + ?Sized>(
    rng: &mut R,
    n_agents: usize,
    horizon: usize,
    n_contexts: usize,
    n_states: usize,
    n_actions: usize,
    rank: usize,
) -> DecoupledGame {
    let rows = n_contexts * n_states * n_actions;
    let agents = (0..n_agents)
        .map(|_| AgentDynamics {
            n_states,
            n_actions,
            init_state: rng.random_range(0..n_states),
            kernels: (0..horizon).map(|_| cond_table(rng, rows, n_states, 0.2)).collect(),
        })
        .collect();
    let dynamics = Dynamics { n_contexts, horizon, rho: simplex(rng, n_contexts, 0.2), agents };
    let rewards = (0..n_agents)
        .map(|i| (0..horizon).map(|_| nonnegative_reward(rng, &dynamics, i, rank)).collect())
        .collect();
    DecoupledGame::new(dynamics, rewards, (0.0, 1.0), NoiseSpec::Bernoulli).expect("generated game is valid")
}

/// Transition rows that are sometimes deterministic, sometimes spread out.
fn sparse_kernel<R: Rng + ?Sized>(rng: &mut R, rows: usize, n_states: usize) -> CondTable {
    let data = (0..rows)
        .flat_map(|_| {
            if rng.random_bool(0.3) {
                let mut row = vec![0.0; n_states];
                row[rng.random_range(0..n_states)] = 1.0;
                row
            } else {
                simplex(rng, n_states, 0.0)
            }
        })
        .collect();
    CondTable::from_weights(rows, n_states, data).expect("positive rows")
}

pub fn nonnegative_reward<R: Rng + ?Sized>(rng: &mut R, dynamics: &Dynamics, i: usize, rank: usize) -> IrFunction {
    let (x_size, y_sizes) = dynamics.reward_domain(i);
    let keys = subsets_below_rank(y_sizes.len(), rank);
    let scale = 1.0 / keys.len() as f64;
    let mut f = IrFunction::new(x_size, y_sizes, rank).expect("valid domain");
    for key in keys {
        let values = (0..f.table_len(&key)).map(|_| scale * rng.random::<f64>()).collect();
        f.set_table(key, values).expect("key respects rank");
    }
    f
}

/// Random product policy; `floor > 0` keeps it strictly positive.
pub fn product_policy<R: Rng + ?Sized>(rng: &mut R, dynamics: &Dynamics, floor: f64) -> ProductPolicy {
    let tables = dynamics
        .agents
        .iter()
        .map(|ag| (0..dynamics.horizon).map(|_| cond_table(rng, dynamics.n_contexts * ag.n_states, ag.n_actions, floor)).collect())
        .collect();
    ProductPolicy { tables }
}

/// Random deterministic local policy of agent `i`, one table per step.
pub fn deterministic_local<R: Rng + ?Sized>(rng: &mut R, dynamics: &Dynamics, i: usize) -> Vec<CondTable> {
    let ag = &dynamics.agents[i];
    (0..dynamics.horizon)
        .map(|_| {
            let choice: Vec<usize> = (0..dynamics.n_contexts * ag.n_states).map(|_| rng.random_range(0..ag.n_actions)).collect();
            CondTable::deterministic(dynamics.n_contexts * ag.n_states, ag.n_actions, |r| choice[r])
        })
        .collect()
}
