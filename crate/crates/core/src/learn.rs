//! Offline model estimation: least-squares rewards over IR-constrained table
//! classes and maximum-likelihood tabular transitions.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{generate_dataset, BehaviorPolicy, DataError, OfflineDataset};
use crate::game::{slot_of, AgentDynamics, DecoupledGame, Dynamics, GameError};
use crate::ir::{self, BaseDistribution, IrError, IrFunction, SubsetKey};
use crate::seeding::{self, streams};
use crate::table::{l1_distance, CondTable};

/// Parameter count above which the normal equations are solved by conjugate gradients.
pub const DENSE_LIMIT: usize = 3000;
/// Probability floor used when the empirical base has unseen cells.
pub const BASE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("singular normal equations for agent {agent}, step {step}: the IR table class is over-parameterized; use ridge > 0")]
    Singular { agent: usize, step: usize },
    #[error("dataset has no records at step {0}")]
    Empty(usize),
    #[error("invalid class: {0}")]
    Class(String),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// The reward class: tables over the listed subsets, with a ridge penalty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrClassSpec {
    pub rank: usize,
    /// Subsets to parameterize; all subsets of size below `rank` when absent.
    #[serde(default)]
    pub subsets: Option<Vec<SubsetKey>>,
    /// Weight of `||θ||²` added to the mean squared error.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_ridge() -> f64 {
    1e-8
}

impl IrClassSpec {
    pub fn new(rank: usize) -> Self {
        IrClassSpec { rank, subsets: None, ridge: default_ridge() }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn subsets_for(&self, width: usize) -> Result<Vec<SubsetKey>, LearnError> {
        if self.rank == 0 {
            return Err(LearnError::Class("rank must be at least 1".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(LearnError::Class(format!("ridge {} must be finite and >= 0", self.ridge)));
        }
        match &self.subsets {
            None => Ok(ir::subsets_below_rank(width, self.rank)),
            Some(list) => {
                for s in list {
                    if s.len() >= self.rank || s.indices().iter().any(|&j| j >= width) {
                        return Err(LearnError::Class(format!("subset {:?} violates rank {} or width {width}", s.indices(), self.rank)));
                    }
                }
                Ok(list.clone())
            }
        }
    }
}

/// Shape information shared by a dataset and the game it came from.
#[derive(Clone, Debug)]
struct Shape {
    n_contexts: usize,
    states: Vec<usize>,
    actions: Vec<usize>,
}

impl Shape {
    fn of(d: &OfflineDataset) -> Self {
        Shape {
            n_contexts: d.header.n_contexts,
            states: d.header.state_sizes.clone(),
            actions: d.header.action_sizes.clone(),
        }
    }

    fn x_size(&self, i: usize) -> usize {
        self.n_contexts * self.states[i] * self.actions[i]
    }

    fn x_index(&self, i: usize, c: usize, s: usize, a: usize) -> usize {
        (c * self.states[i] + s) * self.actions[i] + a
    }

    fn y_sizes(&self, i: usize) -> Vec<usize> {
        (0..self.states.len()).filter(|&j| j != i).map(|j| self.states[j] * self.actions[j]).collect()
    }

    fn coords(&self, i: usize, rec: &crate::data::Record) -> (usize, Vec<usize>) {
        let n = self.states.len();
        let mut y = vec![0; n - 1];
        for j in (0..n).filter(|&j| j != i) {
            y[slot_of(i, j)] = rec.s[j] * self.actions[j] + rec.a[j];
        }
        (self.x_index(i, rec.c, rec.s[i], rec.a[i]), y)
    }
}

/// Empirical distribution of agent `i`'s reward inputs at step `h`, with the
/// slot conditionals floored so that every cell has positive mass.
pub fn empirical_base(dataset: &OfflineDataset, i: usize, h: usize) -> Result<BaseDistribution, LearnError> {
    let shape = Shape::of(dataset);
    let recs = dataset.records(h);
    if recs.is_empty() {
        return Err(LearnError::Empty(h));
    }
    let xs = shape.x_size(i);
    let ys = shape.y_sizes(i);
    let mut xc = vec![0.0; xs];
    let mut yc: Vec<Vec<f64>> = ys.iter().map(|&n| vec![0.0; xs * n]).collect();
    for rec in recs {
        let (x, y) = shape.coords(i, rec);
        xc[x] += 1.0;
        for (w, &v) in y.iter().enumerate() {
            yc[w][x * ys[w] + v] += 1.0;
        }
    }
    let m = recs.len() as f64;
    let x_dist: Vec<f64> = xc.iter().map(|c| c / m).collect();
    let y_dists = yc
        .into_iter()
        .zip(&ys)
        .map(|(counts, &n)| {
            let floored: Vec<f64> = counts.iter().map(|c| c + BASE_FLOOR).collect();
            CondTable::from_weights(xs, n, floored)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(IrError::from)?;
    Ok(BaseDistribution::new(x_dist, y_dists)?)
}

/// The distribution of agent `i`'s reward inputs at step `h` under the behavior
/// policy: `x = (c, s_i, a_i)` and each slot `(s_j, a_j)` drawn given `c`.
pub fn behavior_base(dynamics: &Dynamics, behavior: &BehaviorPolicy, i: usize, h: usize) -> Result<BaseDistribution, LearnError> {
    let sigma = behavior.resolved_state_dists(dynamics)?;
    let pair = |j: usize, c: usize| -> Vec<f64> {
        let ag = &dynamics.agents[j];
        let mut out = Vec::with_capacity(ag.sa_size());
        for s in 0..ag.n_states {
            let ps = sigma[j][h].get(c, s);
            for a in 0..ag.n_actions {
                out.push(ps * behavior.policy.tables[j][h].get(c * ag.n_states + s, a));
            }
        }
        out
    };
    let ag = &dynamics.agents[i];
    let mut x_dist = Vec::with_capacity(dynamics.n_contexts * ag.sa_size());
    for c in 0..dynamics.n_contexts {
        x_dist.extend(pair(i, c).into_iter().map(|p| p * dynamics.rho[c]));
    }
    let y_dists = (0..dynamics.n_agents())
        .filter(|&j| j != i)
        .map(|j| {
            let rows: Vec<Vec<f64>> = (0..dynamics.n_contexts)
                .flat_map(|c| std::iter::repeat_n(pair(j, c), ag.sa_size()))
                .collect();
            CondTable::from_rows(&rows)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(IrError::from)?;
    Ok(BaseDistribution::new(x_dist, y_dists)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardFit {
    pub reward: IrFunction,
    pub train_mse: f64,
    pub parameters: usize,
}

/// Least-squares fit of agent `i`'s step-`h` reward over the IR table class.
///
/// Each listed subset contributes one parameter per table cell that occurs in
/// the data, so the class is linear and the fit is the solution of the
/// (ridge-regularized, per-sample normalized) normal equations. The result is
/// re-standardized against the empirical base of the same data.
pub fn fit_reward_lsr(dataset: &OfflineDataset, spec: &IrClassSpec, i: usize, h: usize) -> Result<RewardFit, LearnError> {
    let shape = Shape::of(dataset);
    let recs = dataset.records(h);
    if recs.is_empty() {
        return Err(LearnError::Empty(h));
    }
    let ys = shape.y_sizes(i);
    let subsets = spec.subsets_for(ys.len())?;
    let mut f = IrFunction::new(shape.x_size(i), ys.clone(), spec.rank)?;

    // Map occupied cells of every table to parameter indices.
    let mut cell_param: Vec<Vec<usize>> = subsets.iter().map(|s| vec![usize::MAX; f.table_len(s)]).collect();
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(recs.len());
    let mut n_params = 0;
    for rec in recs {
        let (x, y) = shape.coords(i, rec);
        let mut feats = Vec::with_capacity(subsets.len());
        for (k, s) in subsets.iter().enumerate() {
            let cell = s.indices().iter().fold(x, |acc, &j| acc * ys[j] + y[j]);
            if cell_param[k][cell] == usize::MAX {
                cell_param[k][cell] = n_params;
                n_params += 1;
            }
            feats.push(cell_param[k][cell]);
        }
        rows.push(feats);
    }
    let m = recs.len() as f64;
    let targets: Vec<f64> = recs.iter().map(|r| r.r[i]).collect();
    let theta = if n_params <= DENSE_LIMIT {
        solve_dense(&rows, &targets, n_params, spec.ridge).ok_or(LearnError::Singular { agent: i, step: h })?
    } else {
        solve_cg(&rows, &targets, n_params, spec.ridge).ok_or(LearnError::Singular { agent: i, step: h })?
    };
    for (k, s) in subsets.iter().enumerate() {
        let values: Vec<f64> = cell_param[k].iter().map(|&p| if p == usize::MAX { 0.0 } else { theta[p] }).collect();
        f.set_table(s.clone(), values)?;
    }
    let train_mse = rows
        .iter()
        .zip(&targets)
        .map(|(feats, t)| (feats.iter().map(|&p| theta[p]).sum::<f64>() - t).powi(2))
        .sum::<f64>()
        / m;
    let reward = ir::standardize(&f, &empirical_base(dataset, i, h)?)?;
    Ok(RewardFit { reward, train_mse, parameters: n_params })
}

fn solve_dense(rows: &[Vec<usize>], targets: &[f64], p: usize, ridge: f64) -> Option<Vec<f64>> {
    let m = rows.len() as f64;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for (feats, &t) in rows.iter().zip(targets) {
        for &u in feats {
            b[u] += t / m;
            for &v in feats {
                a[(u, v)] += 1.0 / m;
            }
        }
    }
    let max_diag = (0..p).map(|k| a[(k, k)]).fold(0.0, f64::max);
    for k in 0..p {
        a[(k, k)] += ridge;
    }
    let chol = a.cholesky()?;
    if ridge == 0.0 {
        let min_pivot = (0..p).map(|k| chol.l_dirty()[(k, k)].powi(2)).fold(f64::INFINITY, f64::min);
        if min_pivot < 1e-10 * max_diag {
            return None;
        }
    }
    Some(chol.solve(&b).iter().copied().collect())
}

/// Matrix-free conjugate gradients on the same normal equations.
fn solve_cg(rows: &[Vec<usize>], targets: &[f64], p: usize, ridge: f64) -> Option<Vec<f64>> {
    let m = rows.len() as f64;
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().map(|x| ridge * x).collect();
        for feats in rows {
            let dot: f64 = feats.iter().map(|&u| v[u]).sum::<f64>() / m;
            for &u in feats {
                out[u] += dot;
            }
        }
        out
    };
    let mut b = vec![0.0; p];
    for (feats, &t) in rows.iter().zip(targets) {
        for &u in feats {
            b[u] += t / m;
        }
    }
    let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut x = vec![0.0; p];
    if bnorm == 0.0 {
        return Some(x);
    }
    let mut r = b.clone();
    let mut d = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..(10 * p).max(100) {
        if rr.sqrt() <= 1e-13 * bnorm {
            return Some(x);
        }
        let ad = apply(&d);
        let dad: f64 = d.iter().zip(&ad).map(|(a, b)| a * b).sum();
        if dad <= 0.0 {
            return None;
        }
        let alpha = rr / dad;
        x.iter_mut().zip(&d).for_each(|(x, d)| *x += alpha * d);
        r.iter_mut().zip(&ad).for_each(|(r, a)| *r -= alpha * a);
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        d.iter_mut().zip(&r).for_each(|(d, r)| *d = r + beta * *d);
        rr = rr_new;
    }
    if ridge > 0.0 {
        Some(x)
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionFit {
    pub kernel: CondTable,
    /// Rows `(c, s, a)` never observed; they fall back to uniform (or pure smoothing).
    pub unseen_rows: Vec<usize>,
    /// Mean log-likelihood of the observed transitions under the fit.
    pub log_likelihood: f64,
}

/// Tabular maximum-likelihood transition estimate with add-`alpha` smoothing.
pub fn fit_transition_mle(dataset: &OfflineDataset, i: usize, h: usize, alpha: f64) -> Result<TransitionFit, LearnError> {
    let shape = Shape::of(dataset);
    let recs = dataset.records(h);
    if recs.is_empty() {
        return Err(LearnError::Empty(h));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(LearnError::Class(format!("smoothing {alpha} must be finite and >= 0")));
    }
    let ns = shape.states[i];
    let rows = shape.x_size(i);
    let mut counts = vec![0.0; rows * ns];
    for rec in recs {
        counts[shape.x_index(i, rec.c, rec.s[i], rec.a[i]) * ns + rec.sp[i]] += 1.0;
    }
    let mut unseen_rows = Vec::new();
    let mut data = vec![0.0; rows * ns];
    for r in 0..rows {
        let row = &counts[r * ns..(r + 1) * ns];
        let n: f64 = row.iter().sum();
        if n == 0.0 {
            unseen_rows.push(r);
        }
        for s in 0..ns {
            data[r * ns + s] = if n + alpha * ns as f64 > 0.0 {
                (row[s] + alpha) / (n + alpha * ns as f64)
            } else {
                1.0 / ns as f64
            };
        }
    }
    let kernel = CondTable::new(rows, ns, data).map_err(IrError::from)?;
    let log_likelihood = recs
        .iter()
        .map(|rec| kernel.get(shape.x_index(i, rec.c, rec.s[i], rec.a[i]), rec.sp[i]).ln())
        .sum::<f64>()
        / recs.len() as f64;
    Ok(TransitionFit { kernel, unseen_rows, log_likelihood })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// `[agent][step]` empirical mean squared error of the reward fit.
    pub reward_mse: Vec<Vec<f64>>,
    /// `[agent][step]` mean log-likelihood of the transition fit.
    pub log_likelihood: Vec<Vec<f64>>,
    /// `[agent][step]` number of unobserved `(c, s, a)` rows.
    pub unseen_rows: Vec<Vec<usize>>,
}

/// Fitted rewards and transitions: the input to the actor-critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedModel {
    pub dynamics: Dynamics,
    pub rewards: Vec<Vec<IrFunction>>,
    pub reward_range: (f64, f64),
    pub diagnostics: FitDiagnostics,
}

impl LearnedModel {
    pub fn n_agents(&self) -> usize {
        self.dynamics.n_agents()
    }

    /// Reward width used to scale the update bound: the declared width or the
    /// sum of table spreads of the fitted rewards, whichever is larger.
    pub fn reward_width(&self) -> f64 {
        let declared = self.reward_range.1 - self.reward_range.0;
        self.rewards
            .iter()
            .flatten()
            .map(|r| {
                let (lo, hi) = r.range_bounds();
                hi - lo
            })
            .fold(declared, f64::max)
    }

    /// A model whose rewards and transitions are the true ones.
    pub fn from_game(game: &DecoupledGame) -> Self {
        let n = game.n_agents();
        let hh = game.horizon();
        LearnedModel {
            dynamics: game.dynamics.clone(),
            rewards: game.rewards.clone(),
            reward_range: game.reward_range,
            diagnostics: FitDiagnostics {
                reward_mse: vec![vec![0.0; hh]; n],
                log_likelihood: vec![vec![0.0; hh]; n],
                unseen_rows: vec![vec![0; hh]; n],
            },
        }
    }
}

/// Fits every agent's reward and transition at every step.
pub fn fit_model(dataset: &OfflineDataset, spec: &IrClassSpec, alpha: f64, reward_range: (f64, f64)) -> Result<LearnedModel, LearnError> {
    dataset.validate()?;
    let hd = &dataset.header;
    let n = dataset.n_agents();
    let jobs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..hd.horizon).map(move |h| (i, h))).collect();
    let fits: Vec<Result<(RewardFit, TransitionFit), LearnError>> = jobs
        .par_iter()
        .map(|&(i, h)| Ok((fit_reward_lsr(dataset, spec, i, h)?, fit_transition_mle(dataset, i, h, alpha)?)))
        .collect();
    let mut rewards = vec![Vec::with_capacity(hd.horizon); n];
    let mut kernels = vec![Vec::with_capacity(hd.horizon); n];
    let mut diag = FitDiagnostics {
        reward_mse: vec![Vec::new(); n],
        log_likelihood: vec![Vec::new(); n],
        unseen_rows: vec![Vec::new(); n],
    };
    for ((i, _), fit) in jobs.iter().zip(fits) {
        let (rf, tf) = fit?;
        diag.reward_mse[*i].push(rf.train_mse);
        diag.log_likelihood[*i].push(tf.log_likelihood);
        diag.unseen_rows[*i].push(tf.unseen_rows.len());
        rewards[*i].push(rf.reward);
        kernels[*i].push(tf.kernel);
    }
    let mut rho = vec![0.0; hd.n_contexts];
    for rec in dataset.records(0) {
        rho[rec.c] += 1.0;
    }
    let m0 = dataset.records(0).len() as f64;
    rho.iter_mut().for_each(|v| *v /= m0);
    let dynamics = Dynamics {
        n_contexts: hd.n_contexts,
        horizon: hd.horizon,
        rho,
        agents: (0..n)
            .map(|i| AgentDynamics {
                n_states: hd.state_sizes[i],
                n_actions: hd.action_sizes[i],
                init_state: hd.initial_states[i],
                kernels: std::mem::take(&mut kernels[i]),
            })
            .collect(),
    };
    dynamics.validate()?;
    Ok(LearnedModel { dynamics, rewards, reward_range, diagnostics: diag })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    /// `(M, mean error)` per grid point.
    pub rows: Vec<(usize, f64)>,
    pub slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn rate_table(m_grid: &[usize], errors: Vec<f64>) -> RateTable {
    let xs: Vec<f64> = m_grid.iter().map(|&m| m as f64).collect();
    let slope = loglog_slope(&xs, &errors);
    RateTable { rows: m_grid.iter().copied().zip(errors).collect(), slope }
}

/// Mean behavior-distribution MSE of the fitted rewards against the truth, per sample size.
pub fn rate_audit_lsr(game: &DecoupledGame, behavior: &BehaviorPolicy, spec: &IrClassSpec, m_grid: &[usize], trials: usize, seed: u64) -> Result<RateTable, LearnError> {
    let d = &game.dynamics;
    let bases: Vec<Vec<BaseDistribution>> = (0..d.n_agents())
        .map(|i| (0..d.horizon).map(|h| behavior_base(d, behavior, i, h)).collect())
        .collect::<Result<_, _>>()?;
    let mut errors = Vec::with_capacity(m_grid.len());
    for (g, &m) in m_grid.iter().enumerate() {
        let per_trial: Vec<Result<f64, LearnError>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let ds = generate_dataset(game, behavior, m, seeding::derive(seed, &[streams::AUDIT, g as u64, t as u64]))?;
                let mut acc = 0.0;
                for i in 0..d.n_agents() {
                    for h in 0..d.horizon {
                        let fit = fit_reward_lsr(&ds, spec, i, h)?;
                        acc += ir::shifted_mse(&game.rewards[i][h], &fit.reward, &bases[i][h])?;
                    }
                }
                Ok(acc / (d.n_agents() * d.horizon) as f64)
            })
            .collect();
        let mut sum = 0.0;
        for v in per_trial {
            sum += v?;
        }
        errors.push(sum / trials as f64);
    }
    Ok(rate_table(m_grid, errors))
}

/// Mean behavior-distribution `E||P̂(·|x) - P*(·|x)||₁²`, per sample size.
pub fn rate_audit_mle(game: &DecoupledGame, behavior: &BehaviorPolicy, alpha: f64, m_grid: &[usize], trials: usize, seed: u64) -> Result<RateTable, LearnError> {
    let d = &game.dynamics;
    let bases: Vec<Vec<Vec<f64>>> = (0..d.n_agents())
        .map(|i| {
            (0..d.horizon)
                .map(|h| behavior_base(d, behavior, i, h).map(|b| b.x_dist().to_vec()))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut errors = Vec::with_capacity(m_grid.len());
    for (g, &m) in m_grid.iter().enumerate() {
        let per_trial: Vec<Result<f64, LearnError>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let ds = generate_dataset(game, behavior, m, seeding::derive(seed, &[streams::AUDIT, 1 << 20 | g as u64, t as u64]))?;
                let mut acc = 0.0;
                for i in 0..d.n_agents() {
                    for h in 0..d.horizon {
                        let fit = fit_transition_mle(&ds, i, h, alpha)?;
                        let truth = &d.agents[i].kernels[h];
                        acc += bases[i][h]
                            .iter()
                            .enumerate()
                            .map(|(x, &p)| p * l1_distance(fit.kernel.row(x), truth.row(x)).powi(2))
                            .sum::<f64>();
                    }
                }
                Ok(acc / (d.n_agents() * d.horizon) as f64)
            })
            .collect();
        let mut sum = 0.0;
        for v in per_trial {
            sum += v?;
        }
        errors.push(sum / trials as f64);
    }
    Ok(rate_table(m_grid, errors))
}
