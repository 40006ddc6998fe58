//! Invariant suites over frozen random instance sets. Each suite reports the
//! number of cases, the violations and the worst slack (bound minus observed,
//! negative on violation).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{drift_slack, performance_difference, visitation_tv};
use crate::data::{generate_dataset, BehaviorPolicy};
use crate::drac::{critic_exact, critic_monte_carlo, run_drac, CriticMode, DracParams};
use crate::game::{DecoupledGame, MixturePolicy, ProductPolicy};
use crate::gap::best_response;
use crate::ir::{self, BaseDistribution, IrFunction};
use crate::learn::{fit_model, loglog_slope, rate_audit_lsr, rate_audit_mle, IrClassSpec, LearnedModel};
use crate::mirror::{kkt_residual, regret_audit, regularized_update, SimplexPoint, UpdateParams};
use crate::random::{self, GameShape};
use crate::seeding::{self, streams};
use crate::table::CondTable;

use super::{stage, ExperimentError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Standardize,
    Alignment,
    Shift,
    Mirror,
    Regret,
    Drift,
    Tv,
    Perf,
    Oracle,
    Rates,
    Mc,
}

impl Suite {
    pub const ALL: [Suite; 11] = [
        Suite::Standardize,
        Suite::Alignment,
        Suite::Shift,
        Suite::Mirror,
        Suite::Regret,
        Suite::Drift,
        Suite::Tv,
        Suite::Perf,
        Suite::Oracle,
        Suite::Rates,
        Suite::Mc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Standardize => "standardize",
            Suite::Alignment => "alignment",
            Suite::Shift => "shift",
            Suite::Mirror => "mirror",
            Suite::Regret => "regret",
            Suite::Drift => "drift",
            Suite::Tv => "tv",
            Suite::Perf => "perf",
            Suite::Oracle => "oracle",
            Suite::Rates => "rates",
            Suite::Mc => "mc",
        }
    }

    fn id(&self) -> u64 {
        Suite::ALL.iter().position(|s| s == self).unwrap() as u64
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| ExperimentError::Config(format!("unknown suite '{s}' (expected one of {}, or all)", names())))
    }
}

fn names() -> String {
    Suite::ALL.iter().map(Suite::name).collect::<Vec<_>>().join(", ")
}

/// Parses a suite name, where `all` selects every suite.
pub fn parse_suites(name: &str) -> Result<Vec<Suite>, ExperimentError> {
    if name == "all" {
        Ok(Suite::ALL.to_vec())
    } else {
        Ok(vec![name.parse()?])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: usize,
    pub violations: usize,
    pub worst_slack: f64,
    pub detail: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// A case violates when its slack is below `-tol` (or NaN).
    fn from_slacks(suite: Suite, slacks: &[f64], tol: f64, detail: String) -> Self {
        SuiteReport {
            suite,
            cases: slacks.len(),
            violations: slacks.iter().filter(|s| !(**s >= -tol)).count(),
            worst_slack: slacks.iter().copied().fold(f64::INFINITY, f64::min),
            detail,
        }
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<12} cases={:<5} violations={:<3} worst_slack={:.3e}  {}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.cases,
            self.violations,
            self.worst_slack,
            self.detail
        )
    }
}

pub fn instance_rng(seed: u64, suite: Suite, k: usize) -> ChaCha8Rng {
    seeding::rng(seed, &[streams::VERIFY, suite.id(), k as u64])
}

pub fn run(suites: &[Suite], seed: u64) -> Result<Vec<SuiteReport>, ExperimentError> {
    suites.iter().map(|&s| run_suite(s, seed)).collect()
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport, ExperimentError> {
    match suite {
        Suite::Standardize => standardize_suite(seed, 200),
        Suite::Alignment => alignment_suite(seed, 200),
        Suite::Shift => shift_suite(seed, 200),
        Suite::Mirror => mirror_suite(seed, 1000),
        Suite::Regret => regret_suite(seed, 100, 200),
        Suite::Drift => drift_suite(seed, 24),
        Suite::Tv => tv_suite(seed, 50),
        Suite::Perf => perf_suite(seed, 50),
        Suite::Oracle => oracle_suite(seed, 100),
        Suite::Rates => rates_suite(seed),
        Suite::Mc => mc_suite(seed),
    }
}

/// Random IR function and strictly positive base: `K ≤ 3`, `W ≤ 5`, slot sizes `≤ 4`.
pub fn ir_instance<R: Rng + ?Sized>(rng: &mut R) -> (IrFunction, BaseDistribution) {
    let k = rng.random_range(1..=3usize);
    let w = rng.random_range(1..=5usize).max(k - 1);
    let xs = rng.random_range(1..=3usize);
    let ys: Vec<usize> = (0..w).map(|_| rng.random_range(1..=4)).collect();
    let f = random::ir_function(rng, xs, &ys, k, 1.0);
    let b = random::base(rng, xs, &ys, 0.2);
    (f, b)
}

/// Largest `|f(x, y) - g(x, y)|` over the whole domain.
pub fn max_pointwise_diff(f: &IrFunction, g: &IrFunction) -> f64 {
    let dims: Vec<usize> = std::iter::once(f.x_size()).chain(f.y_sizes().iter().copied()).collect();
    let total: usize = dims.iter().product();
    let mut coords = vec![0; dims.len()];
    let mut worst: f64 = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        for (k, &d) in dims.iter().enumerate().rev() {
            coords[k] = rem % d;
            rem /= d;
        }
        let (x, y) = (coords[0], &coords[1..]);
        worst = worst.max((f.evaluate_unchecked(x, y) - g.evaluate_unchecked(x, y)).abs());
    }
    worst
}

fn standardize_suite(seed: u64, count: usize) -> Result<SuiteReport, ExperimentError> {
    let res: Vec<(f64, f64)> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, Suite::Standardize, k);
            let (f, b) = ir_instance(&mut rng);
            let s = ir::standardize(&f, &b)?;
            Ok((max_pointwise_diff(&f, &s), ir::max_conditional_mean(&s, &b)?))
        })
        .collect::<Result<_, ir::IrError>>()
        .map_err(stage("standardize"))?;
    let slacks: Vec<f64> = res.iter().map(|(r, m)| -r.max(*m)).collect();
    let rec = res.iter().map(|r| r.0).fold(0.0, f64::max);
    let mean = res.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(SuiteReport::from_slacks(Suite::Standardize, &slacks, 1e-10, format!("max reconstruction {rec:.1e}, max conditional mean {mean:.1e}")))
}

/// Pair of functions of equal rank on one domain and a base distribution.
pub fn pair_instance<R: Rng + ?Sized>(rng: &mut R) -> (IrFunction, IrFunction, BaseDistribution) {
    let (f, b) = ir_instance(rng);
    let scale = [1e-3, 0.1, 1.0][rng.random_range(0..3)];
    let noise = random::ir_function(rng, f.x_size(), f.y_sizes(), f.rank(), scale);
    let g = f.add_scaled(&noise, 1.0).expect("same domain");
    (f, g, b)
}

fn alignment_suite(seed: u64, count: usize) -> Result<SuiteReport, ExperimentError> {
    let slacks: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, Suite::Alignment, k);
            let (f, g, b) = pair_instance(&mut rng);
            let eps = ir::shifted_mse(&f, &g, &b)?;
            let errs = ir::subfunction_errors(&f, &g, &b)?;
            Ok(errs.iter().map(|(key, e)| 2f64.powi(key.len() as i32) * eps - e).fold(f64::INFINITY, f64::min))
        })
        .collect::<Result<_, ir::IrError>>()
        .map_err(stage("alignment"))?;
    Ok(SuiteReport::from_slacks(Suite::Alignment, &slacks, 1e-9, "subset error <= 2^k eps".into()))
}

/// Train/target pair for the shift bound. Odd instances use a sharply
/// concentrated target to push the density ratio up.
pub fn shift_instance<R: Rng + ?Sized>(rng: &mut R, k: usize) -> (IrFunction, IrFunction, BaseDistribution, BaseDistribution) {
    let (f, g, train) = pair_instance(rng);
    let (xs, ys) = (f.x_size(), f.y_sizes().to_vec());
    let target = if k % 2 == 0 {
        random::base(rng, xs, &ys, 0.0)
    } else {
        let mut peaked = |n: usize| -> Vec<f64> {
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(6) + 1e-9).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        };
        let x = peaked(xs);
        let y = ys
            .iter()
            .map(|&n| CondTable::from_weights(xs, n, (0..xs).flat_map(|_| peaked(n)).collect()).expect("positive rows"))
            .collect();
        BaseDistribution::new(x, y).expect("valid distribution")
    };
    (f, g, train, target)
}

/// `shifted MSE / ((2W)^{2(K-1)} C^K ε)` for one instance.
pub fn shift_ratio(f: &IrFunction, g: &IrFunction, train: &BaseDistribution, target: &BaseDistribution) -> Result<f64, ir::IrError> {
    let eps = ir::shifted_mse(f, g, train)?;
    let c = ir::density_ratio_bound(train, target)?;
    let lhs = ir::shifted_mse(f, g, target)?;
    let unit = ir::shift_bound(f.width(), f.rank(), c, eps) / ir::SHIFT_CONSTANT;
    Ok(if unit > 0.0 { lhs / unit } else { 0.0 })
}

/// Largest observed ratio on the frozen instance set; `SHIFT_CONSTANT` is this value, frozen.
pub fn calibrate_shift(seed: u64, count: usize) -> Result<f64, ExperimentError> {
    let ratios: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, Suite::Shift, k);
            let (f, g, tr, ta) = shift_instance(&mut rng, k);
            shift_ratio(&f, &g, &tr, &ta)
        })
        .collect::<Result<_, ir::IrError>>()
        .map_err(stage("shift"))?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

fn shift_suite(seed: u64, count: usize) -> Result<SuiteReport, ExperimentError> {
    let res: Vec<(f64, f64)> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, Suite::Shift, count + k);
            let (f, g, tr, ta) = shift_instance(&mut rng, k);
            let eps = ir::shifted_mse(&f, &g, &tr)?;
            let c = ir::density_ratio_bound(&tr, &ta)?;
            let bound = ir::shift_bound(f.width(), f.rank(), c, eps);
            let lhs = ir::shifted_mse(&f, &g, &ta)?;
            Ok((bound - lhs, c))
        })
        .collect::<Result<_, ir::IrError>>()
        .map_err(stage("shift"))?;
    let slacks: Vec<f64> = res.iter().map(|r| r.0).collect();
    let cmax = res.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(SuiteReport::from_slacks(Suite::Shift, &slacks, 1e-12, format!("c = {}, largest C_DS {cmax:.1}", ir::SHIFT_CONSTANT)))
}

/// Random update problem: gains, previous iterate (possibly with zeros),
/// positive reference and parameters.
pub fn update_instance<R: Rng + ?Sized>(rng: &mut R) -> (Vec<f64>, Vec<f64>, Vec<f64>, UpdateParams) {
    let n = rng.random_range(2..=6);
    let bound = rng.random_range(0.5..2.0);
    let gains: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..bound)).collect();
    let nu = random::simplex(rng, n, 0.1);
    let mut q = random::simplex(rng, n, 0.0);
    if rng.random_bool(0.3) {
        q[rng.random_range(0..n)] = 0.0;
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= s);
    }
    let lambda = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..2.0) };
    let eta = 10f64.powf(rng.random_range(-2.0..1.0));
    (gains, q, nu, UpdateParams::new(lambda, eta, bound).expect("valid"))
}

fn mirror_suite(seed: u64, count: usize) -> Result<SuiteReport, ExperimentError> {
    let slacks: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, Suite::Mirror, k);
            let (g, q, nu, params) = update_instance(&mut rng);
            let p = regularized_update(&g, &q, &nu, &params)?;
            SimplexPoint::new(p.as_slice().to_vec())?;
            Ok(-kkt_residual(&g, &q, &nu, p.as_slice(), &params))
        })
        .collect::<Result<_, crate::mirror::MirrorError>>()
        .map_err(stage("mirror"))?;
    Ok(SuiteReport::from_slacks(Suite::Mirror, &slacks, 1e-8, "variational inequality residual <= 1e-8".into()))
}

/// Loss sequence of one of four kinds: i.i.d. uniform, a fixed action,
/// alternating vertices, or adaptive (full loss on the currently most likely action).
pub fn loss_sequence<R: Rng + ?Sized>(rng: &mut R, kind: usize, t: usize, nu: &[f64], params: &UpdateParams) -> Vec<Vec<f64>> {
    let n = nu.len();
    let b = params.bound;
    match kind % 4 {
        0 => (0..t).map(|_| (0..n).map(|_| rng.random_range(0.0..=b)).collect()).collect(),
        1 => {
            let a = rng.random_range(0..n);
            (0..t).map(|_| (0..n).map(|j| if j == a { b } else { 0.0 }).collect()).collect()
        }
        2 => (0..t).map(|s| (0..n).map(|j| if j == s % n { b } else { 0.0 }).collect()).collect(),
        _ => {
            let mut p = nu.to_vec();
            let mut out = Vec::with_capacity(t);
            for _ in 0..t {
                let top = (0..n).fold(0, |best, j| if p[j] > p[best] { j } else { best });
                let l: Vec<f64> = (0..n).map(|j| if j == top { 0.0 } else { b }).collect();
                p = regularized_update(&l, &p, nu, params).expect("valid update").as_slice().to_vec();
                out.push(l);
            }
            out
        }
    }
}

fn regret_suite(seed: u64, count: usize, horizon: usize) -> Result<SuiteReport, ExperimentError> {
    let slacks: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, Suite::Regret, k);
            let n = rng.random_range(2..=5);
            let nu = random::simplex(&mut rng, n, 0.2);
            let params = UpdateParams::new(rng.random_range(0.0..1.0), 10f64.powf(rng.random_range(-2.0..0.0)), rng.random_range(0.5..2.0))
                .expect("valid");
            let losses = loss_sequence(&mut rng, k, horizon, &nu, &params);
            let mut comparators: Vec<Vec<f64>> = (0..n).map(|a| SimplexPoint::vertex(n, a).as_slice().to_vec()).collect();
            comparators.push(nu.clone());
            comparators.push(random::simplex(&mut rng, n, 0.0));
            let mut worst = f64::INFINITY;
            for mu in &comparators {
                let a = regret_audit(&losses, &nu, &params, mu)?;
                worst = worst.min(a.rhs - a.lhs);
            }
            Ok(worst)
        })
        .collect::<Result<_, crate::mirror::MirrorError>>()
        .map_err(stage("regret"))?;
    Ok(SuiteReport::from_slacks(Suite::Regret, &slacks, 1e-9, format!("T = {horizon}, comparators: vertices, reference, random")))
}

fn small_shape<R: Rng + ?Sized>(rng: &mut R, max_agents: usize, max_h: usize, max_size: usize) -> GameShape {
    GameShape {
        n_agents: rng.random_range(1..=max_agents),
        horizon: rng.random_range(1..=max_h),
        n_contexts: rng.random_range(1..=2),
        max_states: max_size,
        max_actions: max_size,
        rank: rng.random_range(1..=2),
    }
}

/// Model fitted from a small dataset of the game under a positive behavior policy.
fn fitted<R: Rng + ?Sized>(rng: &mut R, game: &DecoupledGame, samples: usize) -> (LearnedModel, BehaviorPolicy) {
    let behavior = BehaviorPolicy::new(random::product_policy(rng, &game.dynamics, 0.3));
    let ds = generate_dataset(game, &behavior, samples, rng.random()).expect("valid game");
    let rank = game.rewards[0][0].rank();
    let model = fit_model(&ds, &IrClassSpec::new(rank).with_ridge(1e-6), 0.1, game.reward_range).expect("fit");
    (model, behavior)
}

fn drift_suite(seed: u64, count: usize) -> Result<SuiteReport, ExperimentError> {
    let slacks: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, Suite::Drift, k);
            let shape = small_shape(&mut rng, 3, 3, 3);
            let game = random::game(&mut rng, &shape);
            let (model, behavior) = if k % 2 == 0 {
                fitted(&mut rng, &game, 300)
            } else {
                (LearnedModel::from_game(&game), BehaviorPolicy::uniform(&game.dynamics))
            };
            let lambda = [0.01, 0.1, 1.0][k % 3];
            let eta = [0.1, 1.0, 10.0][(k / 3) % 3];
            let params = DracParams { iterations: 15, lambda, eta, critic: CriticMode::ExactDp, seed: k as u64 };
            let out = run_drac(&model, &behavior, &params)?;
            Ok(drift_slack(&out))
        })
        .collect::<Result<_, crate::drac::DracError>>()
        .map_err(stage("drift"))?;
    Ok(SuiteReport::from_slacks(Suite::Drift, &slacks, 1e-9, "max-cell chi2 <= B (t-1) / lambda".into()))
}

fn tv_suite(seed: u64, count: usize) -> Result<SuiteReport, ExperimentError> {
    let slacks: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, Suite::Tv, k);
            let shape = small_shape(&mut rng, 3, 4, 3);
            let game = random::game(&mut rng, &shape);
            let (model, _) = fitted(&mut rng, &game, 40);
            let policy = random::product_policy(&mut rng, &game.dynamics, 0.0);
            let rows = visitation_tv(&game.dynamics, &model.dynamics, &policy)?;
            Ok(rows
                .iter()
                .flat_map(|r| {
                    std::iter::once(r.bound - r.joint_l1).chain(r.local_bound.iter().zip(&r.local_l1).map(|(b, l)| b - l))
                })
                .fold(f64::INFINITY, f64::min))
        })
        .collect::<Result<_, crate::game::GameError>>()
        .map_err(stage("tv"))?;
    Ok(SuiteReport::from_slacks(Suite::Tv, &slacks, 1e-9, "visitation L1 <= accumulated transition L1".into()))
}

fn perf_suite(seed: u64, count: usize) -> Result<SuiteReport, ExperimentError> {
    let slacks: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, Suite::Perf, k);
            let shape = small_shape(&mut rng, 3, 3, 3);
            let game = random::game(&mut rng, &shape);
            let (model, _) = fitted(&mut rng, &game, 100);
            let d = &model.dynamics;
            let others = random::product_policy(&mut rng, d, 0.0);
            let i = rng.random_range(0..d.n_agents());
            let mu = random::product_policy(&mut rng, d, 0.0).tables[i].clone();
            let mu_prime = if rng.random_bool(0.5) {
                random::deterministic_local(&mut rng, d, i)
            } else {
                random::product_policy(&mut rng, d, 0.0).tables[i].clone()
            };
            let pd = performance_difference(&model, &others, i, &mu, &mu_prime)?;
            Ok(-pd.error())
        })
        .collect::<Result<_, crate::drac::DracError>>()
        .map_err(stage("perf"))?;
    Ok(SuiteReport::from_slacks(Suite::Perf, &slacks, 1e-9, "performance-difference identity in the learned model".into()))
}

/// Random game with `N ≤ 3`, `H ≤ 3`, `|S|, |A| ≤ 3` and a mixture of 1 to 3 product policies.
pub fn oracle_instance<R: Rng + ?Sized>(rng: &mut R) -> (DecoupledGame, MixturePolicy) {
    let shape = small_shape(rng, 3, 3, 3);
    let game = random::game(rng, &shape);
    let t = rng.random_range(1..=3);
    let comps = (0..t).map(|_| random::product_policy(rng, &game.dynamics, 0.0)).collect();
    (game, MixturePolicy::new(comps).expect("nonempty"))
}

fn oracle_suite(seed: u64, count: usize) -> Result<SuiteReport, ExperimentError> {
    let slacks: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, Suite::Oracle, k);
            let (game, mix) = oracle_instance(&mut rng);
            let fact = game.exact_value_mixture(&mix)?;
            let brute = game.exact_value_bruteforce(&mix)?;
            let mut worst = fact.iter().zip(&brute).map(|(a, b)| -(a - b).abs()).fold(f64::INFINITY, f64::min);
            for i in 0..game.n_agents() {
                let br = best_response(&game, &mix, i)?;
                let dev = MixturePolicy::new(mix.components.iter().map(|p| p.with_agent(i, br.policy.clone())).collect())?;
                let v = game.exact_value_bruteforce(&dev)?[i];
                worst = worst.min(-(v - br.value).abs()).min(br.value - fact[i]);
            }
            Ok(worst)
        })
        .collect::<Result<_, crate::game::GameError>>()
        .map_err(stage("oracle"))?;
    Ok(SuiteReport::from_slacks(Suite::Oracle, &slacks, 1e-9, "factored = joint enumeration; best response consistent".into()))
}

pub const RATE_GRID: [usize; 3] = [100, 1000, 10_000];

/// The fixed game of the rate audits: two agents, two steps, rank 2.
pub fn rate_game(seed: u64) -> DecoupledGame {
    random::dense_game(&mut instance_rng(seed, Suite::Rates, 0), 2, 2, 2, 2, 2, 2)
}

fn rates_suite(seed: u64) -> Result<SuiteReport, ExperimentError> {
    let game = rate_game(seed);
    let behavior = BehaviorPolicy::uniform(&game.dynamics);
    let lsr = rate_audit_lsr(&game, &behavior, &IrClassSpec::new(2), &RATE_GRID, 20, seed).map_err(stage("rates"))?;
    let mle = rate_audit_mle(&game, &behavior, 0.0, &RATE_GRID, 20, seed).map_err(stage("rates"))?;
    let slacks = [-0.8 - lsr.slope, -0.8 - mle.slope];
    Ok(SuiteReport::from_slacks(Suite::Rates, &slacks, 0.0, format!("log-log slopes: reward {:.3}, transition {:.3}", lsr.slope, mle.slope)))
}

pub const MC_GRID: [usize; 3] = [100, 1000, 10_000];

/// Mean over trials of the max-cell error of the Monte-Carlo critic, per `M_sim`, and the log-log slope.
pub fn mc_convergence(seed: u64, trials: usize) -> Result<(Vec<f64>, f64), ExperimentError> {
    let mut rng = instance_rng(seed, Suite::Mc, 0);
    let game = random::dense_game(&mut rng, 3, 3, 2, 2, 2, 2);
    let model = LearnedModel::from_game(&game);
    let behavior = BehaviorPolicy::uniform(&game.dynamics);
    let policy: ProductPolicy = random::product_policy(&mut rng, &game.dynamics, 0.2);
    let exact = critic_exact(&model, &policy, 0).map_err(stage("mc"))?;
    let mut errors = Vec::new();
    for &m in &MC_GRID {
        let mut acc = 0.0;
        for trial in 0..trials {
            let mut worst: f64 = 0.0;
            for (h, ex) in exact.iter().enumerate() {
                let s = seeding::derive(seed, &[streams::MONTE_CARLO, m as u64, trial as u64]);
                let mc = critic_monte_carlo(&model, &policy, &behavior, 0, h, m, s).map_err(stage("mc"))?;
                for (x, v) in mc.values.iter().enumerate() {
                    if mc.visits[x] > 0 {
                        worst = worst.max((v - ex[x]).abs());
                    }
                }
            }
            acc += worst;
        }
        errors.push(acc / trials as f64);
    }
    let xs: Vec<f64> = MC_GRID.iter().map(|&m| m as f64).collect();
    let slope = loglog_slope(&xs, &errors);
    Ok((errors, slope))
}

fn mc_suite(seed: u64) -> Result<SuiteReport, ExperimentError> {
    let (errors, slope) = mc_convergence(seed, 20)?;
    Ok(SuiteReport::from_slacks(
        Suite::Mc,
        &[-0.4 - slope],
        0.0,
        format!("max-cell error {:.4} / {:.4} / {:.4}, slope {slope:.3}", errors[0], errors[1], errors[2]),
    ))
}
