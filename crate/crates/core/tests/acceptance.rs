//! Acceptance run: one PASS/FAIL line per criterion. Reference values are
//! recomputed here by enumeration, inclusion-exclusion or projected gradient
//! descent and compared against the library.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use ir_marl::data::{generate_dataset, BehaviorPolicy};
use ir_marl::drac::{run_drac, CriticMode, DracParams};
use ir_marl::experiment::pipeline::run_pipeline;
use ir_marl::experiment::study::run_study;
use ir_marl::experiment::verify::{
    self, instance_rng, loss_sequence, max_pointwise_diff, mc_convergence, oracle_instance, pair_instance, rate_game, shift_instance,
    update_instance, Suite, RATE_GRID,
};
use ir_marl::experiment::{ExperimentConfig, QuadraticConfig};
use ir_marl::game::{DecoupledGame, MixturePolicy};
use ir_marl::gap::best_response;
use ir_marl::ir::{self, BaseDistribution, IrFunction};
use ir_marl::learn::{fit_model, loglog_slope, rate_audit_lsr, rate_audit_mle, IrClassSpec, LearnedModel};
use ir_marl::mirror::{kkt_residual, regularized_update, UpdateParams};
use ir_marl::quadratic::CriticArm;
use ir_marl::random::{self, GameShape};
use ir_marl::table::CondTable;

const SEED: u64 = 0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

// ---------- independent reference computations ----------

/// Row-major index of `(x, y_S)` in the table of subset `key`.
fn table_index(f: &IrFunction, key: &[usize], x: usize, ys: &[usize]) -> usize {
    key.iter().zip(ys).fold(x, |acc, (&j, &y)| acc * f.y_sizes()[j] + y)
}

/// Every assignment of values to the slots in `slots`.
fn assignments(sizes: &[usize], slots: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &j in slots {
        out = out.into_iter().flat_map(|a| (0..sizes[j]).map(move |v| [a.clone(), vec![v]].concat())).collect();
    }
    out
}

/// `E[f | x, y_T]` under a base whose slots are independent given `x`, with
/// `fixed[j]` holding the value of slot `j` for `j ∈ T`.
fn cond_exp(f: &IrFunction, b: &BaseDistribution, x: usize, fixed: &[Option<usize>]) -> f64 {
    let mut total = 0.0;
    for (key, values) in f.tables() {
        let key = key.indices();
        let free: Vec<usize> = key.iter().copied().filter(|&j| fixed[j].is_none()).collect();
        for a in assignments(f.y_sizes(), &free) {
            let mut w = 1.0;
            let ys: Vec<usize> = key
                .iter()
                .map(|&j| match fixed[j] {
                    Some(v) => v,
                    None => {
                        let v = a[free.iter().position(|&u| u == j).unwrap()];
                        w *= b.y_dist(j).get(x, v);
                        v
                    }
                })
                .collect();
            total += w * values[table_index(f, key, x, &ys)];
        }
    }
    total
}

/// `E[(Σ_{T⊆S} (-1)^{|S|-|T|} E[d | x, y_T])²]`, the energy of the centered
/// component of `d` on `S` obtained by inclusion-exclusion.
fn component_energy(d: &IrFunction, b: &BaseDistribution, s: &[usize]) -> f64 {
    let w = d.width();
    let mut acc = 0.0;
    for x in 0..d.x_size() {
        for ys in assignments(d.y_sizes(), s) {
            let mut g = 0.0;
            for mask in 0..(1usize << s.len()) {
                let mut fixed = vec![None; w];
                for (p, &j) in s.iter().enumerate() {
                    if mask >> p & 1 == 1 {
                        fixed[j] = Some(ys[p]);
                    }
                }
                let sign = if (s.len() - mask.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
                g += sign * cond_exp(d, b, x, &fixed);
            }
            let p: f64 = b.x_dist()[x] * s.iter().zip(&ys).map(|(&j, &v)| b.y_dist(j).get(x, v)).product::<f64>();
            acc += p * g * g;
        }
    }
    acc
}

/// `E_b[(f - g)²]` by enumerating the whole joint domain.
fn brute_mse(f: &IrFunction, g: &IrFunction, b: &BaseDistribution) -> f64 {
    let all: Vec<usize> = (0..f.width()).collect();
    let mut acc = 0.0;
    for x in 0..f.x_size() {
        for ys in assignments(f.y_sizes(), &all) {
            let p: f64 = b.x_dist()[x] * ys.iter().enumerate().map(|(j, &v)| b.y_dist(j).get(x, v)).product::<f64>();
            let diff = f.evaluate(x, &ys).unwrap() - g.evaluate(x, &ys).unwrap();
            acc += p * diff * diff;
        }
    }
    acc
}

/// Largest target/train ratio over the `x` marginal and every slot conditional.
fn brute_ratio(train: &BaseDistribution, target: &BaseDistribution) -> f64 {
    let mut c: f64 = 0.0;
    for (p, q) in train.x_dist().iter().zip(target.x_dist()) {
        c = c.max(q / p);
    }
    for j in 0..train.width() {
        for (p, q) in train.y_dist(j).as_slice().iter().zip(target.y_dist(j).as_slice()) {
            c = c.max(q / p);
        }
    }
    c
}

fn chi2(p: &[f64], nu: &[f64]) -> f64 {
    p.iter().zip(nu).map(|(a, b)| (a - b).powi(2) / b).sum()
}

/// Euclidean projection onto the simplex by sorting.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Minimizer of `-<g, p> + λ χ²(p, ν) + Σ (p - q)² / (η ν)` by projected
/// gradient descent with step `1 / L`.
fn pgd_update(g: &[f64], q: &[f64], nu: &[f64], params: &UpdateParams) -> Vec<f64> {
    let alpha = params.lambda + 1.0 / params.eta;
    let lip = 2.0 * alpha / nu.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p = nu.to_vec();
    for _ in 0..200_000 {
        let grad: Vec<f64> =
            (0..p.len()).map(|a| -g[a] + 2.0 * params.lambda * (p[a] / nu[a] - 1.0) + 2.0 * (p[a] - q[a]) / (params.eta * nu[a])).collect();
        let next = project_simplex(&p.iter().zip(&grad).map(|(x, d)| x - d / lip).collect::<Vec<_>>());
        let step = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        p = next;
        if step < 1e-15 {
            break;
        }
    }
    p
}

/// Best deviation value of agent `i` found by trying every deterministic local policy.
fn enumerate_deviations(game: &DecoupledGame, mix: &MixturePolicy, i: usize) -> f64 {
    let d = &game.dynamics;
    let ag = &d.agents[i];
    let rows = d.n_contexts * ag.n_states;
    let cells = rows * d.horizon;
    let count = ag.n_actions.pow(cells as u32);
    let mut best = f64::NEG_INFINITY;
    for code in 0..count {
        let mut rem = code;
        let choice: Vec<usize> = (0..cells)
            .map(|_| {
                let a = rem % ag.n_actions;
                rem /= ag.n_actions;
                a
            })
            .collect();
        let tables: Vec<CondTable> =
            (0..d.horizon).map(|h| CondTable::deterministic(rows, ag.n_actions, |r| choice[h * rows + r])).collect();
        let dev = MixturePolicy::new(mix.components.iter().map(|p| p.with_agent(i, tables.clone())).collect()).unwrap();
        best = best.max(game.exact_value_bruteforce(&dev).unwrap()[i]);
    }
    best
}

// ---------- criteria ----------

fn standardization() -> Outcome {
    let worst = (0..200)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(SEED, Suite::Standardize, k);
            let (f, b) = verify::ir_instance(&mut rng);
            let s = ir::standardize(&f, &b).unwrap();
            let mut mean: f64 = 0.0;
            for (key, values) in s.tables() {
                let key = key.indices();
                for p in 0..key.len() {
                    let rest: Vec<usize> = key.iter().enumerate().filter(|(q, _)| *q != p).map(|(_, &j)| j).collect();
                    for x in 0..s.x_size() {
                        for other in assignments(s.y_sizes(), &rest) {
                            let mut m = 0.0;
                            for v in 0..s.y_sizes()[key[p]] {
                                let mut ys = other.clone();
                                ys.insert(p, v);
                                m += b.y_dist(key[p]).get(x, v) * values[table_index(&s, key, x, &ys)];
                            }
                            mean = mean.max(m.abs());
                        }
                    }
                }
            }
            (max_pointwise_diff(&f, &s), mean)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    outcome(worst.0 <= 1e-10 && worst.1 <= 1e-10, format!("reconstruction {:.1e}, conditional mean {:.1e}", worst.0, worst.1))
}

fn alignment() -> Outcome {
    let res: Vec<(f64, f64)> = (0..200)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(SEED, Suite::Alignment, k);
            let (f, g, b) = pair_instance(&mut rng);
            let eps = brute_mse(&f, &g, &b);
            let d = f.add_scaled(&g, -1.0).unwrap();
            let lib = ir::subfunction_errors(&f, &g, &b).unwrap();
            let mut slack = f64::INFINITY;
            let mut agree: f64 = 0.0;
            for key in ir::subsets_below_rank(f.width(), f.rank()) {
                let e = component_energy(&d, &b, key.indices());
                slack = slack.min((1u64 << key.len()) as f64 * eps + 1e-9 - e);
                agree = agree.max((e - lib.get(&key).copied().unwrap_or(0.0)).abs());
            }
            (slack, agree)
        })
        .collect();
    let slack = res.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let agree = res.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(slack >= 0.0 && agree <= 1e-9, format!("worst slack {slack:.2e}, library vs inclusion-exclusion {agree:.1e}"))
}

fn distribution_shift() -> Outcome {
    let res: Vec<(f64, f64)> = (0..200)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(SEED, Suite::Shift, 200 + k);
            let (f, g, train, target) = shift_instance(&mut rng, k);
            let eps = brute_mse(&f, &g, &train);
            let c = brute_ratio(&train, &target);
            let lhs = brute_mse(&f, &g, &target);
            let bound = ir::SHIFT_CONSTANT * (2.0 * f.width() as f64).powi(2 * (f.rank() as i32 - 1)) * c.powi(f.rank() as i32) * eps;
            (bound * (1.0 + 1e-9) + 1e-15 - lhs, c)
        })
        .collect();
    let violations = res.iter().filter(|r| r.0 < 0.0).count();
    let cmax = res.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(violations == 0, format!("c = {}, violations {violations}, largest C_DS {cmax:.1}", ir::SHIFT_CONSTANT))
}

fn mirror_exactness() -> Outcome {
    let res: Vec<(f64, f64)> = (0..1000)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(SEED, Suite::Mirror, k);
            let (g, q, nu, params) = update_instance(&mut rng);
            let p = regularized_update(&g, &q, &nu, &params).unwrap();
            let oracle = pgd_update(&g, &q, &nu, &params);
            let dist = p.as_slice().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            (kkt_residual(&g, &q, &nu, p.as_slice(), &params), dist)
        })
        .collect();
    let kkt = res.iter().map(|r| r.0).fold(0.0, f64::max);
    let dist = res.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(kkt <= 1e-8 && dist <= 1e-7, format!("certificate {kkt:.1e}, distance to projected-gradient oracle {dist:.1e}"))
}

fn drift() -> Outcome {
    let res: Vec<f64> = (0..24usize)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(SEED, Suite::Drift, 1000 + k);
            let shape = GameShape {
                n_agents: rng.random_range(1..=3),
                horizon: rng.random_range(1..=3),
                n_contexts: rng.random_range(1..=2),
                max_states: 3,
                max_actions: 3,
                rank: 2,
            };
            let game = random::game(&mut rng, &shape);
            let (model, behavior) = if k % 2 == 0 {
                let b = BehaviorPolicy::new(random::product_policy(&mut rng, &game.dynamics, 0.3));
                let ds = generate_dataset(&game, &b, 200, k as u64).unwrap();
                (fit_model(&ds, &IrClassSpec::new(2).with_ridge(1e-6), 0.1, game.reward_range).unwrap(), b)
            } else {
                (LearnedModel::from_game(&game), BehaviorPolicy::uniform(&game.dynamics))
            };
            let lambda = [0.01, 0.1, 1.0][k % 3];
            let eta = [0.1, 1.0, 10.0][(k / 3) % 3];
            let out = run_drac(&model, &behavior, &DracParams { iterations: 15, lambda, eta, critic: CriticMode::ExactDp, seed: 0 }).unwrap();
            let bound = model.dynamics.horizon as f64 * model.reward_width();
            let mut slack = f64::INFINITY;
            for (t0, pi) in out.policy.components.iter().enumerate() {
                for (tables, nus) in pi.tables.iter().zip(&behavior.policy.tables) {
                    for (p, nu) in tables.iter().zip(nus) {
                        for r in 0..p.rows() {
                            slack = slack.min(bound * t0 as f64 / lambda + 1e-9 - chi2(p.row(r), nu.row(r)));
                        }
                    }
                }
            }
            slack
        })
        .collect();
    let slack = res.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(slack >= 0.0, format!("{} runs, worst slack {slack:.2e}", res.len()))
}

fn no_regret() -> Outcome {
    let t_len = 200;
    let res: Vec<f64> = (0..100)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(SEED, Suite::Regret, 500 + k);
            let n = rng.random_range(2..=5);
            let nu = random::simplex(&mut rng, n, 0.2);
            let params = UpdateParams::new(rng.random_range(0.0..1.0), 10f64.powf(rng.random_range(-2.0..0.0)), rng.random_range(0.5..2.0)).unwrap();
            let losses = loss_sequence(&mut rng, k, t_len, &nu, &params);
            let mut iterates = vec![nu.clone()];
            for l in &losses {
                let p = regularized_update(l, iterates.last().unwrap(), &nu, &params).unwrap();
                iterates.push(p.as_slice().to_vec());
            }
            let mut comparators: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect();
            comparators.push(nu.clone());
            comparators.push(random::simplex(&mut rng, n, 0.0));
            let reg: f64 = iterates.iter().map(|p| params.lambda * chi2(p, &nu)).sum();
            comparators
                .iter()
                .map(|mu| {
                    let lin: f64 = losses.iter().zip(&iterates).map(|(l, p)| (0..n).map(|a| l[a] * (mu[a] - p[a])).sum::<f64>()).sum();
                    let tf = t_len as f64;
                    let rhs = (tf * params.lambda + 1.0 / params.eta) * chi2(mu, &nu) + params.eta * tf * params.bound.powi(2) / 4.0;
                    rhs + 1e-9 - lin - reg
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let slack = res.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(slack >= 0.0, format!("100 sequences, T = {t_len}, worst slack {slack:.3e}"))
}

fn oracle_equivalence() -> Outcome {
    let res: Vec<(f64, f64, usize)> = (0..100)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(SEED, Suite::Oracle, 2000 + k);
            // Keep the deviation enumeration tractable: at most 3^8 local policies per agent.
            let (game, mix) = loop {
                let (g, m) = oracle_instance(&mut rng);
                let d = &g.dynamics;
                if d.agents.iter().all(|a| (a.n_actions as f64).powi((d.n_contexts * a.n_states * d.horizon) as i32) <= 6561.0) {
                    break (g, m);
                }
            };
            let fact = game.exact_value_mixture(&mix).unwrap();
            let brute = game.exact_value_bruteforce(&mix).unwrap();
            let value_err = fact.iter().zip(&brute).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let mut br_err: f64 = 0.0;
            for i in 0..game.n_agents() {
                br_err = br_err.max((best_response(&game, &mix, i).unwrap().value - enumerate_deviations(&game, &mix, i)).abs());
            }
            (value_err, br_err, game.n_agents())
        })
        .collect();
    let v = res.iter().map(|r| r.0).fold(0.0, f64::max);
    let b = res.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(v <= 1e-9 && b <= 1e-9, format!("factored vs joint {v:.1e}, best response vs enumeration {b:.1e}"))
}

const E2E_CONFIG: &str = r#"
samples = 100000
seeds = [0, 1, 2, 3, 4]
reward_class = { rank = 2 }

[game]
kind = "random"
n_agents = 3
horizon = 2
n_contexts = 2
max_states = 2
max_actions = 2
rank = 2

[train]
iterations = 1000
lambda = 0.001
eta = 0.1
"#;

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(E2E_CONFIG, dir.path()).unwrap();
    let results = run_pipeline(&cfg, dir.path()).unwrap();
    let gaps: Vec<f64> = results.iter().map(|r| r.gap.max_gap).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let mut behavior_gap = 0.0;
    if let Ok(game) = cfg.build_game() {
        let b = cfg.build_behavior(&game).unwrap();
        behavior_gap = ir_marl::gap::gap(&game, &MixturePolicy::single(b.policy)).unwrap().max_gap;
    }
    outcome(mean <= 0.05, format!("mean max gap {mean:.4} over {} seeds (behavior policy {behavior_gap:.4}), range 1", gaps.len()))
}

fn rate_audits() -> Outcome {
    let game = rate_game(SEED);
    let behavior = BehaviorPolicy::uniform(&game.dynamics);
    let lsr = rate_audit_lsr(&game, &behavior, &IrClassSpec::new(2), &RATE_GRID, 20, 100).unwrap();
    let mle = rate_audit_mle(&game, &behavior, 0.0, &RATE_GRID, 20, 100).unwrap();
    let xs: Vec<f64> = RATE_GRID.iter().map(|&m| m as f64).collect();
    let errs = |rows: &[(usize, f64)]| rows.iter().map(|r| r.1).collect::<Vec<_>>();
    let (s_r, s_t) = (loglog_slope(&xs, &errs(&lsr.rows)), loglog_slope(&xs, &errs(&mle.rows)));
    let agree = (s_r - lsr.slope).abs().max((s_t - mle.slope).abs());
    outcome(s_r <= -0.8 && s_t <= -0.8 && agree < 1e-12, format!("reward MSE slope {s_r:.3}, transition L1^2 slope {s_t:.3}"))
}

fn mc_critic() -> Outcome {
    let (errors, slope) = mc_convergence(SEED, 20).unwrap();
    let xs = [2.0f64, 3.0, 4.0];
    let ys: Vec<f64> = errors.iter().map(|e| e.log10()).collect();
    let (mx, my) = (3.0, ys.iter().sum::<f64>() / 3.0);
    let fitted = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing && fitted <= -0.4 && (fitted - slope).abs() < 1e-9,
        format!("max-cell error {:.4} / {:.4} / {:.4}, slope {fitted:.3}", errors[0], errors[1], errors[2]),
    )
}

fn quadratic_study() -> Outcome {
    let cfg: QuadraticConfig = toml::from_str("n_agents = [8, 16]").unwrap();
    let rep = run_study(&cfg, None).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [8, 16] {
        let (m, sigma) = cfg.budget(n);
        ok &= (sigma * n as f64 / m as f64 - 0.1).abs() < 1e-12;
        let j = rep.mean_final_gap(n, CriticArm::Joint).unwrap();
        let two = rep.mean_final_gap(n, CriticArm::TwoIr).unwrap();
        let one = rep.mean_final_gap(n, CriticArm::OneIr).unwrap();
        ok &= two < one && two < j && two <= 0.2;
        parts.push(format!("N={n} M={m}: 2-IR {two:.4}, 1-IR {one:.4}, joint {j:.4}"));
    }
    outcome(ok, parts.join("; "))
}

fn main() {
    // Keep the run quiet when invoked through `cargo test -- <filter>` for a different target.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    // (name, check, runtime limit in seconds)
    let criteria: [(&str, fn() -> Outcome, f64); 11] = [
        ("standardization", standardization, 10.0),
        ("alignment", alignment, 30.0),
        ("distribution_shift", distribution_shift, 30.0),
        ("mirror_exactness", mirror_exactness, 10.0),
        ("drift", drift, f64::INFINITY),
        ("no_regret", no_regret, 20.0),
        ("oracle_equivalence", oracle_equivalence, f64::INFINITY),
        ("end_to_end", end_to_end, 300.0),
        ("rate_audits", rate_audits, f64::INFINITY),
        ("mc_critic", mc_critic, f64::INFINITY),
        ("quadratic_study", quadratic_study, 300.0),
    ];
    let mut failed = 0;
    for (k, (name, run, limit)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let passed = o.passed && secs < *limit;
        println!("{} {:>2} {:<20} {:>7.2}s  {}", if passed { "PASS" } else { "FAIL" }, k + 1, name, secs, o.detail);
        failed += usize::from(!passed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
