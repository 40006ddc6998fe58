use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ir_marl::data::{generate_dataset, BehaviorPolicy, NoiseSpec};
use ir_marl::drac::{critic_exact, critic_monte_carlo, run_contextual, run_drac, theoretical_hyperparams, CriticMode, DracParams, Setting};
use ir_marl::game::{DecoupledGame, MixturePolicy, ProductPolicy};
use ir_marl::gap::{best_response, gap};
use ir_marl::ir::IrFunction;
use ir_marl::learn::{fit_model, IrClassSpec, LearnedModel};
use ir_marl::random;
use ir_marl::table::CondTable;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn params(iterations: usize, lambda: f64, eta: f64) -> DracParams {
    DracParams { iterations, lambda, eta, critic: CriticMode::ExactDp, seed: 0 }
}

/// Two-action contextual game with agent 0 paid for matching and agent 1 for mismatching.
fn matching_pennies() -> DecoupledGame {
    let r0 = IrFunction::new(2, vec![2], 2).unwrap().with_table(&[0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let r1 = IrFunction::new(2, vec![2], 2).unwrap().with_table(&[0], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    DecoupledGame::contextual(vec![1.0], &[2, 2], vec![r0, r1], (0.0, 1.0), NoiseSpec::None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn relabeling_agents_permutes_values(seed in any::<u64>()) {
        let mut r = rng(seed);
        let shape = random::GameShape { n_agents: 3, horizon: 2, n_contexts: 2, max_states: 2, max_actions: 3, rank: 3 };
        let g = random::game(&mut r, &shape);
        let pi = random::product_policy(&mut r, &g.dynamics, 0.0);
        let perm = [2, 0, 1];
        let gp = g.permute_agents(&perm).unwrap();
        let v = g.exact_value_factored(&pi).unwrap();
        let vp = gp.exact_value_factored(&pi.permute_agents(&perm)).unwrap();
        for i in 0..3 {
            prop_assert!((v[i] - vp[perm[i]]).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_mixture_components_change_nothing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random::dense_game(&mut r, 2, 2, 1, 2, 2, 2);
        let pi = random::product_policy(&mut r, &g.dynamics, 0.0);
        let single = g.exact_value_bruteforce(&MixturePolicy::single(pi.clone())).unwrap();
        let double = g.exact_value_bruteforce(&MixturePolicy::new(vec![pi.clone(), pi]).unwrap()).unwrap();
        for (a, b) in single.iter().zip(&double) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    /// The exact critic of a single agent against an independent backward recursion.
    #[test]
    fn single_agent_critic_is_policy_evaluation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random::dense_game(&mut r, 1, 3, 2, 3, 2, 1);
        let model = LearnedModel::from_game(&g);
        let pi = random::product_policy(&mut r, &g.dynamics, 0.0);
        let q = critic_exact(&model, &pi, 0).unwrap();
        let ag = &g.dynamics.agents[0];
        let mut v_next = vec![0.0; 2 * ag.n_states];
        for h in (0..3).rev() {
            let mut v = vec![0.0; 2 * ag.n_states];
            for c in 0..2 {
                for s in 0..ag.n_states {
                    for a in 0..ag.n_actions {
                        let x = ag.x_index(c, s, a);
                        let mut qq = g.rewards[0][h].evaluate(x, &[]).unwrap();
                        for sp in 0..ag.n_states {
                            qq += ag.kernels[h].get(x, sp) * v_next[c * ag.n_states + sp];
                        }
                        prop_assert!((qq - q[h][x]).abs() < 1e-9);
                        v[c * ag.n_states + s] += pi.tables[0][h].get(c * ag.n_states + s, a) * qq;
                    }
                }
            }
            v_next = v;
        }
    }

    /// Every pure equilibrium found by checking all unilateral switches has gap 0.
    #[test]
    fn pure_equilibria_have_zero_gap(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pay: Vec<Vec<f64>> = (0..2).map(|_| (0..4).map(|_| r.random::<f64>()).collect()).collect();
        let u = |i: usize, a0: usize, a1: usize| pay[i][a0 * 2 + a1];
        let r0 = IrFunction::new(2, vec![2], 2).unwrap().with_table(&[0], pay[0].clone()).unwrap();
        let r1t: Vec<f64> = (0..4).map(|k| u(1, k % 2, k / 2)).collect();
        let r1 = IrFunction::new(2, vec![2], 2).unwrap().with_table(&[0], r1t).unwrap();
        let g = DecoupledGame::contextual(vec![1.0], &[2, 2], vec![r0, r1], (0.0, 1.0), NoiseSpec::None).unwrap();
        for a0 in 0..2 {
            for a1 in 0..2 {
                let stable = u(0, a0, a1) >= u(0, 1 - a0, a1) && u(1, a0, a1) >= u(1, a0, 1 - a1);
                if !stable {
                    continue;
                }
                let pi = ProductPolicy {
                    tables: vec![vec![CondTable::deterministic(1, 2, |_| a0)], vec![CondTable::deterministic(1, 2, |_| a1)]],
                };
                prop_assert!(gap(&g, &MixturePolicy::single(pi)).unwrap().max_gap <= 1e-9);
            }
        }
    }
}

#[test]
fn mixed_equilibrium_of_matching_pennies() {
    let g = matching_pennies();
    let uniform = ProductPolicy::uniform(&g.dynamics);
    let rep = gap(&g, &MixturePolicy::single(uniform.clone())).unwrap();
    assert!(rep.max_gap.abs() <= 1e-12);
    assert!((g.exact_value_factored(&uniform).unwrap()[0] - 0.5).abs() < 1e-15);
    assert!((best_response(&g, &MixturePolicy::single(uniform), 0).unwrap().value - 0.5).abs() < 1e-15);
}

#[test]
fn one_iteration_returns_the_behavior_policy() {
    let g = random::dense_game(&mut rng(1), 2, 2, 2, 2, 3, 2);
    let b = BehaviorPolicy::new(random::product_policy(&mut rng(2), &g.dynamics, 0.5));
    let out = run_drac(&LearnedModel::from_game(&g), &b, &params(1, 0.1, 1.0)).unwrap();
    assert_eq!(out.policy.components, vec![b.policy]);
}

#[test]
fn stateless_one_step_game_matches_the_contextual_procedure() {
    let g = random::dense_game(&mut rng(3), 3, 1, 2, 1, 3, 2);
    let model = LearnedModel::from_game(&g);
    let b = BehaviorPolicy::new(random::product_policy(&mut rng(4), &g.dynamics, 0.4));
    let general = run_drac(&model, &b, &params(40, 0.05, 2.0)).unwrap().policy;
    let direct = run_contextual(&model, &b.policy, 40, 0.05, 2.0).unwrap();
    assert_eq!(general.len(), direct.len());
    for (p, q) in general.components.iter().zip(&direct.components) {
        for (ti, tj) in p.tables.iter().flatten().zip(q.tables.iter().flatten()) {
            assert!(ti.max_abs_diff(tj) < 1e-12);
        }
    }
}

#[test]
fn single_agent_run_improves_on_behavior() {
    let g = random::dense_game(&mut rng(5), 1, 2, 2, 2, 3, 1);
    let b = BehaviorPolicy::uniform(&g.dynamics);
    let ds = generate_dataset(&g, &b, 20_000, 1).unwrap();
    let model = fit_model(&ds, &IrClassSpec::new(1), 0.1, g.reward_range).unwrap();
    let out = run_drac(&model, &b, &params(200, 0.05, 1.0)).unwrap();
    let learned = g.exact_value_mixture(&out.policy).unwrap()[0];
    let behavior = g.exact_value_factored(&b.policy).unwrap()[0];
    assert!(learned >= behavior - 0.02, "{learned} vs {behavior}");
}

#[test]
fn sampled_critic_is_exact_without_randomness() {
    let mut g = random::dense_game(&mut rng(6), 2, 3, 1, 2, 2, 2);
    for ag in g.dynamics.agents.iter_mut() {
        for (h, k) in ag.kernels.iter_mut().enumerate() {
            *k = CondTable::deterministic(k.rows(), 2, |r| (r + h) % 2);
        }
    }
    let model = LearnedModel::from_game(&g);
    let pi = ProductPolicy {
        tables: g.dynamics.agents.iter().map(|_| (0..3).map(|h| CondTable::deterministic(2, 2, |r| (r + h) % 2)).collect()).collect(),
    };
    let b = BehaviorPolicy::new(pi.clone());
    let exact = critic_exact(&model, &pi, 0).unwrap();
    for h in 0..3 {
        let mc = critic_monte_carlo(&model, &pi, &b, 0, h, 50, 9).unwrap();
        for (x, &n) in mc.visits.iter().enumerate() {
            if n > 0 {
                assert!((mc.values[x] - exact[h][x]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sampled_critic_agrees_with_the_exact_one() {
    let g = random::dense_game(&mut rng(7), 2, 2, 2, 2, 2, 2);
    let model = LearnedModel::from_game(&g);
    let pi = random::product_policy(&mut rng(8), &g.dynamics, 0.3);
    let b = BehaviorPolicy::uniform(&g.dynamics);
    let exact = critic_exact(&model, &pi, 1).unwrap();
    for h in 0..2 {
        let mc = critic_monte_carlo(&model, &pi, &b, 1, h, 10_000, 3).unwrap();
        for (x, &n) in mc.visits.iter().enumerate() {
            // Returns lie in [0, H], so five standard errors are at most 5 H / (2 √n).
            if n == 0 {
                continue;
            }
            assert!((mc.values[x] - exact[h][x]).abs() <= 5.0 * 2.0 / (2.0 * (n as f64).sqrt()));
        }
    }
}

#[test]
fn drift_stays_within_the_regularization_budget() {
    let g = random::dense_game(&mut rng(9), 3, 2, 2, 2, 2, 2);
    let model = LearnedModel::from_game(&g);
    let b = BehaviorPolicy::uniform(&g.dynamics);
    for (lambda, eta) in [(0.01, 0.1), (0.1, 1.0), (1.0, 10.0)] {
        let out = run_drac(&model, &b, &params(30, lambda, eta)).unwrap();
        assert!(ir_marl::audit::drift_slack(&out) >= -1e-9);
    }
}

#[test]
fn schedule_plug_in_values() {
    let s = theoretical_hyperparams(Setting::Contextual, 1, 4, 1, 0.01, 1.0).unwrap();
    assert_eq!(s.iterations, 100);
    assert!((s.eta - 0.1).abs() < 1e-12 && (s.lambda - 0.1).abs() < 1e-12);
    let m = theoretical_hyperparams(Setting::Markov, 1, 3, 1, 1e-5, 1.0).unwrap();
    assert!((m.lambda - 0.1).abs() < 1e-12 && (m.eta - 0.1).abs() < 1e-12);
    assert_eq!(m.iterations, 100);
    assert!(theoretical_hyperparams(Setting::Markov, 1, 3, 1, 0.0, 1.0).is_err());
}
