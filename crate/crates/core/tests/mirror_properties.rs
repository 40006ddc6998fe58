use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ir_marl::experiment::verify::update_instance;
use ir_marl::mirror::{chi_square, kkt_residual, regret_audit, regularized_update, update_objective, UpdateParams};
use ir_marl::random;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn update_is_a_certified_minimizer(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, q, nu, params) = update_instance(&mut rng);
        let p = regularized_update(&g, &q, &nu, &params).unwrap();
        let p = p.as_slice();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!(kkt_residual(&g, &q, &nu, p, &params) < 1e-8);
        let best = update_objective(&g, p, &q, &nu, &params).unwrap();
        for _ in 0..20 {
            let other = random::simplex(&mut rng, nu.len(), 0.0);
            prop_assert!(best <= update_objective(&g, &other, &q, &nu, &params).unwrap() + 1e-12);
        }
    }

    #[test]
    fn constant_gains_do_not_move_the_iterate(seed in any::<u64>(), level in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..6);
        let nu = random::simplex(&mut rng, n, 0.1);
        let params = UpdateParams::new(rng.random_range(0.0..2.0), rng.random_range(0.1..5.0), 3.0).unwrap();
        let p = regularized_update(&vec![level; n], &nu, &nu, &params).unwrap();
        for (a, b) in p.as_slice().iter().zip(&nu) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    /// Without the regularizer the update is plain Bregman mirror descent and
    /// the bound still holds.
    #[test]
    fn unregularized_mirror_descent_has_no_regret(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..5);
        let nu = random::simplex(&mut rng, n, 0.3);
        let params = UpdateParams::new(0.0, rng.random_range(0.005..0.05), 1.0).unwrap();
        let losses: Vec<Vec<f64>> = (0..100).map(|_| (0..n).map(|_| rng.random_range(0.0..=1.0)).collect()).collect();
        for a in 0..n {
            let mu: Vec<f64> = (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect();
            let audit = regret_audit(&losses, &nu, &params, &mu).unwrap();
            prop_assert!(audit.holds(1e-9), "lhs {} rhs {}", audit.lhs, audit.rhs);
        }
    }
}

#[test]
fn two_action_closed_form_matches_a_grid() {
    let params = UpdateParams::new(1.0, 1.0, 1.0).unwrap();
    let nu = [0.5, 0.5];
    let p = regularized_update(&[1.0, 0.0], &nu, &nu, &params).unwrap();
    assert!((p.as_slice()[0] - 0.5625).abs() < 1e-12);
    let grid_best = (0..=100_000)
        .map(|k| k as f64 / 100_000.0)
        .min_by(|a, b| {
            let fa = update_objective(&[1.0, 0.0], &[*a, 1.0 - a], &nu, &nu, &params).unwrap();
            let fb = update_objective(&[1.0, 0.0], &[*b, 1.0 - b], &nu, &nu, &params).unwrap();
            fa.partial_cmp(&fb).unwrap()
        })
        .unwrap();
    assert!((grid_best - 0.5625).abs() <= 1e-5);
}

#[test]
fn alternating_losses_on_two_actions() {
    let nu = [0.5, 0.5];
    let params = UpdateParams::new(0.05, 0.1, 1.0).unwrap();
    let losses: Vec<Vec<f64>> = (0..100).map(|t| if t % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
    for mu in [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]] {
        let audit = regret_audit(&losses, &nu, &params, &mu).unwrap();
        assert!(audit.holds(1e-12));
    }
    let zero = vec![vec![0.0, 0.0]; 50];
    let audit = regret_audit(&zero, &nu, &params, &nu).unwrap();
    assert!(audit.lhs.abs() < 1e-15);
    assert!((audit.rhs - 0.1 * 50.0 / 4.0).abs() < 1e-12);
}

#[test]
fn chi_square_of_a_point_mass() {
    assert!((chi_square(&[1.0, 0.0, 0.0], &[1.0 / 3.0; 3]).unwrap() - 2.0).abs() < 1e-12);
}
