use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ir_marl::experiment::verify::{ir_instance, max_pointwise_diff, pair_instance};
use ir_marl::ir::{self, BaseDistribution, IrFunction, SubsetKey};
use ir_marl::random;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardize_is_idempotent(seed in any::<u64>()) {
        let (f, b) = ir_instance(&mut rng(seed));
        let s = ir::standardize(&f, &b).unwrap();
        let ss = ir::standardize(&s, &b).unwrap();
        prop_assert!(s.max_abs_table_diff(&ss) < 1e-12);
        prop_assert!(max_pointwise_diff(&f, &s) < 1e-10);
        prop_assert!(ir::max_conditional_mean(&s, &b).unwrap() < 1e-10);
    }

    /// Moving `c(x)` from the constant table into a slot table leaves the
    /// function unchanged, so the standardized tables must agree.
    #[test]
    fn standardized_form_is_unique(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (f, b) = ir_instance(&mut r);
        prop_assume!(f.rank() >= 2);
        let shift: Vec<f64> = (0..f.x_size()).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)).collect();
        let n1 = f.y_sizes()[0];
        let mut g = f.clone();
        let base: Vec<f64> = g.table(&SubsetKey::empty()).unwrap().iter().zip(&shift).map(|(v, s)| v + s).collect();
        g.set_table(SubsetKey::empty(), base).unwrap();
        let key = SubsetKey::single(0);
        let mut t = g.table(&key).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; f.x_size() * n1]);
        for x in 0..f.x_size() {
            for y in 0..n1 {
                t[x * n1 + y] -= shift[x];
            }
        }
        g.set_table(key, t).unwrap();
        prop_assert!(max_pointwise_diff(&f, &g) < 1e-12);
        let (sf, sg) = (ir::standardize(&f, &b).unwrap(), ir::standardize(&g, &b).unwrap());
        prop_assert!(sf.max_abs_table_diff(&sg) < 1e-10);
    }

    #[test]
    fn same_distribution_shift_is_the_training_error(seed in any::<u64>()) {
        let (f, g, b) = pair_instance(&mut rng(seed));
        let eps = ir::shifted_mse(&f, &g, &b).unwrap();
        let sub: f64 = ir::subfunction_errors(&f, &g, &b).unwrap().values().sum();
        // Standardized components are orthogonal, so their energies add up to ε.
        prop_assert!((eps - sub).abs() <= 1e-10 * (1.0 + eps));
        prop_assert!((ir::density_ratio_bound(&b, &b).unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(ir::shifted_mse(&f, &f, &b).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_lands_on_the_empty_subset(seed in any::<u64>(), c in -2.0f64..2.0) {
        let (f, b) = ir_instance(&mut rng(seed));
        let mut g = f.clone();
        let t: Vec<f64> = g.table(&SubsetKey::empty()).unwrap().iter().map(|v| v + c).collect();
        g.set_table(SubsetKey::empty(), t).unwrap();
        for (key, e) in ir::subfunction_errors(&f, &g, &b).unwrap() {
            let expected = if key.is_empty() { c * c } else { 0.0 };
            prop_assert!((e - expected).abs() < 1e-10, "{:?}: {} vs {}", key, e, expected);
        }
    }

    #[test]
    fn evaluation_respects_slot_permutation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = 3;
        let ys = [2, 3, 2];
        let f = random::ir_function(&mut r, 2, &ys, 3, 1.0);
        let perm = [2, 0, 1];
        let g = f.permute_slots(&perm).unwrap();
        for x in 0..2 {
            for a in 0..2 { for b in 0..3 { for c in 0..2 {
                let y = [a, b, c];
                let mut yp = [0; 3];
                for j in 0..w { yp[perm[j]] = y[j]; }
                prop_assert!((f.evaluate(x, &y).unwrap() - g.evaluate(x, &yp).unwrap()).abs() < 1e-12);
            }}}
        }
    }
}

#[test]
fn additive_example_and_centering() {
    // f(y) = y over {0, 1} with a uniform base: g_∅ = 0.5, g_1 = (-0.5, 0.5).
    let f = IrFunction::new(1, vec![2], 2).unwrap().with_table(&[0], vec![0.0, 1.0]).unwrap();
    let s = ir::standardize(&f, &BaseDistribution::uniform(1, &[2])).unwrap();
    assert!((s.table(&SubsetKey::empty()).unwrap()[0] - 0.5).abs() < 1e-15);
    let g1 = s.table(&SubsetKey::single(0)).unwrap();
    assert!((g1[0] + 0.5).abs() < 1e-15 && (g1[1] - 0.5).abs() < 1e-15);

    let two = IrFunction::new(1, vec![2, 2], 2)
        .unwrap()
        .with_table(&[0], vec![0.0, 0.3])
        .unwrap()
        .with_table(&[1], vec![0.0, 0.5])
        .unwrap();
    assert!((two.evaluate(0, &[1, 1]).unwrap() - 0.8).abs() < 1e-15);
}

#[test]
fn density_ratio_of_a_tilted_marginal() {
    let train = BaseDistribution::independent(vec![0.5, 0.5], &[]).unwrap();
    let target = BaseDistribution::independent(vec![0.75, 0.25], &[]).unwrap();
    assert!((ir::density_ratio_bound(&train, &target).unwrap() - 1.5).abs() < 1e-15);
    let point = BaseDistribution::independent(vec![1.0, 0.0], &[]).unwrap();
    let other = BaseDistribution::independent(vec![0.0, 1.0], &[]).unwrap();
    assert!(ir::density_ratio_bound(&point, &other).is_err());
}

#[test]
fn shift_bound_holds_on_width_four_pairs() {
    let mut r = rng(11);
    for _ in 0..50 {
        let ys = [2, 3, 2, 2];
        let f = random::ir_function(&mut r, 2, &ys, 2, 1.0);
        let g = f.add_scaled(&random::ir_function(&mut r, 2, &ys, 2, 0.1), 1.0).unwrap();
        let train = random::base(&mut r, 2, &ys, 0.5);
        let target = random::base(&mut r, 2, &ys, 0.5);
        let eps = ir::shifted_mse(&f, &g, &train).unwrap();
        let c = ir::density_ratio_bound(&train, &target).unwrap();
        let lhs = ir::shifted_mse(&f, &g, &target).unwrap();
        assert!(lhs <= ir::shift_bound(4, 2, c, eps) * (1.0 + 1e-12));
    }
}
