//! Draws an offline dataset from a random decoupled game, writes it as JSONL,
//! reads it back and compares empirical transition rows with the true ones.
//!
//!     cargo run --example offline_dataset [out.jsonl]

use std::path::PathBuf;

use ir_marl::data::{generate_dataset, BehaviorPolicy, OfflineDataset};
use ir_marl::learn::fit_transition_mle;
use ir_marl::random;
use ir_marl::seeding;

fn main() {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("ir_marl_dataset.jsonl"));
    let game = random::dense_game(&mut seeding::rng(4, &[0]), 3, 2, 2, 3, 2, 2);
    let behavior = BehaviorPolicy::uniform(&game.dynamics);
    let ds = generate_dataset(&game, &behavior, 20_000, 1).unwrap();
    ds.save(&path).unwrap();
    let back = OfflineDataset::load(&path).unwrap();
    assert_eq!(back, ds);
    println!("{} records per step written to {}", ds.header.records_per_step, path.display());
    println!("first record: {:?}", ds.records(0)[0]);

    for (i, ag) in game.dynamics.agents.iter().enumerate() {
        let fit = fit_transition_mle(&back, i, 1, 0.0).unwrap();
        let mut visits = vec![0usize; fit.kernel.rows()];
        for rec in back.records(1) {
            visits[ag.x_index(rec.c, rec.s[i], rec.a[i])] += 1;
        }
        let worst = (0..fit.kernel.rows())
            .filter(|&x| visits[x] > 0)
            .flat_map(|x| (0..ag.n_states).map(move |s| (x, s)))
            .map(|(x, s)| (fit.kernel.get(x, s) - ag.kernels[1].get(x, s)).abs())
            .fold(0.0, f64::max);
        println!("agent {i}: |S| = {}, |A| = {}, largest error on visited rows at step 1 {worst:.4}", ag.n_states, ag.n_actions);
    }
}
