//! Fits rewards (least squares over the rank-K table class) and transitions
//! (maximum likelihood) and shows how the errors shrink with the sample count.
//!
//!     cargo run --example fit_model

use ir_marl::data::BehaviorPolicy;
use ir_marl::learn::{rate_audit_lsr, rate_audit_mle, IrClassSpec};
use ir_marl::random;
use ir_marl::seeding;

fn main() {
    let game = random::dense_game(&mut seeding::rng(2, &[0]), 3, 2, 2, 2, 2, 2);
    let behavior = BehaviorPolicy::uniform(&game.dynamics);
    let grid = [100, 300, 1000, 3000, 10_000];
    for rank in [1, 2, 3] {
        let t = rate_audit_lsr(&game, &behavior, &IrClassSpec::new(rank), &grid, 10, 0).unwrap();
        let cells: Vec<String> = t.rows.iter().map(|(m, e)| format!("{m}:{e:.2e}")).collect();
        println!("reward class K={rank}: {}  slope {:.2}", cells.join("  "), t.slope);
    }
    let t = rate_audit_mle(&game, &behavior, 0.0, &grid, 10, 0).unwrap();
    let cells: Vec<String> = t.rows.iter().map(|(m, e)| format!("{m}:{e:.2e}")).collect();
    println!("transitions (L1^2):  {}  slope {:.2}", cells.join("  "), t.slope);
}
