//! The sampled critic against the exact one as the rollout budget grows; the
//! largest cell error should fall roughly like one over the square root.
//!
//!     cargo run --release --example monte_carlo_critic

use ir_marl::experiment::verify::{mc_convergence, MC_GRID};

fn main() {
    let (errors, slope) = mc_convergence(0, 10).unwrap();
    for (m, e) in MC_GRID.iter().zip(&errors) {
        println!("M_sim = {m:>6}: mean max-cell error {e:.4}");
    }
    println!("log-log slope {slope:.3}");
}
