//! Critic architectures on the quadratic coordination game: a joint critic, a
//! pairwise (rank-2) critic and an own-action critic fitted to the same data,
//! each driving a behavior-regularized actor. Writes gaps.csv, summary.csv and
//! one SVG per N into the output directory.
//!
//!     cargo run --release --example quadratic_critics [out_dir]

use std::path::PathBuf;

use ir_marl::experiment::study::run_study;
use ir_marl::experiment::QuadraticConfig;

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("ir_marl_quadratic"));
    let cfg: QuadraticConfig = toml::from_str("n_agents = [4, 8, 16]\nseeds = [0, 1, 2, 3, 4]").unwrap();
    let rep = run_study(&cfg, Some(&out)).unwrap();
    for s in &rep.summary {
        println!("N={:<3} {:<6} M={:<4} mean final gap {:.4}", s.n_agents, s.arm.name(), s.samples, s.mean_final_gap);
    }
    println!("plots and traces in {}", out.display());
}
