//! Runs every invariant suite and prints one line per suite.
//!
//!     cargo run --release --example verify_suites [seed]

use ir_marl::experiment::verify::{self, Suite};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    for r in verify::run(&Suite::ALL, seed).unwrap() {
        println!("{r}");
    }
}
