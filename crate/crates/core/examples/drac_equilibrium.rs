//! The full offline loop on a three-agent, two-step game: draw data under the
//! uniform behavior policy, fit a rank-2 model, run the regularized
//! actor-critic and measure the equilibrium gap in the true game as the
//! iteration count grows.
//!
//!     cargo run --release --example drac_equilibrium

use ir_marl::audit::drift_slack;
use ir_marl::data::{generate_dataset, BehaviorPolicy};
use ir_marl::drac::{run_drac, CriticMode, DracParams};
use ir_marl::game::MixturePolicy;
use ir_marl::gap::gap;
use ir_marl::learn::{fit_model, IrClassSpec};
use ir_marl::random::{self, GameShape};
use ir_marl::seeding::{self, streams};

fn main() {
    let shape = GameShape { n_agents: 3, horizon: 2, n_contexts: 2, max_states: 2, max_actions: 2, rank: 2 };
    let game = random::game(&mut seeding::rng(0, &[streams::GAME]), &shape);
    let behavior = BehaviorPolicy::uniform(&game.dynamics);
    let ds = generate_dataset(&game, &behavior, 100_000, 0).unwrap();
    let model = fit_model(&ds, &IrClassSpec::new(2), 0.1, game.reward_range).unwrap();
    let start = gap(&game, &MixturePolicy::single(behavior.policy.clone())).unwrap().max_gap;
    println!("behavior policy gap {start:.4}");
    for t in [10, 100, 300, 1000] {
        let params = DracParams { iterations: t, lambda: 0.001, eta: 0.1, critic: CriticMode::ExactDp, seed: 0 };
        let out = run_drac(&model, &behavior, &params).unwrap();
        let rep = gap(&game, &out.policy).unwrap();
        println!("T = {t:>4}: max gap {:.4}, drift slack {:.3}", rep.max_gap, drift_slack(&out));
    }
}
