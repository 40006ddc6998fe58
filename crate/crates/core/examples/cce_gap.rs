//! Equilibrium gaps in small games: matching pennies, a coordination game, and
//! the best responses that certify them.
//!
//!     cargo run --example cce_gap

use ir_marl::data::NoiseSpec;
use ir_marl::game::{DecoupledGame, MixturePolicy, ProductPolicy};
use ir_marl::gap::gap;
use ir_marl::ir::IrFunction;
use ir_marl::table::CondTable;

fn two_by_two(r0: [f64; 4], r1: [f64; 4]) -> DecoupledGame {
    // x = own action, y = the other agent's action.
    let f = |t: [f64; 4]| IrFunction::new(2, vec![2], 2).unwrap().with_table(&[0], t.to_vec()).unwrap();
    DecoupledGame::contextual(vec![1.0], &[2, 2], vec![f(r0), f(r1)], (0.0, 1.0), NoiseSpec::None).unwrap()
}

fn pure(a0: usize, a1: usize) -> ProductPolicy {
    ProductPolicy { tables: vec![vec![CondTable::deterministic(1, 2, |_| a0)], vec![CondTable::deterministic(1, 2, |_| a1)]] }
}

fn main() {
    let pennies = two_by_two([1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]);
    let uniform = ProductPolicy::uniform(&pennies.dynamics);
    println!("matching pennies, uniform play: gap {:.3}", gap(&pennies, &MixturePolicy::single(uniform)).unwrap().max_gap);
    println!("matching pennies, (0, 0):        gap {:.3}", gap(&pennies, &MixturePolicy::single(pure(0, 0))).unwrap().max_gap);

    let coord = two_by_two([1.0, 0.0, 0.0, 0.6], [1.0, 0.0, 0.0, 0.6]);
    for (a0, a1) in [(0, 0), (1, 1), (0, 1)] {
        let rep = gap(&coord, &MixturePolicy::single(pure(a0, a1))).unwrap();
        println!("coordination ({a0}, {a1}): gap {:.3}, agent gaps {:?}", rep.max_gap, rep.agents.iter().map(|a| a.gap).collect::<Vec<_>>());
    }
    // A correlated mix of the two coordinated outcomes. Any fixed deviation
    // coordinates only half the time, so the gap is negative: no product
    // policy produces this joint distribution.
    let mix = MixturePolicy::new(vec![pure(0, 0), pure(1, 1)]).unwrap();
    println!("coordination 50/50 over (0,0) and (1,1): gap {:.3}", gap(&coord, &mix).unwrap().max_gap);
}
