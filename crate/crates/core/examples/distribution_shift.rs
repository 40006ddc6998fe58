//! How far a fitted IR function's error can grow when the input distribution
//! moves: the measured error under the target against the bound built from the
//! training error and the largest density ratio.
//!
//!     cargo run --example distribution_shift

use ir_marl::ir;
use ir_marl::random;
use ir_marl::seeding;

fn main() {
    let mut rng = seeding::rng(3, &[0]);
    let ys = [2, 3, 2, 2];
    println!("{:>4} {:>3} {:>10} {:>8} {:>12} {:>12} {:>7}", "run", "K", "train eps", "C", "target mse", "bound", "ratio");
    for run in 0..8 {
        let rank = 1 + run % 3;
        let f = random::ir_function(&mut rng, 2, &ys, rank, 1.0);
        let f_hat = f.add_scaled(&random::ir_function(&mut rng, 2, &ys, rank, 0.05), 1.0).unwrap();
        let train = random::base(&mut rng, 2, &ys, 0.5);
        let target = random::base(&mut rng, 2, &ys, 0.2);
        let eps = ir::shifted_mse(&f, &f_hat, &train).unwrap();
        let c = ir::density_ratio_bound(&train, &target).unwrap();
        let lhs = ir::shifted_mse(&f, &f_hat, &target).unwrap();
        let bound = ir::shift_bound(ys.len(), rank, c, eps);
        println!("{run:>4} {rank:>3} {eps:>10.2e} {c:>8.3} {lhs:>12.3e} {bound:>12.3e} {:>7.4}", lhs / bound);
    }
    println!("constant c = {}", ir::SHIFT_CONSTANT);
}
