//! Centers an IR function against a base distribution and prints every table
//! before and after, together with the largest remaining conditional mean.
//!
//!     cargo run --example standardize

use ir_marl::ir::{self, BaseDistribution, IrFunction};
use ir_marl::random;
use ir_marl::seeding;

fn show(name: &str, f: &IrFunction) {
    println!("{name}");
    for (key, values) in f.tables() {
        let cells: Vec<String> = values.iter().map(|v| format!("{v:+.3}")).collect();
        println!("  g{:?} = [{}]", key.indices(), cells.join(", "));
    }
}

fn main() {
    // f(x, y1, y2) = x + y1 + y1*y2 on binary slots, with one-hot tables.
    let f = IrFunction::new(2, vec![2, 2], 3)
        .unwrap()
        .with_table(&[], vec![0.0, 1.0])
        .unwrap()
        .with_table(&[0], vec![0.0, 1.0, 0.0, 1.0])
        .unwrap()
        .with_table(&[0, 1], vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
        .unwrap();
    let base = BaseDistribution::independent(vec![0.5, 0.5], &[vec![0.25, 0.75], vec![0.5, 0.5]]).unwrap();
    show("raw tables", &f);
    let s = ir::standardize(&f, &base).unwrap();
    show("standardized tables", &s);
    println!("largest conditional mean after centering: {:.2e}", ir::max_conditional_mean(&s, &base).unwrap());
    println!("f(1, [1, 1]) = {} before, {} after", f.evaluate(1, &[1, 1]).unwrap(), s.evaluate(1, &[1, 1]).unwrap());

    // The same on a random width-4, rank-3 function.
    let mut rng = seeding::rng(1, &[0]);
    let ys = [3, 2, 4, 2];
    let g = random::ir_function(&mut rng, 3, &ys, 3, 1.0);
    let b = random::base(&mut rng, 3, &ys, 0.2);
    let sg = ir::standardize(&g, &b).unwrap();
    println!(
        "random W=4, K=3: {} tables, conditional mean {:.1e} -> {:.1e}",
        g.tables().count(),
        ir::max_conditional_mean(&g, &b).unwrap(),
        ir::max_conditional_mean(&sg, &b).unwrap()
    );
}
