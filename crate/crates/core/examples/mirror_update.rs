//! The regularized actor update on a single simplex: the closed-form
//! minimizer, its optimality certificate, and the no-regret inequality over an
//! adversarial loss sequence.
//!
//!     cargo run --example mirror_update

use ir_marl::mirror::{chi_square, kkt_residual, regret_audit, regularized_update, UpdateParams};

fn main() {
    let nu = [0.5, 0.5];
    let params = UpdateParams::new(1.0, 1.0, 1.0).unwrap();
    let p = regularized_update(&[1.0, 0.0], &nu, &nu, &params).unwrap();
    println!("gains (1, 0), lambda = eta = 1: p = {:?}", p.as_slice());
    println!("certificate residual {:.1e}", kkt_residual(&[1.0, 0.0], &nu, &nu, p.as_slice(), &params));

    // Repeated updates with a fixed gain drift toward the better action; a
    // large enough lambda holds them near nu.
    let nu3 = [0.2, 0.3, 0.5];
    for lambda in [0.0, 0.1, 1.0] {
        let params = UpdateParams::new(lambda, 0.5, 1.0).unwrap();
        let mut q = nu3.to_vec();
        for _ in 0..200 {
            q = regularized_update(&[1.0, 0.0, 0.0], &q, &nu3, &params).unwrap().as_slice().to_vec();
        }
        println!("lambda {lambda:<4} after 200 steps: p = [{:.3}, {:.3}, {:.3}], chi2 = {:.3}", q[0], q[1], q[2], chi_square(&q, &nu3).unwrap());
    }

    let losses: Vec<Vec<f64>> = (0..200).map(|t| if (t / 10) % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
    let params = UpdateParams::new(0.01, 0.1, 1.0).unwrap();
    for mu in [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]] {
        let a = regret_audit(&losses, &nu, &params, &mu).unwrap();
        println!("comparator {mu:?}: lhs {:.4} <= rhs {:.4}", a.lhs, a.rhs);
    }
}
