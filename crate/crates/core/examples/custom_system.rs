//! Solve a user-defined ill-posed system.
//!
//! The forward map is a smoothing convolution followed by a mild cubic
//! nonlinearity, `F(x) = K x + 0.1 (K x)^3`, discretized on 40 points. Data
//! are perturbed by noise of norm `delta` and the regularizing trust-region
//! method is stopped by the discrepancy principle.
//!
//! cargo run --example custom_system

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use regtr::system::{FnMapWithJacobian, NonlinearSystem};
use regtr::{solve, Method, SolverConfig};

fn main() -> regtr::Result<()> {
    let n = 40;
    let h = 1.0 / (n - 1) as f64;
    let k = DMatrix::from_fn(n, n, |i, j| {
        let d = (i as f64 - j as f64) * h;
        h * (-d * d / 0.005).exp()
    });

    let k_eval = k.clone();
    let k_jac = k.clone();
    let map = FnMapWithJacobian::new(
        n,
        move |x: &DVector<f64>| {
            let kx = &k_eval * x;
            kx.map(|v| v + 0.1 * v.powi(3))
        },
        move |x: &DVector<f64>| {
            let kx = &k_jac * x;
            let mut j = k_jac.clone();
            for (i, v) in kx.iter().enumerate() {
                j.row_mut(i).scale_mut(1.0 + 0.3 * v * v);
            }
            j
        },
    );

    let truth = DVector::from_fn(n, |i, _| {
        let s = i as f64 * h;
        (std::f64::consts::PI * s).sin() + 0.5 * (3.0 * std::f64::consts::PI * s).sin()
    });
    let y = {
        use regtr::ForwardMap;
        map.eval(&truth)
    };

    let delta = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let y_delta = &y + z.normalize() * delta;

    let sys = NonlinearSystem::new(Arc::new(map), y_delta, delta)?
        .with_exact_data(y)?
        .with_true_solutions(vec![truth.clone()])?;

    let x0 = DVector::zeros(n);
    for method in [Method::RegularizingTR, Method::RegularizingLM] {
        let report = solve(&sys, &x0, &SolverConfig::new(method))?;
        println!(
            "{method:<24} {:<16} it={:<4} nf={:<4} ||F - y_delta|| = {:.3e}  ||x - x_true|| = {:.3e}",
            report.status.as_str(),
            report.it,
            report.nf,
            report.residual_norm_final,
            report.final_error.unwrap_or(f64::NAN),
        );
    }
    println!("discrepancy level tau * delta = {:.3e}", 1.5 * delta);
    Ok(())
}
