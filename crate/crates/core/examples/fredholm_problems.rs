//! Inspect the four discretized Fredholm test problems.
//!
//! For each problem prints the kernel, the range of both true solutions,
//! the size of the data and noise, and the residual at every standard
//! initial guess.
//!
//! cargo run --example fredholm_problems -- [delta] [seed]

use regtr::fredholm::{build_problem, ProblemId, ProblemSpec};

fn main() -> regtr::Result<()> {
    let mut args = std::env::args().skip(1);
    let delta: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    for id in ProblemId::ALL {
        let p = build_problem(ProblemSpec::new(id, delta, seed))?;
        println!("{id}: n = {}, kernel {:?}", p.n(), p.map().kernel());
        for (i, t) in p.true_solutions.iter().enumerate() {
            println!("  x_true[{i}] in [{:+.4}, {:+.4}]", t.min(), t.max());
        }
        let mirror_gap = (p.forward(&p.true_solutions[1]) - &p.exact_data).amax();
        println!("  ||y|| = {:.4e}, ||y - y_delta|| = {:.4e}, |F(x_true[1]) - y|_max = {:.1e}",
            p.exact_data.norm(), (&p.noisy_data - &p.exact_data).norm(), mirror_gap);
        for g in id.guesses() {
            let x0 = p.initial_guess(g)?;
            let r0 = (p.forward(&x0) - &p.noisy_data).norm();
            println!("  x0 = {:<14} ||F(x0) - y_delta|| = {r0:.4e}", g.label());
        }
    }
    Ok(())
}
