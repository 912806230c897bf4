//! Final error of the regularizing trust-region method as the noise level
//! decreases. A regularizing method must produce errors that go to zero
//! with delta.
//!
//! cargo run --release --example noise_decay -- [seed]

use regtr::fredholm::{InitialGuess, ProblemId};
use regtr::harness::{run_sweep, RunSpec, DEFAULT_DELTAS};
use regtr::Method;

fn main() -> regtr::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cells = [
        (ProblemId::P1, InitialGuess::Constant(0.0)),
        (ProblemId::P2, InitialGuess::Constant(0.0)),
        (ProblemId::P3, InitialGuess::Quadratic(1.25)),
        (ProblemId::P4, InitialGuess::Linear(0.5, 0.0)),
    ];
    for (id, guess) in cells {
        let spec = RunSpec::new(id, guess, DEFAULT_DELTAS[0], seed, Method::RegularizingTR);
        println!("{id}, x0 = {}", guess.label());
        for r in run_sweep(&spec, &DEFAULT_DELTAS)? {
            println!("  delta = {:.0e}  k* = {:>3}  ||x - x_true|| = {:.3e}  e_T = {:.3e}  {}", r.delta, r.k_star, r.error, r.e_t, r.status);
        }
    }
    Ok(())
}
