//! How often the trust-region steps satisfy the q-condition
//! `||F - y_delta + J p|| >= q ||F - y_delta||` without enforcing it, and
//! the error to the true solution along the way.
//!
//! cargo run --release --example q_condition_trace -- [problem] [x0] [delta]

use regtr::fredholm::{InitialGuess, ProblemId};
use regtr::harness::{qtrace, run, RunSpec};
use regtr::Method;

fn main() -> regtr::Result<()> {
    let mut args = std::env::args().skip(1);
    let id: ProblemId = args.next().as_deref().unwrap_or("P2").parse()?;
    let guess = match args.next() {
        Some(sel) => InitialGuess::parse(id, &sel)?,
        None => id.guesses()[0],
    };
    let delta: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-4);

    let spec = RunSpec::new(id, guess, delta, 1, Method::RegularizingTR);
    let outcome = run(&spec)?;
    let q = spec.solver.q();
    let rows = qtrace(&outcome.report, q);

    println!("{:>4} {:>10} {:>12}", "k", "q_k", "||x - x_t||");
    for r in &rows {
        let mark = if r.q_k >= q { ' ' } else { '<' };
        println!("{:>4} {:>10.4}{mark} {:>12.4e}", r.k, r.q_k, r.err.unwrap_or(f64::NAN));
    }
    let met = rows.iter().filter(|r| r.q_k >= q).count();
    let increases = rows.windows(2).filter(|w| w[1].err > w[0].err).count();
    println!("\nq = {q:.4}: satisfied at {met} of {} iterations ('<' marks violations)", rows.len());
    println!("error increased at {increases} iterations; final status {}", outcome.report.status);
    Ok(())
}
