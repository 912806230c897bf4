//! Regularizing trust region, regularizing Levenberg-Marquardt and a
//! standard trust region on one problem.
//!
//! The standard method lets its radius grow once steps are good, so late
//! iterations fit the noise; the regularizing variants keep the radius tied
//! to the residual.
//!
//! cargo run --release --example compare_methods -- [P1|P2|P3|P4] [x0] [delta]

use regtr::fredholm::{build_problem, InitialGuess, ProblemId, ProblemSpec};
use regtr::harness::solution_profile;
use regtr::{solve, Method, SolverConfig};

fn main() -> regtr::Result<()> {
    let mut args = std::env::args().skip(1);
    let id: ProblemId = args.next().as_deref().unwrap_or("P1").parse()?;
    let guess = match args.next() {
        Some(sel) => InitialGuess::parse(id, &sel)?,
        None => id.guesses()[0],
    };
    let delta: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-2);

    let problem = build_problem(ProblemSpec::new(id, delta, 1))?;
    let sys = problem.system()?;
    let x0 = problem.initial_guess(guess)?;
    println!("{id}, x0 = {}, delta = {delta:e}\n", guess.label());
    println!("{:<24} {:>16} {:>5} {:>5} {:>4} {:>10} {:>10} {:>10}", "method", "status", "it", "nf", "cf", "||F||", "e_I", "e_T");

    let mut finals = Vec::new();
    for method in [Method::RegularizingTR, Method::RegularizingLM, Method::StandardTR] {
        let r = solve(&sys, &x0, &SolverConfig::new(method))?;
        let e = problem.error_metrics(&r.x_final);
        println!(
            "{:<24} {:>16} {:>5} {:>5} {:>4} {:>10.3e} {:>10.3e} {:>10.3e}",
            method.to_string(), r.status.as_str(), r.it, r.nf, r.cf, r.residual_norm_final, e.e_i, e.e_t
        );
        finals.push(r.x_final);
    }

    println!("\n{:>6} {:>9} {:>9} {:>9} {:>9}", "s", "x_true", "rtr", "rlm", "str");
    let profiles: Vec<_> = finals.iter().map(|x| solution_profile(&problem, x)).collect();
    for j in (0..problem.n()).step_by(7) {
        let (s, _, truth) = profiles[0][j];
        println!("{s:>6.3} {truth:>9.4} {:>9.4} {:>9.4} {:>9.4}", profiles[0][j].1, profiles[1][j].1, profiles[2][j].1);
    }
    Ok(())
}
