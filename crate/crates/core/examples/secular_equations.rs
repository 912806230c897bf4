//! The two scalar equations behind a step.
//!
//! At the initial guess of P1 this solves the trust-region equation
//! `||p(lambda)|| = radius` for a range of radii and the q-equation of the
//! regularizing Levenberg-Marquardt method, and cross-checks both against
//! the singular value decomposition of the Jacobian.
//!
//! cargo run --example secular_equations

use regtr::fredholm::{build_problem, InitialGuess, ProblemId, ProblemSpec};
use regtr::subproblem::{lm_secular_newton, svd_diagnostics, tr_secular_newton, NewtonOptions};
use regtr::system::evaluate_point;

fn main() -> regtr::Result<()> {
    let problem = build_problem(ProblemSpec::new(ProblemId::P1, 1e-4, 1))?;
    let sys = problem.system()?;
    let point = evaluate_point(&sys, &problem.initial_guess(InitialGuess::Constant(0.0))?)?;
    let diag = svd_diagnostics(&point)?;
    let rn = point.residual_norm();

    println!("||F - y_delta|| = {rn:.4e}, ||g|| = {:.4e}", point.gradient_norm());
    println!("||B|| = {:.4e}, numerical rank {} of {}", diag.gauss_newton_norm(), diag.rank, point.dim());

    println!("\ntrust region: ||p(lambda)|| = radius");
    println!("{:>10} {:>12} {:>7} {:>6} {:>12} {:>12}", "radius", "lambda", "newton", "chol", "||p||", "svd ||p||");
    for radius in [1e-3, 1e-2, 1e-1, 1.0, 10.0] {
        let sol = tr_secular_newton(&point, radius, NewtonOptions::trust_region())?;
        let s = &sol.step;
        println!(
            "{radius:>10.1e} {:>12.4e} {:>7} {:>6} {:>12.4e} {:>12.4e}",
            s.lambda,
            sol.newton_iterations,
            s.chol_count,
            s.p_norm,
            diag.step_norm_sq(s.lambda).sqrt()
        );
    }

    println!("\nq-equation: ||F - y_delta + J p(lambda)|| = q ||F - y_delta||");
    println!("projected residual ratio ||P r|| / ||r|| = {:.4e}", diag.projector_residual_norm / rn);
    for q in [0.5, 0.7333, 0.9] {
        let sol = lm_secular_newton(&point, q, NewtonOptions::levenberg_marquardt())?;
        let first = sol.lambda_trace.first().copied().unwrap_or(f64::NAN);
        println!(
            "q = {q:.4}: lambda = {:.4e} after {} Newton steps from {first:.4e}; ratio = {:.7}",
            sol.step.lambda,
            sol.newton_iterations,
            sol.step.model_residual_norm / rn
        );
    }
    Ok(())
}
