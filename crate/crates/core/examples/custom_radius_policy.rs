//! Plug a different radius rule into the shared trust-region loop.
//!
//! `FixedFraction` sets `radius = c ||F(x_k) - y_delta||` with a constant
//! `c` and halves it after a rejected trial. The acceptance test, subproblem
//! solver and stopping rule are the same as for the built-in methods.
//!
//! cargo run --release --example custom_radius_policy

use regtr::fredholm::{build_problem, InitialGuess, ProblemId, ProblemSpec};
use regtr::solvers::{solve_with_policy, RadiusPolicy, RegularizingRadius, StepOutcome};
use regtr::{EvalPoint, Method, SolverConfig};

struct FixedFraction {
    c: f64,
}

impl RadiusPolicy for FixedFraction {
    fn initial(&mut self, point: &EvalPoint) -> f64 {
        self.c * point.residual_norm()
    }

    fn shrink(&mut self, radius: f64, _step_norm: f64) -> f64 {
        radius / 2.0
    }

    fn next(&mut self, _outcome: &StepOutcome, point: &EvalPoint) -> f64 {
        self.c * point.residual_norm()
    }
}

fn main() -> regtr::Result<()> {
    let problem = build_problem(ProblemSpec::new(ProblemId::P3, 1e-3, 1))?;
    let sys = problem.system()?;
    let x0 = problem.initial_guess(InitialGuess::Quadratic(1.5))?;
    let cfg = SolverConfig::new(Method::RegularizingTR);

    let mut runs: Vec<(String, Box<dyn RadiusPolicy>)> = vec![("mu-rule".into(), Box::new(RegularizingRadius::new(&cfg)))];
    for c in [1.0, 10.0, 100.0] {
        runs.push((format!("fixed c={c}"), Box::new(FixedFraction { c })));
    }
    for (name, mut policy) in runs {
        let r = solve_with_policy(&sys, &x0, &cfg, policy.as_mut())?;
        let e = problem.error_metrics(&r.x_final);
        println!(
            "{name:<12} {:<16} it={:<4} nf={:<4} rejected={:<3} e_T={:.3e}",
            r.status.as_str(), r.it, r.nf, r.rejected, e.e_t
        );
    }
    Ok(())
}
