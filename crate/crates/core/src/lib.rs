//! Iterative regularization of ill-posed nonlinear systems `F(x) = y` with
//! noisy data `y_delta`, `||y - y_delta|| <= delta`.
//!
//! The crate provides
//!
//! * a regularizing trust-region method whose radius shrinks with the
//!   residual, so that the q-condition
//!   `||F(x_k) - y_delta + J_k p_k|| >= q ||F(x_k) - y_delta||` holds in most
//!   iterations and the method behaves like a regularization;
//! * the regularizing Levenberg-Marquardt method, which imposes the
//!   q-condition as an equation for the damping parameter;
//! * a standard trust-region method for comparison;
//! * four discretized Fredholm integral test problems with known solutions;
//! * a harness that runs single solves, grids of runs and noise sweeps, and
//!   writes CSV output.
//!
//! All runs stop with the discrepancy principle
//! `||F(x_k) - y_delta|| <= tau * delta`.
//!
//! ```no_run
//! use regtr::fredholm::{build_problem, InitialGuess, ProblemId, ProblemSpec};
//! use regtr::solvers::{solve, Method, SolverConfig};
//!
//! let problem = build_problem(ProblemSpec::new(ProblemId::P1, 1e-4, 7)).unwrap();
//! let x0 = problem.initial_guess(InitialGuess::Constant(0.0)).unwrap();
//! let report = solve(&problem.system().unwrap(), &x0, &SolverConfig::new(Method::RegularizingTR)).unwrap();
//! println!("{} after {} iterations", report.status, report.it);
//! ```

pub mod error;
pub mod fredholm;
pub mod harness;
pub mod linalg;
pub mod solvers;
pub mod subproblem;
pub mod system;

pub use error::{Error, Result};
pub use solvers::{solve, Method, SolveReport, SolverConfig, Status};
pub use system::{EvalPoint, ForwardMap, NonlinearSystem};
