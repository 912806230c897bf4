//! Step computations parametrized by the shift `lambda`.
//!
//! Every step here is `p(lambda)`, the solution of `(B + lambda I) p = -g`
//! with `B = J^T J` and `g = J^T (F - y_delta)`. Two scalar equations pick
//! `lambda`:
//!
//! * the trust-region secular equation `1/||p(lambda)|| - 1/radius = 0`,
//!   solved by [`tr_secular_newton`];
//! * the q-equation `||F - y_delta + J p(lambda)|| = q ||F - y_delta||`,
//!   solved by [`lm_secular_newton`] through its concave reformulation
//!   `lambda/||F - y_delta + J p(lambda)|| - lambda/(q ||F - y_delta||) = 0`.
//!
//! Both Newton iterations take their derivative from the Cholesky factor
//! already computed for `p(lambda)`, so one factorization is consumed per
//! Newton iteration.
//!
//! [`svd_diagnostics`] exposes the singular-value form of `||p(lambda)||`
//! and of the model residual, used to check solvability of the q-equation
//! and as an independent route in tests.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::system::EvalPoint;

/// Default Newton iteration cap for both secular equations.
pub const NEWTON_MAX_ITER: usize = 50;

/// Solution of `(B + lambda I) p = -g` and the norms the secular equations need.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedSolve {
    pub lambda: f64,
    pub p: DVector<f64>,
    pub p_norm: f64,
    /// `||F - y_delta + J p||`
    pub model_residual_norm: f64,
    /// `p^T (B + lambda I)^{-1} p`, i.e. `||L^{-1} p||^2`.
    pub p_weighted_sq: f64,
    /// Factorizations consumed to produce this step.
    pub chol_count: usize,
}

/// Termination controls for the secular Newton iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl NewtonOptions {
    pub fn trust_region() -> Self {
        Self { tol: 1e-2, max_iter: NEWTON_MAX_ITER }
    }

    pub fn levenberg_marquardt() -> Self {
        Self { tol: 1e-5, max_iter: NEWTON_MAX_ITER }
    }
}

/// Outcome of a secular Newton solve.
#[derive(Debug, Clone)]
pub struct SecularSolution {
    /// Final step; its `chol_count` covers every factorization attempted.
    pub step: ShiftedSolve,
    pub newton_iterations: usize,
    /// Every `lambda` at which a factorization succeeded, in order.
    pub lambda_trace: Vec<f64>,
    /// True when the unconstrained minimizer was returned (`lambda = 0`).
    pub interior: bool,
}

fn factor_and_solve(point: &EvalPoint, lambda: f64) -> Option<(Cholesky, ShiftedSolve)> {
    let chol = Cholesky::factor_shifted(&point.gauss_newton, lambda)?;
    let p = -chol.solve(&point.gradient);
    if p.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let w = chol.solve_lower(&p);
    let model = &point.residual + &point.jacobian * &p;
    let solve = ShiftedSolve {
        lambda,
        p_norm: p.norm(),
        model_residual_norm: model.norm(),
        p_weighted_sq: w.norm_squared(),
        p,
        chol_count: 1,
    };
    Some((chol, solve))
}

/// Solve `(B + lambda I) p = -g` with one Cholesky factorization.
///
/// At `lambda = 0` a breakdown is reported as [`Error::SingularAtZero`],
/// which callers read as `||p(0)|| = +inf`.
pub fn solve_shifted(point: &EvalPoint, lambda: f64) -> Result<ShiftedSolve> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("shift must be finite and nonnegative, got {lambda}")));
    }
    match factor_and_solve(point, lambda) {
        Some((_, s)) => Ok(s),
        None if lambda == 0.0 => Err(Error::SingularAtZero),
        None => Err(Error::ShiftedSingular { lambda }),
    }
}

/// Target of a secular equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SecularTarget {
    /// `||p(lambda)|| = radius`
    Radius(f64),
    /// `||F - y_delta + J p(lambda)|| = q ||F - y_delta||`
    ResidualRatio(f64),
}

/// Value and derivative of a secular function at one shift.
#[derive(Debug, Clone)]
pub struct SecularValue {
    pub psi: f64,
    pub dpsi: f64,
    pub solve: ShiftedSolve,
}

fn secular_from_solve(point: &EvalPoint, solve: ShiftedSolve, target: SecularTarget) -> SecularValue {
    let lambda = solve.lambda;
    let (psi, dpsi) = match target {
        SecularTarget::Radius(radius) => {
            let pn = solve.p_norm;
            // d||p||/dlambda = -p^T (B + lambda I)^{-1} p / ||p||
            (1.0 / pn - 1.0 / radius, solve.p_weighted_sq / (pn * pn * pn))
        }
        SecularTarget::ResidualRatio(q) => {
            let m = solve.model_residual_norm;
            let goal = q * point.residual_norm();
            // J^T m = -lambda p gives d||m||/dlambda = lambda p^T (B + lambda I)^{-1} p / ||m||
            let dm = lambda * solve.p_weighted_sq / m;
            (lambda / m - lambda / goal, 1.0 / m - lambda * dm / (m * m) - 1.0 / goal)
        }
    };
    SecularValue { psi, dpsi, solve }
}

/// Evaluate a secular function and its derivative at `lambda`.
///
/// The derivative reuses the factor of `B + lambda I`: no extra
/// factorization is performed.
pub fn psi_and_derivative(point: &EvalPoint, lambda: f64, target: SecularTarget) -> Result<SecularValue> {
    let solve = solve_shifted(point, lambda)?;
    Ok(secular_from_solve(point, solve, target))
}

fn frobenius(point: &EvalPoint) -> f64 {
    point.gauss_newton.norm()
}

/// Safeguard point inside `(lo, hi)` used when Newton leaves the bracket.
fn bracket_fallback(lo: f64, hi: f64) -> f64 {
    (lo * hi).sqrt().max(lo + 1e-3 * (hi - lo))
}

/// Relative (to `||B||_F`) lower limit on the shift used by [`tr_secular_newton`].
pub const LAMBDA_FLOOR_REL: f64 = 1e-13;

/// Solve the trust-region subproblem `min ||F - y_delta + J p||` s.t.
/// `||p|| <= radius`.
///
/// Returns the `lambda = 0` step when `B` factors and `||p(0)|| <= radius`;
/// otherwise runs Newton on `1/||p(lambda)|| - 1/radius` until
/// `| ||p|| - radius | <= tol * radius`. Newton iterates that leave the
/// current bracket `[lo, hi]` are replaced by a safeguarded point. If the
/// boundary cannot be resolved above the shift floor, the longest feasible
/// step found is returned.
pub fn tr_secular_newton(point: &EvalPoint, radius: f64, opts: NewtonOptions) -> Result<SecularSolution> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidConfig(format!("trust-region radius must be positive, got {radius}")));
    }
    let gnorm = point.gradient_norm();
    if gnorm == 0.0 {
        return Err(Error::StationaryPoint);
    }

    let mut chol = 1usize;
    let mut lambda_trace = Vec::new();
    let mut lo = (gnorm / radius - frobenius(point)).max(0.0);
    let mut hi = gnorm / radius;

    let mut pending = match factor_and_solve(point, 0.0) {
        Some((_, s)) => {
            lambda_trace.push(0.0);
            if s.p_norm <= radius {
                return Ok(SecularSolution {
                    step: ShiftedSolve { chol_count: chol, ..s },
                    newton_iterations: 0,
                    lambda_trace,
                    interior: true,
                });
            }
            Some(s)
        }
        None => None,
    };
    // Below this shift the factorization is dominated by rounding and ||p||
    // is no longer a smooth function of lambda.
    let floor = LAMBDA_FLOOR_REL * frobenius(point);
    let mut lambda = if pending.is_some() { 0.0 } else { lo.max(1e-3 * hi).max(floor) };
    let mut best: Option<(ShiftedSolve, usize)> = None;

    for iter in 0..opts.max_iter {
        let s = match pending.take() {
            Some(s) => s,
            None => {
                chol += 1;
                match factor_and_solve(point, lambda) {
                    Some((_, s)) => {
                        lambda_trace.push(lambda);
                        s
                    }
                    None => {
                        lo = lo.max(lambda);
                        hi = hi.max(lo);
                        lambda = if lo < hi { bracket_fallback(lo, hi) } else { 2.0 * lo.max(f64::MIN_POSITIVE) };
                        lambda = lambda.max(floor);
                        continue;
                    }
                }
            }
        };

        if (s.p_norm - radius).abs() <= opts.tol * radius {
            return Ok(SecularSolution {
                step: ShiftedSolve { chol_count: chol, ..s },
                newton_iterations: iter + 1,
                lambda_trace,
                interior: false,
            });
        }
        if s.p_norm > radius {
            lo = lo.max(lambda);
        } else {
            hi = hi.min(lambda);
            if best.as_ref().is_none_or(|(b, _)| s.p_norm > b.p_norm) {
                best = Some((s.clone(), iter + 1));
            }
            // The boundary is out of numerical reach: accept the feasible step.
            if lambda <= floor || hi - lo <= 1e-10 * hi {
                let (step, iters) = best.take().expect("feasible step recorded");
                return Ok(SecularSolution {
                    step: ShiftedSolve { chol_count: chol, ..step },
                    newton_iterations: iters,
                    lambda_trace,
                    interior: false,
                });
            }
        }
        let ratio = s.p_norm * s.p_norm / s.p_weighted_sq;
        let newton = lambda + ratio * (s.p_norm - radius) / radius;
        lambda = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            bracket_fallback(lo, hi)
        };
        lambda = lambda.max(floor);
    }
    match best {
        Some((step, iters)) => Ok(SecularSolution {
            step: ShiftedSolve { chol_count: chol, ..step },
            newton_iterations: iters,
            lambda_trace,
            interior: false,
        }),
        None => Err(Error::NewtonCapExceeded { iterations: opts.max_iter }),
    }
}

/// Solve the q-equation `||F - y_delta + J p(lambda)|| = q ||F - y_delta||`.
///
/// Newton is applied to `lambda/||F - y_delta + J p(lambda)|| - lambda/(q ||F - y_delta||)`
/// from `lambda_0 = q/(1-q) ||B||`, an upper bound on the root, so the
/// iterates decrease monotonically. Stops when the model residual is within
/// `tol * ||F - y_delta||` of its target.
pub fn lm_secular_newton(point: &EvalPoint, q: f64, opts: NewtonOptions) -> Result<SecularSolution> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidConfig(format!("q must lie in (0, 1), got {q}")));
    }
    let rn = point.residual_norm();
    if rn == 0.0 {
        return Err(Error::AlreadyConverged);
    }
    if point.gradient_norm() == 0.0 {
        return Err(Error::StationaryPoint);
    }

    let b_norm = match svd_diagnostics(point) {
        Ok(diag) => {
            let ratio = diag.projector_residual_norm / rn;
            if ratio >= q {
                return Err(Error::QEquationInfeasible { ratio, q });
            }
            diag.gauss_newton_norm()
        }
        Err(_) => frobenius(point),
    };

    let goal = q * rn;
    let mut lambda = q / (1.0 - q) * b_norm;
    let mut lambda_trace = Vec::new();
    let mut chol = 0usize;
    for iter in 0..opts.max_iter {
        chol += 1;
        let s = match factor_and_solve(point, lambda) {
            Some((_, s)) => s,
            None => return Err(Error::ShiftedSingular { lambda }),
        };
        lambda_trace.push(lambda);
        if (s.model_residual_norm - goal).abs() <= opts.tol * rn {
            return Ok(SecularSolution {
                step: ShiftedSolve { chol_count: chol, ..s },
                newton_iterations: iter + 1,
                lambda_trace,
                interior: false,
            });
        }
        let v = secular_from_solve(point, s, SecularTarget::ResidualRatio(q));
        let newton = lambda - v.psi / v.dpsi;
        lambda = if newton.is_finite() && newton > 0.0 { newton } else { 0.5 * lambda };
    }
    Err(Error::NewtonCapExceeded { iterations: opts.max_iter })
}

/// `||F - y_delta + J p|| / ||F - y_delta||`.
pub fn q_ratio(point: &EvalPoint, p: &DVector<f64>) -> Result<f64> {
    let rn = point.residual_norm();
    if rn == 0.0 {
        return Err(Error::AlreadyConverged);
    }
    Ok((&point.residual + &point.jacobian * p).norm() / rn)
}

/// Singular-value view of the linearized problem at one point.
#[derive(Debug, Clone)]
pub struct SvdDiagnostics {
    /// Singular values of `J`, descending.
    pub singular_values: Vec<f64>,
    /// Number of singular values above `sqrt(eps) * sigma_1`.
    pub rank: usize,
    /// `U^T (F - y_delta)`, ordered like `singular_values`.
    pub projected_residual: Vec<f64>,
    /// Norm of the residual component outside the numerical range of `J`.
    pub projector_residual_norm: f64,
}

impl SvdDiagnostics {
    /// `||B||_2 = sigma_1^2`.
    pub fn gauss_newton_norm(&self) -> f64 {
        self.singular_values.first().map_or(0.0, |s| s * s)
    }

    /// `||p(lambda)||^2` from the singular values.
    pub fn step_norm_sq(&self, lambda: f64) -> f64 {
        self.singular_values[..self.rank]
            .iter()
            .zip(&self.projected_residual)
            .map(|(s, r)| {
                let d = s * s + lambda;
                s * s * r * r / (d * d)
            })
            .sum()
    }

    /// `||F - y_delta + J p(lambda)||^2` from the singular values.
    pub fn model_residual_sq(&self, lambda: f64) -> f64 {
        let active: f64 = self.singular_values[..self.rank]
            .iter()
            .zip(&self.projected_residual)
            .map(|(s, r)| {
                let d = s * s + lambda;
                lambda * lambda * r * r / (d * d)
            })
            .sum();
        active + self.projector_residual_norm.powi(2)
    }
}

/// SVD of the Jacobian at `point` and the residual expressed in its left
/// singular basis.
pub fn svd_diagnostics(point: &EvalPoint) -> Result<SvdDiagnostics> {
    let n = point.dim();
    let j = &point.jacobian;
    let svd = faer::Mat::<f64>::from_fn(n, n, |a, b| j[(a, b)]).svd().map_err(|_| Error::DiagnosticsUnavailable)?;
    let (s, u) = (svd.S().column_vector(), svd.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));

    let singular_values: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let projected_residual: Vec<f64> =
        order.iter().map(|&i| (0..n).map(|row| u[(row, i)] * point.residual[row]).sum()).collect();
    let cutoff = f64::EPSILON.sqrt() * singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().take_while(|&&s| s > cutoff).count();
    let projector_residual_norm = projected_residual[rank..].iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(SvdDiagnostics { singular_values, rank, projected_residual, projector_residual_norm })
}
