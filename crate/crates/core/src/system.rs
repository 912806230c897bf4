//! Problem abstraction shared by every solver.
//!
//! A [`NonlinearSystem`] couples a forward map `F: R^n -> R^n` with noisy
//! data `y_delta` and the noise level `delta`. The solvers work on
//!
//! ```text
//! Phi(x) = 1/2 ||F(x) - y_delta||^2
//! ```
//!
//! through [`EvalPoint`], which caches the residual, the Jacobian, the
//! Gauss-Newton matrix `B = J^T J` and the gradient `g = J^T (F(x) - y_delta)`
//! at one iterate.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A square forward map `F: R^n -> R^n`.
///
/// Implementations must be deterministic: the same `x` must produce a
/// bitwise-identical `F(x)`.
pub trait ForwardMap: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian, if one is available.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Adapter turning a closure into a [`ForwardMap`] without a Jacobian.
pub struct FnMap<F> {
    n: usize,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F> ForwardMap for FnMap<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
}

/// Closure adapter carrying an analytic Jacobian as well.
pub struct FnMapWithJacobian<F, G> {
    n: usize,
    f: F,
    jac: G,
}

impl<F, G> FnMapWithJacobian<F, G>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
    G: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync,
{
    pub fn new(n: usize, f: F, jac: G) -> Self {
        Self { n, f, jac }
    }
}

impl<F, G> ForwardMap for FnMapWithJacobian<F, G>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
    G: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some((self.jac)(x))
    }
}

/// Where the Jacobian of a system comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianSource {
    /// Use [`ForwardMap::jacobian`] when it returns `Some`, else fall back
    /// to forward differences.
    #[default]
    PreferAnalytic,
    /// Always use forward differences, even if an analytic Jacobian exists.
    FiniteDifference,
}

/// Forward map plus noisy data and noise level.
#[derive(Clone)]
pub struct NonlinearSystem {
    map: Arc<dyn ForwardMap>,
    y_delta: DVector<f64>,
    noise_level: f64,
    exact_data: Option<DVector<f64>>,
    true_solutions: Vec<DVector<f64>>,
    jacobian_source: JacobianSource,
}

impl fmt::Debug for NonlinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSystem")
            .field("n", &self.dim())
            .field("noise_level", &self.noise_level)
            .field("has_exact_data", &self.exact_data.is_some())
            .field("true_solutions", &self.true_solutions.len())
            .field("jacobian_source", &self.jacobian_source)
            .finish()
    }
}

impl NonlinearSystem {
    pub fn new(map: Arc<dyn ForwardMap>, y_delta: DVector<f64>, noise_level: f64) -> Result<Self> {
        let n = map.dim();
        if n == 0 {
            return Err(Error::InvalidConfig("system dimension must be positive".into()));
        }
        check_dim(n, y_delta.len())?;
        if !(noise_level >= 0.0 && noise_level.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise level must be finite and nonnegative, got {noise_level}"
            )));
        }
        if y_delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("data vector contains non-finite entries".into()));
        }
        Ok(Self {
            map,
            y_delta,
            noise_level,
            exact_data: None,
            true_solutions: Vec::new(),
            jacobian_source: JacobianSource::default(),
        })
    }

    /// Attach the unperturbed data `y`. Fails if `||y - y_delta|| > delta`.
    pub fn with_exact_data(mut self, y: DVector<f64>) -> Result<Self> {
        check_dim(self.dim(), y.len())?;
        let gap = (&y - &self.y_delta).norm();
        // one ulp-scale of slack: noise is usually rescaled to norm exactly delta
        if gap > self.noise_level * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "||y - y_delta|| = {gap:.6e} exceeds the noise level {:.6e}",
                self.noise_level
            )));
        }
        self.exact_data = Some(y);
        Ok(self)
    }

    /// Attach known solutions of the unperturbed problem, used only for
    /// error reporting.
    pub fn with_true_solutions(mut self, solutions: Vec<DVector<f64>>) -> Result<Self> {
        for s in &solutions {
            check_dim(self.dim(), s.len())?;
        }
        self.true_solutions = solutions;
        Ok(self)
    }

    pub fn with_jacobian_source(mut self, source: JacobianSource) -> Self {
        self.jacobian_source = source;
        self
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn y_delta(&self) -> &DVector<f64> {
        &self.y_delta
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn exact_data(&self) -> Option<&DVector<f64>> {
        self.exact_data.as_ref()
    }

    pub fn true_solutions(&self) -> &[DVector<f64>] {
        &self.true_solutions
    }

    pub fn jacobian_source(&self) -> JacobianSource {
        self.jacobian_source
    }

    pub fn map(&self) -> &dyn ForwardMap {
        self.map.as_ref()
    }

    /// `F(x)`, rejecting non-finite output.
    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        let fx = self.map.eval(x);
        check_dim(self.dim(), fx.len())?;
        if fx.iter().all(|v| v.is_finite()) {
            Ok(fx)
        } else {
            Err(Error::Evaluation { x: x.iter().copied().collect() })
        }
    }

    /// `F(x) - y_delta`.
    pub fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.forward(x)? - &self.y_delta)
    }

    /// Jacobian at `x` given `F(x)`, honouring [`JacobianSource`].
    pub fn jacobian(&self, x: &DVector<f64>, fx: &DVector<f64>) -> Result<DMatrix<f64>> {
        if self.jacobian_source == JacobianSource::PreferAnalytic {
            if let Some(j) = self.map.jacobian(x) {
                if j.nrows() != self.dim() || j.ncols() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim(),
                        found: if j.nrows() != self.dim() { j.nrows() } else { j.ncols() },
                    });
                }
                if j.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Evaluation { x: x.iter().copied().collect() });
                }
                return Ok(j);
            }
        }
        fd_jacobian(self, x, fx)
    }

    /// Threshold used by the discrepancy principle: `max(tau * delta, atol)`
    /// with `atol = 1e-12 (1 + ||y_delta||)`, so exact-data runs can stop.
    pub fn discrepancy_threshold(&self, tau: f64) -> f64 {
        (tau * self.noise_level).max(exact_data_floor(&self.y_delta))
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Residual floor below which an exact-data run counts as converged.
pub fn exact_data_floor(y_delta: &DVector<f64>) -> f64 {
    1e-12 * (1.0 + y_delta.norm())
}

/// Residual, Jacobian and derived least-squares quantities at one point.
#[derive(Debug, Clone)]
pub struct EvalPoint {
    pub x: DVector<f64>,
    /// `F(x) - y_delta`
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// `J^T J`, exactly symmetric.
    pub gauss_newton: DMatrix<f64>,
    /// `J^T (F(x) - y_delta)`
    pub gradient: DVector<f64>,
    /// `1/2 ||F(x) - y_delta||^2`
    pub phi: f64,
}

impl EvalPoint {
    /// Build the cached quantities from a residual and a Jacobian.
    pub fn from_parts(x: DVector<f64>, residual: DVector<f64>, jacobian: DMatrix<f64>) -> Result<Self> {
        let n = x.len();
        check_dim(n, residual.len())?;
        check_dim(n, jacobian.ncols())?;
        check_dim(n, jacobian.nrows())?;
        let gauss_newton = gram(&jacobian);
        let gradient = jacobian.tr_mul(&residual);
        let phi = 0.5 * residual.norm_squared();
        Ok(Self { x, residual, jacobian, gauss_newton, gradient, phi })
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual.norm()
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gradient.norm()
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// `J^T J` with the lower triangle mirrored from the upper one.
pub fn gram(j: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.ncols();
    let mut b = DMatrix::zeros(n, n);
    for c in 0..n {
        let col_c = j.column(c);
        for r in 0..=c {
            let v = j.column(r).dot(&col_c);
            b[(r, c)] = v;
            b[(c, r)] = v;
        }
    }
    b
}

/// Evaluate `F`, its Jacobian and the Gauss-Newton quantities at `x`.
pub fn evaluate_point(sys: &NonlinearSystem, x: &DVector<f64>) -> Result<EvalPoint> {
    let fx = sys.forward(x)?;
    assemble_point(sys, x.clone(), fx)
}

/// Same as [`evaluate_point`] when `F(x)` is already known.
pub fn assemble_point(sys: &NonlinearSystem, x: DVector<f64>, fx: DVector<f64>) -> Result<EvalPoint> {
    let jacobian = sys.jacobian(&x, &fx)?;
    let residual = fx - sys.y_delta();
    EvalPoint::from_parts(x, residual, jacobian)
}

/// Forward-difference step for component `xj`: `sqrt(eps) * max(|xj|, 1)`
/// carrying the sign of `xj` (positive at zero).
pub fn fd_step(xj: f64) -> f64 {
    let h = f64::EPSILON.sqrt() * xj.abs().max(1.0);
    if xj < 0.0 {
        -h
    } else {
        h
    }
}

/// Forward-difference Jacobian, column `j` being `(F(x + h_j e_j) - F(x)) / h_j`.
pub fn fd_jacobian(sys: &NonlinearSystem, x: &DVector<f64>, fx: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = sys.dim();
    check_dim(n, x.len())?;
    check_dim(n, fx.len())?;
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for j in 0..n {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        // the step actually taken, after rounding of x_j + h
        let h_eff = xp[j] - x[j];
        let fp = sys.forward(&xp)?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fx[i]) / h_eff;
        }
        xp[j] = x[j];
    }
    Ok(jac)
}

/// Discrepancy principle test `||F(x) - y_delta|| <= max(tau * delta, atol)`.
pub fn discrepancy_met(residual_norm: f64, delta: f64, tau: f64, atol: f64) -> bool {
    residual_norm <= (tau * delta).max(atol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn identity_system(y: DVector<f64>) -> NonlinearSystem {
        let n = y.len();
        NonlinearSystem::new(Arc::new(FnMap::new(n, |x: &DVector<f64>| x.clone())), y, 0.0).unwrap()
    }

    #[test]
    fn identity_map_point() {
        let sys = identity_system(dvector![0.0, 0.0]);
        let p = evaluate_point(&sys, &dvector![1.0, 1.0]).unwrap();
        assert_relative_eq!(p.phi, 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.gradient, dvector![1.0, 1.0], epsilon = 1e-7);
        assert_relative_eq!(p.gauss_newton, DMatrix::identity(2, 2), epsilon = 1e-7);
    }

    #[test]
    fn scalar_square_point() {
        let map = FnMapWithJacobian::new(
            1,
            |x: &DVector<f64>| x.map(|v| v * v),
            |x: &DVector<f64>| DMatrix::from_element(1, 1, 2.0 * x[0]),
        );
        let sys = NonlinearSystem::new(Arc::new(map), dvector![0.0], 0.0).unwrap();
        let p = evaluate_point(&sys, &dvector![2.0]).unwrap();
        assert_eq!(p.residual[0], 4.0);
        assert_eq!(p.jacobian[(0, 0)], 4.0);
        assert_eq!(p.gauss_newton[(0, 0)], 16.0);
        assert_eq!(p.gradient[0], 16.0);
        assert_eq!(p.phi, 8.0);
    }

    #[test]
    fn fd_of_square_at_three() {
        let sys = NonlinearSystem::new(
            Arc::new(FnMap::new(1, |x: &DVector<f64>| x.map(|v| v * v))),
            dvector![0.0],
            0.0,
        )
        .unwrap();
        let x = dvector![3.0];
        let j = fd_jacobian(&sys, &x, &sys.forward(&x).unwrap()).unwrap();
        assert!((j[(0, 0)] - 6.0).abs() <= 1e-7, "{}", j[(0, 0)]);
    }

    #[test]
    fn fd_of_linear_map() {
        let a = dmatrix![2.0, -1.0, 0.5; 0.3, 4.0, -2.0; 1.0, 1.0, 1.0];
        let a2 = a.clone();
        let sys = NonlinearSystem::new(
            Arc::new(FnMap::new(3, move |x: &DVector<f64>| &a2 * x)),
            dvector![0.0, 0.0, 0.0],
            0.0,
        )
        .unwrap();
        let x = dvector![0.7, -12.0, 0.0];
        let j = fd_jacobian(&sys, &x, &sys.forward(&x).unwrap()).unwrap();
        let tol = 4.0 * f64::EPSILON.sqrt() * a.norm();
        for (u, v) in j.iter().zip(a.iter()) {
            assert!((u - v).abs() <= tol, "{u} vs {v}");
        }
    }

    #[test]
    fn fd_step_sign_and_scale() {
        assert!(fd_step(0.0) > 0.0);
        assert!(fd_step(-3.0) < 0.0);
        assert_relative_eq!(fd_step(100.0), 100.0 * f64::EPSILON.sqrt());
        assert_relative_eq!(fd_step(0.01), f64::EPSILON.sqrt());
    }

    #[test]
    fn non_finite_evaluation_carries_point() {
        let sys = NonlinearSystem::new(
            Arc::new(FnMap::new(1, |x: &DVector<f64>| x.map(|v| v.ln()))),
            dvector![0.0],
            0.0,
        )
        .unwrap();
        match evaluate_point(&sys, &dvector![-1.0]) {
            Err(Error::Evaluation { x }) => assert_eq!(x, vec![-1.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_checks() {
        let sys = identity_system(dvector![0.0, 0.0]);
        assert!(matches!(
            evaluate_point(&sys, &dvector![1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn discrepancy_examples() {
        assert!(discrepancy_met(1.4e-4, 1e-4, 1.5, 0.0));
        assert!(!discrepancy_met(1.6e-4, 1e-4, 1.5, 0.0));
        let boundary = 1.5 * 1e-4;
        assert!(discrepancy_met(boundary, 1e-4, 1.5, 0.0));
        // exact data falls back to the absolute floor
        assert!(!discrepancy_met(1e-6, 0.0, 1.5, 1e-12));
        assert!(discrepancy_met(1e-13, 0.0, 1.5, 1e-12));
    }

    #[test]
    fn exact_data_must_respect_noise_bound() {
        let sys = identity_system(dvector![1.0, 0.0]);
        let sys = NonlinearSystem::new(sys.map.clone(), dvector![1.0, 0.0], 0.1).unwrap();
        assert!(sys.clone().with_exact_data(dvector![1.05, 0.0]).is_ok());
        assert!(sys.with_exact_data(dvector![1.2, 0.0]).is_err());
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let j = DMatrix::from_fn(7, 7, |r, c| ((r * 13 + c * 7) as f64).sin() * 1e3);
        let b = gram(&j);
        assert_eq!(b, b.transpose());
    }
}
