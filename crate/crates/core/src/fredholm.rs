//! Discretized nonlinear Fredholm integral equations of the first kind,
//!
//! ```text
//! int_0^1 k(t, s, x(s)) ds = y(t),   t in [0, 1],
//! ```
//!
//! on `n` equidistant nodes with piecewise linear (hat) basis functions and
//! the composite trapezoidal rule. Because hat functions interpolate,
//! `x_hat(s_j) = x_j` and
//!
//! ```text
//! F_i(x) = h [ k(t_i, s_1, x_1)/2 + sum_{j=2}^{n-1} k(t_i, s_j, x_j) + k(t_i, s_n, x_n)/2 ].
//! ```
//!
//! Four problems are provided, two per kernel, each with two known true
//! solutions.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::system::{ForwardMap, JacobianSource, NonlinearSystem};

/// Name of the generator used for noise, recorded in every report.
pub const RNG_ID: &str = "chacha8-stdnormal";

/// Default number of grid points.
pub const DEFAULT_N: usize = 64;

const P1_H: f64 = 0.2;
// The pair 1.3 s(1-s) + 0.2 and 1.3 s(s-1) are mirror images about x = H only for H = 0.1.
const P2_H: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProblemId {
    P1,
    P2,
    P3,
    P4,
}

impl ProblemId {
    pub const ALL: [ProblemId; 4] = [ProblemId::P1, ProblemId::P2, ProblemId::P3, ProblemId::P4];

    pub fn kernel(self) -> Kernel {
        match self {
            ProblemId::P1 => Kernel::Logarithmic { h: P1_H },
            ProblemId::P2 => Kernel::Logarithmic { h: P2_H },
            ProblemId::P3 | ProblemId::P4 => Kernel::InverseSqrt,
        }
    }

    /// The four standard initial guesses, ordered by distance from the truth.
    pub fn guesses(self) -> [InitialGuess; 4] {
        use InitialGuess::*;
        match self {
            ProblemId::P1 => [Constant(0.0), Constant(-0.5), Constant(-1.0), Constant(-2.0)],
            ProblemId::P2 => [Constant(0.0), Constant(0.5), Constant(1.0), Constant(2.0)],
            ProblemId::P3 => [Quadratic(1.25), Quadratic(1.5), Quadratic(1.75), Quadratic(2.0)],
            ProblemId::P4 => [Linear(1.0, 1.0), Linear(0.5, 0.0), Linear(1.5, 1.0), Linear(1.5, 0.0)],
        }
    }

    /// Continuous true solutions; the first one generates the data.
    pub fn true_solution(self, which: usize, s: f64) -> f64 {
        let base = match self {
            ProblemId::P1 => p1_truth(s),
            ProblemId::P2 => 1.3 * s * (1.0 - s) + 0.2,
            ProblemId::P3 => 1.0,
            ProblemId::P4 => {
                if s <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        if which == 0 {
            return base;
        }
        match self {
            ProblemId::P1 => 2.0 * P1_H - base,
            ProblemId::P2 => 2.0 * P2_H - base,
            ProblemId::P3 | ProblemId::P4 => -base,
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProblemId::P1 => "P1",
            ProblemId::P2 => "P2",
            ProblemId::P3 => "P3",
            ProblemId::P4 => "P4",
        };
        f.write_str(s)
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "P1" => Ok(ProblemId::P1),
            "P2" => Ok(ProblemId::P2),
            "P3" => Ok(ProblemId::P3),
            "P4" => Ok(ProblemId::P4),
            _ => Err(Error::UnknownProblem(s.to_string())),
        }
    }
}

const P1_C1: f64 = -0.1;
const P1_C2: f64 = -0.075;
const P1_D1: f64 = -40.0;
const P1_D2: f64 = -60.0;
const P1_P1: f64 = 0.4;
const P1_P2: f64 = 0.67;

fn p1_bumps(s: f64) -> f64 {
    P1_C1 * (P1_D1 * (s + P1_P1).powi(2)).exp() + P1_C2 * (P1_D2 * (s - P1_P2).powi(2)).exp()
}

/// The constant `c3 + c4`, fixed by `x_true(0) = 0`. The bumps are below
/// 1e-4 at `s = 1`, so `x_true(1) = 0` holds to that accuracy.
pub fn p1_offset() -> f64 {
    -p1_bumps(0.0)
}

fn p1_truth(s: f64) -> f64 {
    p1_bumps(s) + p1_offset()
}

/// Integral kernels `k(t, s, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `log(((t-s)^2 + H^2) / ((t-s)^2 + (H-x)^2))`
    Logarithmic { h: f64 },
    /// `1 / sqrt(1 + (t-s)^2 + x^2)`
    InverseSqrt,
}

impl Kernel {
    pub fn eval(self, t: f64, s: f64, x: f64) -> f64 {
        let d2 = (t - s) * (t - s);
        match self {
            Kernel::Logarithmic { h } => ((d2 + h * h) / (d2 + (h - x) * (h - x))).ln(),
            Kernel::InverseSqrt => 1.0 / (1.0 + d2 + x * x).sqrt(),
        }
    }

    /// `dk/dx`
    pub fn dx(self, t: f64, s: f64, x: f64) -> f64 {
        let d2 = (t - s) * (t - s);
        match self {
            Kernel::Logarithmic { h } => 2.0 * (h - x) / (d2 + (h - x) * (h - x)),
            Kernel::InverseSqrt => -x / (1.0 + d2 + x * x).powf(1.5),
        }
    }
}

/// Equidistant nodes `(i-1)/(n-1)`, `i = 1..n`.
pub fn grid(n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    (0..n).map(|i| i as f64 * h).collect()
}

/// Trapezoidal weights on [`grid`].
pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    (0..n).map(|j| if j == 0 || j == n - 1 { 0.5 * h } else { h }).collect()
}

/// Hat function `phi_j` on the uniform grid `nodes`, evaluated at `s in [0, 1]`.
pub fn hat(nodes: &[f64], j: usize, s: f64) -> f64 {
    let h = nodes[1] - nodes[0];
    (1.0 - (s - nodes[j]).abs() / h).max(0.0)
}

/// Piecewise linear interpolant `sum_j x_j phi_j(s)`.
pub fn interpolate(nodes: &[f64], x: &DVector<f64>, s: f64) -> f64 {
    (0..nodes.len()).map(|j| x[j] * hat(nodes, j, s)).sum()
}

/// Trapezoidal discretization of the integral operator.
#[derive(Debug, Clone)]
pub struct FredholmMap {
    kernel: Kernel,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl FredholmMap {
    pub fn new(kernel: Kernel, n: usize) -> Self {
        Self { kernel, nodes: grid(n), weights: trapezoid_weights(n) }
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

impl ForwardMap for FredholmMap {
    fn dim(&self) -> usize {
        self.nodes.len()
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.nodes.len(),
            self.nodes.iter().map(|&t| {
                self.nodes
                    .iter()
                    .zip(&self.weights)
                    .zip(x.iter())
                    .map(|((&s, &w), &xj)| w * self.kernel.eval(t, s, xj))
                    .sum::<f64>()
            }),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.nodes.len();
        Some(DMatrix::from_fn(n, n, |i, j| {
            self.weights[j] * self.kernel.dx(self.nodes[i], self.nodes[j], x[j])
        }))
    }
}

/// How the noise level `delta` scales the Gaussian perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Gaussian direction rescaled so that `||y - y_delta|| = delta`.
    #[default]
    NormBound,
    /// i.i.d. entries with standard deviation `delta`.
    StdDev,
    /// i.i.d. entries with variance `delta`.
    Variance,
}

impl NoiseModel {
    fn apply(self, z: &DVector<f64>, delta: f64) -> DVector<f64> {
        match self {
            NoiseModel::NormBound => {
                let nz = z.norm();
                if nz == 0.0 || delta == 0.0 {
                    DVector::zeros(z.len())
                } else {
                    z * (delta / nz)
                }
            }
            NoiseModel::StdDev => z * delta,
            NoiseModel::Variance => z * delta.sqrt(),
        }
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "norm" | "norm-bound" => Ok(NoiseModel::NormBound),
            "std" | "stddev" | "std-dev" => Ok(NoiseModel::StdDev),
            "variance" | "var" => Ok(NoiseModel::Variance),
            other => Err(Error::InvalidConfig(format!("unknown noise model '{other}'"))),
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseModel::NormBound => "norm",
            NoiseModel::StdDev => "std",
            NoiseModel::Variance => "variance",
        })
    }
}

/// Construction parameters for a [`FredholmProblem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub id: ProblemId,
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub noise: NoiseModel,
    pub jacobian: JacobianSource,
}

impl ProblemSpec {
    pub fn new(id: ProblemId, delta: f64, seed: u64) -> Self {
        Self {
            id,
            n: DEFAULT_N,
            delta,
            seed,
            noise: NoiseModel::default(),
            jacobian: JacobianSource::FiniteDifference,
        }
    }
}

/// One discretized test problem with its data and true solutions.
#[derive(Debug, Clone)]
pub struct FredholmProblem {
    pub spec: ProblemSpec,
    pub nodes: Vec<f64>,
    /// Samples of the two true solutions on the grid.
    pub true_solutions: [DVector<f64>; 2],
    /// `forward(true_solutions[0])`
    pub exact_data: DVector<f64>,
    pub noisy_data: DVector<f64>,
    map: Arc<FredholmMap>,
}

impl FredholmProblem {
    pub fn id(&self) -> ProblemId {
        self.spec.id
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn delta(&self) -> f64 {
        self.spec.delta
    }

    pub fn map(&self) -> &FredholmMap {
        &self.map
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.map.eval(x)
    }

    /// The system handed to the solvers. The nominal `delta` is used by the
    /// discrepancy principle.
    pub fn system(&self) -> Result<NonlinearSystem> {
        let mut sys = NonlinearSystem::new(self.map.clone(), self.noisy_data.clone(), self.spec.delta)?
            .with_true_solutions(self.true_solutions.to_vec())?
            .with_jacobian_source(self.spec.jacobian);
        if self.spec.noise == NoiseModel::NormBound {
            sys = sys.with_exact_data(self.exact_data.clone())?;
        }
        Ok(sys)
    }

    pub fn initial_guess(&self, guess: InitialGuess) -> Result<DVector<f64>> {
        initial_guess(self.spec.id, guess, &self.nodes)
    }

    /// Index of the true solution closest to `x` in the Euclidean norm.
    pub fn nearest_truth(&self, x: &DVector<f64>) -> usize {
        nearest(&self.true_solutions, x)
    }

    pub fn error_metrics(&self, x: &DVector<f64>) -> ErrorMetrics {
        error_metrics(x, &self.true_solutions[self.nearest_truth(x)])
    }
}

/// Index of the vector in `truths` closest to `x`.
pub fn nearest(truths: &[DVector<f64>], x: &DVector<f64>) -> usize {
    truths
        .iter()
        .enumerate()
        .map(|(i, t)| (i, (x - t).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(i, _)| i)
}

fn standard_normal(n: usize, seed: u64, stream: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)))
}

fn build_with_stream(spec: ProblemSpec, stream: u64) -> Result<FredholmProblem> {
    if spec.n < 3 {
        return Err(Error::InvalidConfig(format!("need at least 3 grid points, got {}", spec.n)));
    }
    if !(spec.delta >= 0.0 && spec.delta.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise level must be nonnegative, got {}", spec.delta)));
    }
    let nodes = grid(spec.n);
    let truth = |which| DVector::from_iterator(spec.n, nodes.iter().map(|&s| spec.id.true_solution(which, s)));
    let true_solutions = [truth(0), truth(1)];
    let map = Arc::new(FredholmMap::new(spec.id.kernel(), spec.n));
    let exact_data = map.eval(&true_solutions[0]);
    let noise = spec.noise.apply(&standard_normal(spec.n, spec.seed, stream), spec.delta);
    let noisy_data = &exact_data + noise;
    Ok(FredholmProblem { spec, nodes, true_solutions, exact_data, noisy_data, map })
}

/// Build a test problem; the noise is a deterministic function of the seed.
pub fn build_problem(spec: ProblemSpec) -> Result<FredholmProblem> {
    build_with_stream(spec, 0)
}

/// One problem per noise level, all sharing the exact data. Entry `i` draws
/// its noise from stream `i` of the seeded generator.
pub fn noise_sweep(base: ProblemSpec, deltas: &[f64]) -> Result<Vec<FredholmProblem>> {
    if deltas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidConfig("noise levels must be in descending order".into()));
    }
    deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| build_with_stream(ProblemSpec { delta, ..base }, i as u64))
        .collect()
}

/// Parametrized initial guesses sampled on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGuess {
    /// `c e`
    Constant(f64),
    /// `(4 - 4 alpha) s^2 + (4 alpha - 4) s + 1`
    Quadratic(f64),
    /// `beta - chi s`
    Linear(f64, f64),
}

impl InitialGuess {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            InitialGuess::Constant(c) => c,
            InitialGuess::Quadratic(a) => (-4.0 * a + 4.0) * s * s + (4.0 * a - 4.0) * s + 1.0,
            InitialGuess::Linear(beta, chi) => beta - chi * s,
        }
    }

    /// Parse `x0=-0.5e`, `-0.5e`, `alpha=1.5` or `beta=1.5,chi=0` for problem `id`.
    pub fn parse(id: ProblemId, selector: &str) -> Result<Self> {
        let bad = || Error::UnknownSelector { problem: id.to_string(), selector: selector.to_string() };
        let sel: String = selector.chars().filter(|c| !c.is_whitespace()).collect();
        let sel = sel.to_ascii_lowercase();
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
        let guess = match id {
            ProblemId::P1 | ProblemId::P2 => {
                let body = sel.strip_prefix("x0=").unwrap_or(&sel);
                let coef = body.strip_suffix('e').ok_or_else(bad)?;
                let c = match coef {
                    "" | "+" => 1.0,
                    "-" => -1.0,
                    v => num(v)?,
                };
                InitialGuess::Constant(c)
            }
            ProblemId::P3 => {
                let body = sel.strip_prefix("alpha=").ok_or_else(bad)?;
                InitialGuess::Quadratic(num(body)?)
            }
            ProblemId::P4 => {
                let mut beta = None;
                let mut chi = None;
                for part in sel.split(',') {
                    if let Some(v) = part.strip_prefix("beta=") {
                        beta = Some(num(v)?);
                    } else if let Some(v) = part.strip_prefix("chi=") {
                        chi = Some(num(v)?);
                    } else {
                        return Err(bad());
                    }
                }
                InitialGuess::Linear(beta.ok_or_else(bad)?, chi.ok_or_else(bad)?)
            }
        };
        if matches!(guess, InitialGuess::Constant(c) | InitialGuess::Quadratic(c) if !c.is_finite()) {
            return Err(bad());
        }
        Ok(guess)
    }

    /// Short label used in tables, e.g. `-0.5e`, `alpha=1.25`, `beta=1,chi=1`.
    pub fn label(self) -> String {
        match self {
            InitialGuess::Constant(c) => format!("{c}e"),
            InitialGuess::Quadratic(a) => format!("alpha={a}"),
            InitialGuess::Linear(b, c) => format!("beta={b},chi={c}"),
        }
    }

    fn valid_for(self, id: ProblemId) -> bool {
        matches!(
            (id, self),
            (ProblemId::P1 | ProblemId::P2, InitialGuess::Constant(_))
                | (ProblemId::P3, InitialGuess::Quadratic(_))
                | (ProblemId::P4, InitialGuess::Linear(..))
        )
    }
}

/// Sample `guess` on `nodes`, checking that it belongs to problem `id`.
pub fn initial_guess(id: ProblemId, guess: InitialGuess, nodes: &[f64]) -> Result<DVector<f64>> {
    if !guess.valid_for(id) {
        return Err(Error::UnknownSelector { problem: id.to_string(), selector: guess.label() });
    }
    Ok(DVector::from_iterator(nodes.len(), nodes.iter().map(|&s| guess.eval(s))))
}

/// Max-norm errors over interior nodes (`e_i`) and over all nodes (`e_t`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub e_i: f64,
    pub e_t: f64,
}

pub fn error_metrics(x: &DVector<f64>, truth: &DVector<f64>) -> ErrorMetrics {
    let n = x.len();
    let diff = |j: usize| (truth[j] - x[j]).abs();
    let e_i = (1..n.saturating_sub(1)).map(diff).fold(0.0, f64::max);
    let e_t = (0..n).map(diff).fold(0.0, f64::max);
    ErrorMetrics { e_i, e_t }
}
