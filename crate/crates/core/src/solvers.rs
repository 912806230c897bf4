//! Outer iterations for `F(x) = y` with noisy data.
//!
//! Three methods share the same stopping rule (the discrepancy principle
//! `||F(x_k) - y_delta|| <= tau * delta`) and the same trace format:
//!
//! * [`Method::RegularizingTR`]: trust region whose radius is tied to the
//!   residual, `radius_k = mu_k ||F(x_k) - y_delta||`, with `mu_k` adapted to
//!   the q-ratio of the previous step;
//! * [`Method::RegularizingLM`]: Levenberg-Marquardt with `lambda_k` solving
//!   the q-equation, every step taken;
//! * [`Method::StandardTR`]: textbook radius update driven by `rho_k` only.
//!
//! Both trust-region variants run [`solve_with_policy`], so they differ only
//! in their [`RadiusPolicy`].

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::subproblem::{self, lm_secular_newton, svd_diagnostics, tr_secular_newton, NewtonOptions, SecularSolution};
use crate::system::{assemble_point, evaluate_point, EvalPoint, NonlinearSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    RegularizingTR,
    RegularizingLM,
    StandardTR,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::RegularizingTR, Method::RegularizingLM, Method::StandardTR];

    pub fn short_name(self) -> &'static str {
        match self {
            Method::RegularizingTR => "rtr",
            Method::RegularizingLM => "rlm",
            Method::StandardTR => "str",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rtr" => Ok(Method::RegularizingTR),
            "rlm" => Ok(Method::RegularizingLM),
            "str" => Ok(Method::StandardTR),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}' (expected rtr, rlm or str)"))),
        }
    }
}

/// Radius rule of the regularizing trust region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusRule {
    /// `radius = mu ||F - y_delta||` with the adaptive `mu`.
    #[default]
    Practical,
    /// Practical proposal projected into
    /// `[c_min ||g||, min(c_max, (1 - q)/||B||) ||g||]`.
    Strict,
}

impl FromStr for RadiusRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "practical" => Ok(RadiusRule::Practical),
            "strict" => Ok(RadiusRule::Strict),
            other => Err(Error::InvalidConfig(format!("unknown radius rule '{other}'"))),
        }
    }
}

impl fmt::Display for RadiusRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RadiusRule::Practical => "practical",
            RadiusRule::Strict => "strict",
        })
    }
}

/// Every constant of the three iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Discrepancy factor, `> 1`.
    pub tau: f64,
    /// q-condition parameter; `None` means `1.1 / tau`.
    pub q: Option<f64>,
    /// Acceptance threshold on `rho_k`.
    pub eta: f64,
    /// Radius contraction after a rejected trial (regularizing TR).
    pub gamma: f64,
    /// `mu` doubles when `q_k > nu q`.
    pub nu: f64,
    pub mu0: f64,
    pub delta_max: f64,
    pub delta_min: f64,
    pub max_iter: usize,
    pub tr_newton_tol: f64,
    pub lm_newton_tol: f64,
    pub newton_max_iter: usize,
    pub radius_rule: RadiusRule,
    pub c_min: f64,
    pub c_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::RegularizingTR,
            tau: 1.5,
            q: None,
            eta: 0.25,
            gamma: 1.0 / 6.0,
            nu: 1.1,
            mu0: 0.1,
            delta_max: 1e4,
            delta_min: 1e-12,
            max_iter: 300,
            tr_newton_tol: 1e-2,
            lm_newton_tol: 1e-5,
            newton_max_iter: subproblem::NEWTON_MAX_ITER,
            radius_rule: RadiusRule::Practical,
            c_min: 1e-4,
            c_max: 1e2,
        }
    }
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn q(&self) -> f64 {
        self.q.unwrap_or(1.1 / self.tau)
    }

    fn tr_options(&self) -> NewtonOptions {
        NewtonOptions { tol: self.tr_newton_tol, max_iter: self.newton_max_iter }
    }

    fn lm_options(&self) -> NewtonOptions {
        NewtonOptions { tol: self.lm_newton_tol, max_iter: self.newton_max_iter }
    }

    /// Check the parameter ranges. `noise_level` enables the noisy-data
    /// requirement `q > 1/tau` for the regularizing methods.
    pub fn validate(&self, noise_level: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let q = self.q();
        if !(self.tau > 1.0 && self.tau.is_finite()) {
            return bad(format!("tau must exceed 1, got {}", self.tau));
        }
        if !(q > 0.0 && q < 1.0) {
            return bad(format!("q must lie in (0, 1), got {q}"));
        }
        if noise_level > 0.0 && self.method != Method::StandardTR && q * self.tau <= 1.0 {
            return bad(format!("noisy data requires q > 1/tau, got q = {q}, tau = {}", self.tau));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.nu >= 1.0 && self.nu.is_finite()) {
            return bad(format!("nu must be at least 1, got {}", self.nu));
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return bad(format!("mu0 must be positive, got {}", self.mu0));
        }
        if !(self.delta_min > 0.0 && self.delta_min < self.delta_max && self.delta_max.is_finite()) {
            return bad(format!(
                "radius bounds must satisfy 0 < delta_min < delta_max, got {} and {}",
                self.delta_min, self.delta_max
            ));
        }
        if !(self.c_min > 0.0 && self.c_min < self.c_max && self.c_max.is_finite()) {
            return bad(format!("need 0 < c_min < c_max, got {} and {}", self.c_min, self.c_max));
        }
        if !(self.tr_newton_tol > 0.0 && self.lm_newton_tol > 0.0) || self.newton_max_iter == 0 {
            return bad("Newton tolerances and iteration cap must be positive".into());
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    DiscrepancyMet,
    MaxIterExceeded,
    RadiusCollapsed,
    StationaryPoint,
    SubproblemFailure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::DiscrepancyMet => "DiscrepancyMet",
            Status::MaxIterExceeded => "MaxIterExceeded",
            Status::RadiusCollapsed => "RadiusCollapsed",
            Status::StationaryPoint => "StationaryPoint",
            Status::SubproblemFailure => "SubproblemFailure",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Status::DiscrepancyMet,
            Status::MaxIterExceeded,
            Status::RadiusCollapsed,
            Status::StationaryPoint,
            Status::SubproblemFailure,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown status '{s}'")))
    }
}

/// One trial step. Trust-region iterations append one record per trial,
/// accepted or not; Levenberg-Marquardt appends one accepted record per
/// iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// `||F(x_k) - y_delta||`
    pub residual_norm: f64,
    /// Trust-region radius of the trial; `None` for Levenberg-Marquardt.
    pub radius: Option<f64>,
    pub lambda: f64,
    pub rho: f64,
    /// `||F(x_k) - y_delta + J p|| / ||F(x_k) - y_delta||`
    pub q_ratio: f64,
    pub accepted: bool,
    /// Cholesky factorizations spent on this trial.
    pub chol: usize,
    /// `||x_k - x_true||` against the true solution nearest the final iterate.
    pub error_to_truth: Option<f64>,
}

/// Result of a run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: Method,
    pub status: Status,
    pub x_final: DVector<f64>,
    pub residual_norm_final: f64,
    /// Accepted iterations.
    pub it: usize,
    /// Function evaluations, excluding those spent on finite differences.
    pub nf: usize,
    /// Rounded average number of Cholesky factorizations per iteration.
    pub cf: usize,
    pub chol_total: usize,
    pub rejected: usize,
    pub trace: Vec<IterationRecord>,
    /// Index of the true solution nearest `x_final`, if any are known.
    pub truth_index: Option<usize>,
    pub final_error: Option<f64>,
    pub notes: Vec<String>,
}

impl SolveReport {
    pub fn accepted(&self) -> impl Iterator<Item = &IterationRecord> {
        self.trace.iter().filter(|r| r.accepted)
    }

    /// Errors to the truth along the accepted iterates, ending with `x_final`.
    pub fn error_history(&self) -> Vec<f64> {
        let mut errs: Vec<f64> = self.accepted().filter_map(|r| r.error_to_truth).collect();
        if let Some(e) = self.final_error {
            errs.push(e);
        }
        errs
    }
}

/// Achieved versus predicted reduction of `Phi` for a trial step.
#[derive(Debug, Clone)]
pub struct RhoEval {
    pub rho: f64,
    pub ared: f64,
    pub pred: f64,
    /// `F(x + p)`, if it evaluated to finite values.
    pub trial_fx: Option<DVector<f64>>,
    pub note: Option<String>,
}

/// `rho = ared / pred` with `ared = Phi(x) - Phi(x + p)` and
/// `pred = Phi(x) - 1/2 ||F - y_delta + J p||^2 = -g^T p - 1/2 ||J p||^2`.
///
/// A non-positive `pred` or a non-finite trial value gives `rho = -inf`.
pub fn compute_rho(point: &EvalPoint, p: &DVector<f64>, sys: &NonlinearSystem) -> RhoEval {
    let jp = &point.jacobian * p;
    let pred = -point.gradient.dot(p) - 0.5 * jp.norm_squared();
    let x_trial = &point.x + p;
    let trial_fx = match sys.forward(&x_trial) {
        Ok(fx) => fx,
        Err(_) => {
            return RhoEval {
                rho: f64::NEG_INFINITY,
                ared: f64::NEG_INFINITY,
                pred,
                trial_fx: None,
                note: Some("non-finite function value at trial point".into()),
            }
        }
    };
    let phi_trial = 0.5 * (&trial_fx - sys.y_delta()).norm_squared();
    let ared = point.phi - phi_trial;
    let (rho, note) = if pred > 0.0 {
        (ared / pred, None)
    } else {
        (f64::NEG_INFINITY, Some(format!("non-positive predicted reduction {pred:e}")))
    };
    RhoEval { rho, ared, pred, trial_fx: Some(trial_fx), note }
}

/// Information about an accepted trust-region step passed to
/// [`RadiusPolicy::next`].
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub radius: f64,
    pub step_norm: f64,
    pub rho: f64,
    pub q_ratio: f64,
}

/// Radius proposals of a trust-region iteration.
pub trait RadiusPolicy {
    fn initial(&mut self, point: &EvalPoint) -> f64;

    /// Radius for the next trial after a rejection.
    fn shrink(&mut self, radius: f64, step_norm: f64) -> f64;

    /// Radius for the first trial at the new iterate `point`.
    fn next(&mut self, outcome: &StepOutcome, point: &EvalPoint) -> f64;
}

/// `radius_k = mu_k ||F(x_k) - y_delta||`, where `mu` is divided by 6 when
/// the last step violated the q-condition and doubled when `q_k > nu q`.
#[derive(Debug, Clone)]
pub struct RegularizingRadius {
    mu: f64,
    q: f64,
    nu: f64,
    gamma: f64,
    delta_min: f64,
    delta_max: f64,
    rule: RadiusRule,
    c_min: f64,
    c_max: f64,
}

impl RegularizingRadius {
    pub fn new(cfg: &SolverConfig) -> Self {
        Self {
            mu: cfg.mu0,
            q: cfg.q(),
            nu: cfg.nu,
            gamma: cfg.gamma,
            delta_min: cfg.delta_min,
            delta_max: cfg.delta_max,
            rule: cfg.radius_rule,
            c_min: cfg.c_min,
            c_max: cfg.c_max,
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `mu_{k+1}` from the q-ratio of the accepted step.
    pub fn update_mu(&mut self, q_ratio: f64) {
        if q_ratio < self.q {
            self.mu /= 6.0;
        } else if q_ratio > self.nu * self.q {
            self.mu *= 2.0;
        }
    }

    fn propose(&self, point: &EvalPoint) -> f64 {
        let mut radius = self.mu * point.residual_norm();
        if self.rule == RadiusRule::Strict {
            let gnorm = point.gradient_norm();
            let b_norm = svd_diagnostics(point)
                .map(|d| d.gauss_newton_norm())
                .unwrap_or_else(|_| point.gauss_newton.norm());
            let upper = self.c_max.min((1.0 - self.q) / b_norm) * gnorm;
            let lower = self.c_min * gnorm;
            radius = if lower <= upper { radius.clamp(lower, upper) } else { upper };
        }
        radius.clamp(self.delta_min, self.delta_max)
    }
}

impl RadiusPolicy for RegularizingRadius {
    fn initial(&mut self, point: &EvalPoint) -> f64 {
        self.propose(point)
    }

    fn shrink(&mut self, radius: f64, _step_norm: f64) -> f64 {
        self.mu *= self.gamma;
        self.gamma * radius
    }

    fn next(&mut self, outcome: &StepOutcome, point: &EvalPoint) -> f64 {
        self.update_mu(outcome.q_ratio);
        self.propose(point)
    }
}

/// Textbook update: start at 1, shrink to `||p||/4` when `rho < 1/4`,
/// double (up to `delta_max`) when `rho > 3/4`.
#[derive(Debug, Clone)]
pub struct StandardRadius {
    delta_max: f64,
}

impl StandardRadius {
    pub fn new(cfg: &SolverConfig) -> Self {
        Self { delta_max: cfg.delta_max }
    }
}

impl RadiusPolicy for StandardRadius {
    fn initial(&mut self, _point: &EvalPoint) -> f64 {
        1.0f64.min(self.delta_max)
    }

    fn shrink(&mut self, _radius: f64, step_norm: f64) -> f64 {
        step_norm / 4.0
    }

    fn next(&mut self, outcome: &StepOutcome, _point: &EvalPoint) -> f64 {
        if outcome.rho < 0.25 {
            outcome.step_norm / 4.0
        } else if outcome.rho <= 0.75 {
            outcome.radius
        } else {
            (2.0 * outcome.radius).min(self.delta_max)
        }
    }
}

/// Bookkeeping shared by all iterations.
struct Run<'a> {
    sys: &'a NonlinearSystem,
    cfg: &'a SolverConfig,
    point: EvalPoint,
    threshold: f64,
    it: usize,
    nf: usize,
    chol_total: usize,
    rejected: usize,
    trace: Vec<IterationRecord>,
    // distances of x_k to every known true solution, one row per record
    truth_dists: Vec<Vec<f64>>,
    notes: Vec<String>,
}

impl<'a> Run<'a> {
    fn start(sys: &'a NonlinearSystem, x0: &DVector<f64>, cfg: &'a SolverConfig) -> Result<Self> {
        cfg.validate(sys.noise_level())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("initial guess contains non-finite entries".into()));
        }
        let point = evaluate_point(sys, x0)?;
        Ok(Self {
            sys,
            cfg,
            point,
            threshold: sys.discrepancy_threshold(cfg.tau),
            it: 0,
            nf: 1,
            chol_total: 0,
            rejected: 0,
            trace: Vec::new(),
            truth_dists: Vec::new(),
            notes: Vec::new(),
        })
    }

    /// Status if the run must stop before computing another step.
    fn stop_reason(&self) -> Option<Status> {
        if self.point.residual_norm() <= self.threshold {
            Some(Status::DiscrepancyMet)
        } else if self.it >= self.cfg.max_iter {
            Some(Status::MaxIterExceeded)
        } else if self.point.gradient_norm() == 0.0 {
            Some(Status::StationaryPoint)
        } else {
            None
        }
    }

    fn push(&mut self, mut rec: IterationRecord) {
        let dists = self.sys.true_solutions().iter().map(|t| (&self.point.x - t).norm()).collect();
        rec.error_to_truth = None;
        self.chol_total += rec.chol;
        if !rec.accepted {
            self.rejected += 1;
        }
        self.trace.push(rec);
        self.truth_dists.push(dists);
    }

    fn advance(&mut self, x_trial: DVector<f64>, fx: DVector<f64>) -> Result<()> {
        self.point = assemble_point(self.sys, x_trial, fx)?;
        self.it += 1;
        Ok(())
    }

    fn fail(&mut self, err: &Error) -> Status {
        self.notes.push(err.to_string());
        match err {
            Error::StationaryPoint => Status::StationaryPoint,
            _ => Status::SubproblemFailure,
        }
    }

    fn finish(mut self, status: Status) -> SolveReport {
        let truths = self.sys.true_solutions();
        let x_final = self.point.x.clone();
        let truth_index = (!truths.is_empty()).then(|| crate::fredholm::nearest(truths, &x_final));
        if let Some(i) = truth_index {
            for (rec, dists) in self.trace.iter_mut().zip(&self.truth_dists) {
                rec.error_to_truth = Some(dists[i]);
            }
        }
        let final_error = truth_index.map(|i| (&x_final - &truths[i]).norm());
        let cf = if self.it == 0 { 0 } else { (self.chol_total as f64 / self.it as f64).round() as usize };
        SolveReport {
            method: self.cfg.method,
            status,
            residual_norm_final: self.point.residual_norm(),
            x_final,
            it: self.it,
            nf: self.nf,
            cf,
            chol_total: self.chol_total,
            rejected: self.rejected,
            trace: self.trace,
            truth_index,
            final_error,
            notes: self.notes,
        }
    }
}

/// Run the method selected by `cfg.method` from `x0`.
///
/// Configuration errors and a non-finite `F(x0)` are returned as `Err`;
/// failures after the first evaluation end the run with a status and keep
/// the partial trace.
pub fn solve(sys: &NonlinearSystem, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<SolveReport> {
    match cfg.method {
        Method::RegularizingTR => solve_with_policy(sys, x0, cfg, &mut RegularizingRadius::new(cfg)),
        Method::StandardTR => solve_with_policy(sys, x0, cfg, &mut StandardRadius::new(cfg)),
        Method::RegularizingLM => solve_regularizing_lm(sys, x0, cfg),
    }
}

/// Trust-region iteration with an arbitrary radius policy.
///
/// Each iteration solves the subproblem at the proposed radius, accepts the
/// step when `rho >= eta`, and otherwise asks the policy for a smaller radius.
/// A radius below `delta_min` ends the run with [`Status::RadiusCollapsed`].
pub fn solve_with_policy(
    sys: &NonlinearSystem,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    policy: &mut dyn RadiusPolicy,
) -> Result<SolveReport> {
    let mut run = Run::start(sys, x0, cfg)?;
    if let Some(status) = run.stop_reason() {
        return Ok(run.finish(status));
    }
    let mut radius = policy.initial(&run.point);
    loop {
        if let Some(status) = run.stop_reason() {
            return Ok(run.finish(status));
        }
        let accepted = loop {
            if radius < cfg.delta_min {
                return Ok(run.finish(Status::RadiusCollapsed));
            }
            let sol = match tr_secular_newton(&run.point, radius, cfg.tr_options()) {
                Ok(sol) => sol,
                Err(e) => {
                    let status = run.fail(&e);
                    return Ok(run.finish(status));
                }
            };
            let trial = evaluate_trial(&mut run, &sol, Some(radius));
            if let Some(fx) = trial.accepted_fx {
                break (sol, fx, trial.q_ratio, trial.rho);
            }
            radius = policy.shrink(radius, sol.step.p_norm);
        };

        let (sol, fx, q_ratio, rho) = accepted;
        let outcome = StepOutcome { radius, step_norm: sol.step.p_norm, rho, q_ratio };
        let x_next = &run.point.x + &sol.step.p;
        if let Err(e) = run.advance(x_next, fx) {
            let status = run.fail(&e);
            return Ok(run.finish(status));
        }
        radius = policy.next(&outcome, &run.point);
    }
}

struct TrialResult {
    accepted_fx: Option<DVector<f64>>,
    rho: f64,
    q_ratio: f64,
}

/// Evaluate a trial step, record it, and hand back `F(x + p)` if accepted.
fn evaluate_trial(run: &mut Run<'_>, sol: &SecularSolution, radius: Option<f64>) -> TrialResult {
    let step = &sol.step;
    let rho_eval = compute_rho(&run.point, &step.p, run.sys);
    run.nf += 1;
    let q_ratio = step.model_residual_norm / run.point.residual_norm();
    // Levenberg-Marquardt takes every step with a finite value
    let accepted = match radius {
        Some(_) => rho_eval.rho >= run.cfg.eta && rho_eval.trial_fx.is_some(),
        None => rho_eval.trial_fx.is_some(),
    };
    if let Some(note) = &rho_eval.note {
        run.notes.push(format!("k = {}: {note}", run.it));
    }
    run.push(IterationRecord {
        k: run.it,
        residual_norm: run.point.residual_norm(),
        radius,
        lambda: step.lambda,
        rho: rho_eval.rho,
        q_ratio,
        accepted,
        chol: step.chol_count,
        error_to_truth: None,
    });
    TrialResult {
        accepted_fx: if accepted { rho_eval.trial_fx } else { None },
        rho: rho_eval.rho,
        q_ratio,
    }
}

/// One regularizing Levenberg-Marquardt step: `p(lambda_q)` with `lambda_q`
/// solving the q-equation.
pub fn regularizing_lm_step(point: &EvalPoint, cfg: &SolverConfig) -> Result<SecularSolution> {
    lm_secular_newton(point, cfg.q(), cfg.lm_options())
}

fn solve_regularizing_lm(sys: &NonlinearSystem, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<SolveReport> {
    let mut run = Run::start(sys, x0, cfg)?;
    loop {
        if let Some(status) = run.stop_reason() {
            return Ok(run.finish(status));
        }
        let sol = match regularizing_lm_step(&run.point, cfg) {
            Ok(sol) => sol,
            Err(e) => {
                let status = run.fail(&e);
                return Ok(run.finish(status));
            }
        };
        let trial = evaluate_trial(&mut run, &sol, None);
        let Some(fx) = trial.accepted_fx else {
            run.notes.push("function evaluation failed at the Levenberg-Marquardt step".into());
            return Ok(run.finish(Status::SubproblemFailure));
        };
        let x_next = &run.point.x + &sol.step.p;
        if let Err(e) = run.advance(x_next, fx) {
            let status = run.fail(&e);
            return Ok(run.finish(status));
        }
    }
}
