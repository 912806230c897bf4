//! Experiment plumbing: run specifications, grids of runs, noise sweeps,
//! CSV output and flat `key = value` configuration.
//!
//! Grid and sweep cells run in parallel; rows are always returned in the
//! order the cells were enumerated, so output files are reproducible
//! bit-for-bit.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fredholm::{
    build_problem, noise_sweep, FredholmProblem, InitialGuess, NoiseModel, ProblemId, ProblemSpec, DEFAULT_N,
    RNG_ID,
};
use crate::solvers::{solve, IterationRecord, Method, RadiusRule, SolveReport, SolverConfig, Status};
use crate::system::JacobianSource;

/// Environment variable that overrides the output directory of a config file.
pub const OUT_ENV: &str = "REGTR_OUT";

/// Noise levels of the default sweep.
pub const DEFAULT_DELTAS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// One solver run on a test problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub problem: ProblemId,
    pub guess: InitialGuess,
    pub delta: f64,
    pub seed: u64,
    pub n: usize,
    pub noise: NoiseModel,
    pub jacobian: JacobianSource,
    pub solver: SolverConfig,
}

impl RunSpec {
    pub fn new(problem: ProblemId, guess: InitialGuess, delta: f64, seed: u64, method: Method) -> Self {
        Self {
            problem,
            guess,
            delta,
            seed,
            n: DEFAULT_N,
            noise: NoiseModel::default(),
            jacobian: JacobianSource::FiniteDifference,
            solver: SolverConfig::new(method),
        }
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        ProblemSpec { id: self.problem, n: self.n, delta: self.delta, seed: self.seed, noise: self.noise, jacobian: self.jacobian }
    }
}

/// A finished run together with the problem it was solved on.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub problem: FredholmProblem,
    pub report: SolveReport,
}

impl RunOutcome {
    pub fn e_i(&self) -> f64 {
        self.problem.error_metrics(&self.report.x_final).e_i
    }

    pub fn e_t(&self) -> f64 {
        self.problem.error_metrics(&self.report.x_final).e_t
    }

    /// `||x_final - x_true||` for the nearer true solution.
    pub fn final_error(&self) -> f64 {
        let x = &self.report.x_final;
        (x - &self.problem.true_solutions[self.problem.nearest_truth(x)]).norm()
    }

    pub fn starred(&self) -> bool {
        is_starred(self.spec.problem, self.report.status, self.e_t())
    }
}

/// Build the problem described by `spec` and solve it.
pub fn run(spec: &RunSpec) -> Result<RunOutcome> {
    let problem = build_problem(spec.problem_spec())?;
    run_on(spec, problem)
}

fn run_on(spec: &RunSpec, problem: FredholmProblem) -> Result<RunOutcome> {
    let x0 = problem.initial_guess(spec.guess)?;
    let report = solve(&problem.system()?, &x0, &spec.solver)?;
    Ok(RunOutcome { spec: spec.clone(), problem, report })
}

/// Largest `e_T` for which a final iterate still counts as an approximation
/// of a true solution. Errors of the size of the solutions themselves mean
/// the iteration has drifted towards a solution of the noisy problem.
pub fn star_threshold(id: ProblemId) -> f64 {
    match id {
        ProblemId::P1 | ProblemId::P2 => 1.5,
        ProblemId::P3 | ProblemId::P4 => 1.0,
    }
}

/// A run is starred when the discrepancy principle was not reached or when
/// the final error exceeds [`star_threshold`].
pub fn is_starred(id: ProblemId, status: Status, e_t: f64) -> bool {
    status != Status::DiscrepancyMet || !(e_t <= star_threshold(id))
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub problem: String,
    pub x0: String,
    pub method: String,
    pub it: usize,
    pub resnorm_final: f64,
    pub nf: usize,
    pub cf: usize,
    pub e_i: f64,
    pub e_t: f64,
    /// Solver status, or `Error`; a trailing `*` marks starred runs.
    pub status: String,
    pub seed: u64,
    pub rng_id: String,
}

pub const SUMMARY_HEADER: [&str; 12] =
    ["problem", "x0", "method", "it", "resnorm_final", "nf", "cf", "e_I", "e_T", "status", "seed", "rng_id"];

impl SummaryRow {
    pub fn from_outcome(o: &RunOutcome) -> Self {
        let r = &o.report;
        let mut status = r.status.as_str().to_string();
        if o.starred() {
            status.push('*');
        }
        Self {
            problem: o.spec.problem.to_string(),
            x0: o.spec.guess.label(),
            method: o.spec.solver.method.short_name().to_string(),
            it: r.it,
            resnorm_final: r.residual_norm_final,
            nf: r.nf,
            cf: r.cf,
            e_i: o.e_i(),
            e_t: o.e_t(),
            status,
            seed: o.spec.seed,
            rng_id: RNG_ID.to_string(),
        }
    }

    /// Placeholder for a run that could not be carried out.
    pub fn failed(spec: &RunSpec) -> Self {
        Self {
            problem: spec.problem.to_string(),
            x0: spec.guess.label(),
            method: spec.solver.method.short_name().to_string(),
            it: 0,
            resnorm_final: f64::NAN,
            nf: 0,
            cf: 0,
            e_i: f64::NAN,
            e_t: f64::NAN,
            status: "Error*".to_string(),
            seed: spec.seed,
            rng_id: RNG_ID.to_string(),
        }
    }

    pub fn starred(&self) -> bool {
        self.status.ends_with('*')
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.problem.clone(),
            self.x0.clone(),
            self.method.clone(),
            self.it.to_string(),
            fmt_f64(self.resnorm_final),
            self.nf.to_string(),
            self.cf.to_string(),
            fmt_f64(self.e_i),
            fmt_f64(self.e_t),
            self.status.clone(),
            self.seed.to_string(),
            self.rng_id.clone(),
        ]
    }
}

/// Full-precision formatting that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Io(format!("not a number: '{s}'")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Io(format!("not an integer: '{s}'")))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

pub const TRACE_HEADER: [&str; 9] =
    ["k", "resnorm", "delta_k", "lambda_k", "rho_k", "q_k", "accepted", "chol", "err_truth"];

/// Write one row per trial step.
pub fn write_trace<W: Write>(w: W, trace: &[IterationRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for r in trace {
        out.write_record([
            r.k.to_string(),
            fmt_f64(r.residual_norm),
            fmt_opt(r.radius),
            fmt_f64(r.lambda),
            fmt_f64(r.rho),
            fmt_f64(r.q_ratio),
            r.accepted.to_string(),
            r.chol.to_string(),
            fmt_opt(r.error_to_truth),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_trace`].
pub fn read_trace<R: Read>(r: R) -> Result<Vec<IterationRecord>> {
    let mut input = csv::Reader::from_reader(r);
    let header: Vec<String> = input.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(Error::Io(format!("unexpected trace header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in input.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        out.push(IterationRecord {
            k: parse_usize(field(0))?,
            residual_norm: parse_f64(field(1))?,
            radius: parse_opt(field(2))?,
            lambda: parse_f64(field(3))?,
            rho: parse_f64(field(4))?,
            q_ratio: parse_f64(field(5))?,
            accepted: match field(6) {
                "true" => true,
                "false" => false,
                other => return Err(Error::Io(format!("not a boolean: '{other}'"))),
            },
            chol: parse_usize(field(7))?,
            error_to_truth: parse_opt(field(8))?,
        });
    }
    Ok(out)
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for row in rows {
        out.write_record(row.record())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(r: R) -> Result<Vec<SummaryRow>> {
    let mut input = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in input.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("").to_string();
        rows.push(SummaryRow {
            problem: f(0),
            x0: f(1),
            method: f(2),
            it: parse_usize(&f(3))?,
            resnorm_final: parse_f64(&f(4))?,
            nf: parse_usize(&f(5))?,
            cf: parse_usize(&f(6))?,
            e_i: parse_f64(&f(7))?,
            e_t: parse_f64(&f(8))?,
            status: f(9),
            seed: f(10).parse().map_err(|_| Error::Io(format!("bad seed '{}'", f(10))))?,
            rng_id: f(11),
        });
    }
    Ok(rows)
}

/// The cells of a results table: every guess of every problem, for every method.
pub fn grid_specs(problems: &[ProblemId], methods: &[Method], template: &RunSpec) -> Vec<RunSpec> {
    let mut specs = Vec::with_capacity(problems.len() * 4 * methods.len());
    for &problem in problems {
        for guess in problem.guesses() {
            for &method in methods {
                let mut spec = template.clone();
                spec.problem = problem;
                spec.guess = guess;
                spec.solver.method = method;
                specs.push(spec);
            }
        }
    }
    specs
}

/// Run all cells in parallel. Failed runs stay in the output as `Err`.
pub fn run_grid(specs: &[RunSpec]) -> Vec<Result<RunOutcome>> {
    specs.par_iter().map(run).collect()
}

pub fn summarize(specs: &[RunSpec], outcomes: &[Result<RunOutcome>]) -> Vec<SummaryRow> {
    specs
        .iter()
        .zip(outcomes)
        .map(|(spec, o)| match o {
            Ok(o) => SummaryRow::from_outcome(o),
            Err(_) => SummaryRow::failed(spec),
        })
        .collect()
}

/// Noise level of results tables 1 and 2.
pub fn table_delta(table: u32) -> Result<f64> {
    match table {
        1 => Ok(1e-4),
        2 => Ok(1e-2),
        t => Err(Error::InvalidConfig(format!("table must be 1 or 2, got {t}"))),
    }
}

/// One noise level of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub k_star: usize,
    pub error: f64,
    pub e_i: f64,
    pub e_t: f64,
    pub seed: u64,
    pub rng_id: String,
    pub status: String,
}

pub const SWEEP_HEADER: [&str; 8] = ["delta", "k_star", "error", "e_I", "e_T", "seed", "rng_id", "status"];

/// Solve `template` for each noise level. The problems share the exact
/// data and draw independent noise; `deltas` must be descending.
pub fn run_sweep(template: &RunSpec, deltas: &[f64]) -> Result<Vec<SweepRow>> {
    let problems = noise_sweep(template.problem_spec(), deltas)?;
    let rows = problems
        .into_par_iter()
        .map(|problem| {
            let spec = RunSpec { delta: problem.delta(), ..template.clone() };
            match run_on(&spec, problem) {
                Ok(o) => SweepRow {
                    delta: spec.delta,
                    k_star: o.report.it,
                    error: o.final_error(),
                    e_i: o.e_i(),
                    e_t: o.e_t(),
                    seed: spec.seed,
                    rng_id: RNG_ID.to_string(),
                    status: o.report.status.as_str().to_string(),
                },
                Err(_) => SweepRow {
                    delta: spec.delta,
                    k_star: 0,
                    error: f64::NAN,
                    e_i: f64::NAN,
                    e_t: f64::NAN,
                    seed: spec.seed,
                    rng_id: RNG_ID.to_string(),
                    status: "Error".to_string(),
                },
            }
        })
        .collect();
    Ok(rows)
}

pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record([
            fmt_f64(r.delta),
            r.k_star.to_string(),
            fmt_f64(r.error),
            fmt_f64(r.e_i),
            fmt_f64(r.e_t),
            r.seed.to_string(),
            r.rng_id.clone(),
            r.status.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// q-ratio and error of one accepted iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTraceRow {
    pub k: usize,
    pub q_k: f64,
    pub q: f64,
    pub err: Option<f64>,
}

pub const QTRACE_HEADER: [&str; 4] = ["k", "q_k", "q", "err"];

pub fn qtrace(report: &SolveReport, q: f64) -> Vec<QTraceRow> {
    report.accepted().map(|r| QTraceRow { k: r.k, q_k: r.q_ratio, q, err: r.error_to_truth }).collect()
}

pub fn write_qtrace<W: Write>(w: W, rows: &[QTraceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(QTRACE_HEADER)?;
    for r in rows {
        out.write_record([r.k.to_string(), fmt_f64(r.q_k), fmt_f64(r.q), fmt_opt(r.err)])?;
    }
    out.flush()?;
    Ok(())
}

/// Everything the command-line harness can be told, from defaults, a config
/// file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub problems: Vec<ProblemId>,
    pub x0: Option<String>,
    pub delta: f64,
    pub deltas: Vec<f64>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub n: usize,
    pub noise: NoiseModel,
    pub jacobian: JacobianSource,
    pub table: u32,
    pub solver: SolverConfig,
    pub out: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            problems: ProblemId::ALL.to_vec(),
            x0: None,
            delta: 1e-4,
            deltas: DEFAULT_DELTAS.to_vec(),
            methods: vec![Method::RegularizingTR],
            seed: 1,
            n: DEFAULT_N,
            noise: NoiseModel::default(),
            jacobian: JacobianSource::FiniteDifference,
            table: 1,
            solver: SolverConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

fn parse_list<T>(value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::InvalidConfig(format!("empty list '{value}'")));
    }
    Ok(items)
}

impl Settings {
    /// Apply one `key = value` setting. Keys match the long flag names;
    /// `-` and `_` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = || Error::InvalidConfig(format!("invalid value '{value}' for '{key}'"));
        let real = || value.parse::<f64>().map_err(|_| bad());
        let int = || value.parse::<u64>().map_err(|_| bad());
        match key.trim().replace('_', "-").as_str() {
            "problem" | "problems" => self.problems = parse_list(value, str::parse)?,
            "x0" => self.x0 = Some(value.to_string()),
            "delta" => self.delta = real()?,
            "deltas" => self.deltas = parse_list(value, |s| s.parse().map_err(|_| bad()))?,
            "method" | "methods" => self.methods = parse_list(value, str::parse)?,
            "seed" => self.seed = int()?,
            "n" => self.n = int()? as usize,
            "noise" => self.noise = value.parse()?,
            "jacobian" => {
                self.jacobian = match value {
                    "analytic" => JacobianSource::PreferAnalytic,
                    "fd" | "finite-difference" => JacobianSource::FiniteDifference,
                    _ => return Err(bad()),
                }
            }
            "table" => self.table = int()? as u32,
            "tau" => self.solver.tau = real()?,
            "q" => self.solver.q = Some(real()?),
            "eta" => self.solver.eta = real()?,
            "gamma" => self.solver.gamma = real()?,
            "mu0" => self.solver.mu0 = real()?,
            "nu" => self.solver.nu = real()?,
            "radius-rule" => self.solver.radius_rule = value.parse::<RadiusRule>()?,
            "max-iter" => self.solver.max_iter = int()? as usize,
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::InvalidConfig(format!("unknown setting '{other}'"))),
        }
        Ok(())
    }

    /// Defaults, then the config file, then `env_out` for the output
    /// directory, then `flags`.
    pub fn resolve(config: Option<&str>, env_out: Option<&str>, flags: &[(String, String)]) -> Result<Self> {
        let mut s = Settings::default();
        if let Some(text) = config {
            for (k, v) in parse_config(text)? {
                s.set(&k, &v)?;
            }
        }
        if let Some(dir) = env_out.filter(|d| !d.is_empty()) {
            s.out = PathBuf::from(dir);
        }
        for (k, v) in flags {
            s.set(k, v)?;
        }
        Ok(s)
    }

    /// [`Settings::resolve`] reading the config file from disk and the
    /// output override from [`OUT_ENV`].
    pub fn load(config: Option<&Path>, flags: &[(String, String)]) -> Result<Self> {
        let text = config.map(fs::read_to_string).transpose()?;
        let env = std::env::var(OUT_ENV).ok();
        Self::resolve(text.as_deref(), env.as_deref(), flags)
    }

    fn single_problem(&self) -> Result<ProblemId> {
        match self.problems.as_slice() {
            [p] => Ok(*p),
            _ => Err(Error::InvalidConfig("exactly one problem is required".into())),
        }
    }

    fn single_method(&self) -> Result<Method> {
        match self.methods.as_slice() {
            [m] => Ok(*m),
            _ => Err(Error::InvalidConfig("exactly one method is required".into())),
        }
    }

    fn guess(&self, problem: ProblemId) -> Result<InitialGuess> {
        match &self.x0 {
            Some(sel) => InitialGuess::parse(problem, sel),
            None => Ok(problem.guesses()[0]),
        }
    }

    /// The single run described by these settings.
    pub fn run_spec(&self) -> Result<RunSpec> {
        let problem = self.single_problem()?;
        let spec = RunSpec {
            problem,
            guess: self.guess(problem)?,
            delta: self.delta,
            seed: self.seed,
            n: self.n,
            noise: self.noise,
            jacobian: self.jacobian,
            solver: SolverConfig { method: self.single_method()?, ..self.solver.clone() },
        };
        spec.solver.validate(spec.delta)?;
        Ok(spec)
    }

    fn template(&self, delta: f64) -> Result<RunSpec> {
        let problem = self.problems.first().copied().unwrap_or(ProblemId::P1);
        let spec = RunSpec {
            problem,
            guess: problem.guesses()[0],
            delta,
            seed: self.seed,
            n: self.n,
            noise: self.noise,
            jacobian: self.jacobian,
            solver: self.solver.clone(),
        };
        spec.solver.validate(delta)?;
        Ok(spec)
    }
}

/// Parse a flat config file: one `key = value` per line, `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", i + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn create(dir: &Path, name: &str) -> Result<(fs::File, PathBuf)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    Ok((fs::File::create(&path)?, path))
}

/// Result of `solve`: the run and the files written.
#[derive(Debug)]
pub struct SolveOutput {
    pub outcome: RunOutcome,
    pub row: SummaryRow,
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Single run; writes `trace.csv` and `summary.csv` to the output directory.
pub fn cmd_solve(settings: &Settings) -> Result<SolveOutput> {
    let spec = settings.run_spec()?;
    let outcome = run(&spec)?;
    let row = SummaryRow::from_outcome(&outcome);
    let (f, trace_path) = create(&settings.out, "trace.csv")?;
    write_trace(f, &outcome.report.trace)?;
    let (f, summary_path) = create(&settings.out, "summary.csv")?;
    write_summary(f, std::slice::from_ref(&row))?;
    Ok(SolveOutput { outcome, row, trace_path, summary_path })
}

/// Results-table grid at the noise level of `settings.table`; writes
/// `table<N>.csv`.
pub fn cmd_table(settings: &Settings) -> Result<(Vec<SummaryRow>, PathBuf)> {
    let template = settings.template(table_delta(settings.table)?)?;
    let specs = grid_specs(&settings.problems, &settings.methods, &template);
    let rows = summarize(&specs, &run_grid(&specs));
    let (f, path) = create(&settings.out, &format!("table{}.csv", settings.table))?;
    write_summary(f, &rows)?;
    Ok((rows, path))
}

/// Noise sweep over `settings.deltas`; writes `sweep.csv`.
pub fn cmd_sweep(settings: &Settings) -> Result<(Vec<SweepRow>, PathBuf)> {
    let mut deltas = settings.deltas.clone();
    deltas.sort_by(|a, b| b.total_cmp(a));
    let spec = RunSpec { delta: deltas[0], ..settings.run_spec()? };
    let rows = run_sweep(&spec, &deltas)?;
    let (f, path) = create(&settings.out, "sweep.csv")?;
    write_sweep(f, &rows)?;
    Ok((rows, path))
}

/// q-ratios and errors along a regularizing trust-region run; writes `qtrace.csv`.
pub fn cmd_qtrace(settings: &Settings) -> Result<(Vec<QTraceRow>, RunOutcome, PathBuf)> {
    let spec = settings.run_spec()?;
    if spec.solver.method != Method::RegularizingTR {
        return Err(Error::InvalidConfig("qtrace requires method rtr".into()));
    }
    let outcome = run(&spec)?;
    let rows = qtrace(&outcome.report, spec.solver.q());
    let (f, path) = create(&settings.out, "qtrace.csv")?;
    write_qtrace(f, &rows)?;
    Ok((rows, outcome, path))
}

/// Samples of `x` against the nearer true solution, for plotting.
pub fn solution_profile(problem: &FredholmProblem, x: &DVector<f64>) -> Vec<(f64, f64, f64)> {
    let truth = &problem.true_solutions[problem.nearest_truth(x)];
    problem.nodes.iter().enumerate().map(|(j, &s)| (s, x[j], truth[j])).collect()
}
