use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regtr::harness::{self, Settings};
use regtr::{Error, Status};

#[derive(Parser)]
#[command(name = "regtr", version, about = "Regularizing trust-region experiments on Fredholm test problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem; writes trace.csv and summary.csv.
    Solve(Flags),
    /// Run a results-table grid; writes table<N>.csv.
    Table {
        /// 1 (delta = 1e-4) or 2 (delta = 1e-2).
        #[arg(long)]
        table: Option<u32>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Final errors over decreasing noise levels; writes sweep.csv.
    Sweep {
        /// Comma-separated noise levels.
        #[arg(long)]
        deltas: Option<String>,
        #[command(flatten)]
        flags: Flags,
    },
    /// q-ratios and errors along a regularizing trust-region run; writes qtrace.csv.
    Qtrace(Flags),
}

#[derive(Args)]
struct Flags {
    /// P1..P4 (comma-separated for `table`).
    #[arg(long)]
    problem: Option<String>,
    /// Initial guess, e.g. 0e, -0.5e, alpha=1.5, beta=1.5,chi=0.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// rtr, rlm or str (comma-separated for `table`).
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// norm, std or variance.
    #[arg(long)]
    noise: Option<String>,
    /// analytic or fd.
    #[arg(long)]
    jacobian: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    mu0: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    /// practical or strict.
    #[arg(long)]
    radius_rule: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    /// Output directory (overrides REGTR_OUT and the config file).
    #[arg(long)]
    out: Option<String>,
    /// Flat key = value file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn pairs(&self) -> Vec<(String, String)> {
        [
            ("problem", &self.problem),
            ("x0", &self.x0),
            ("delta", &self.delta),
            ("method", &self.method),
            ("seed", &self.seed),
            ("n", &self.n),
            ("noise", &self.noise),
            ("jacobian", &self.jacobian),
            ("tau", &self.tau),
            ("q", &self.q),
            ("eta", &self.eta),
            ("gamma", &self.gamma),
            ("mu0", &self.mu0),
            ("nu", &self.nu),
            ("radius-rule", &self.radius_rule),
            ("max-iter", &self.max_iter),
            ("out", &self.out),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect()
    }

    fn settings(&self, extra: &[(&str, &Option<String>)]) -> regtr::Result<Settings> {
        let mut pairs = self.pairs();
        for (k, v) in extra {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        }
        Settings::load(self.config.as_deref(), &pairs)
    }
}

fn usage_error(e: &Error) -> bool {
    matches!(e, Error::InvalidConfig(_) | Error::UnknownProblem(_) | Error::UnknownSelector { .. })
}

fn execute(cmd: Command) -> regtr::Result<u8> {
    match cmd {
        Command::Solve(flags) => {
            let out = harness::cmd_solve(&flags.settings(&[])?)?;
            let r = &out.row;
            println!(
                "{} {} {}: {} it={} ||F||={:.3e} nf={} cf={} e_I={:.3e} e_T={:.3e}",
                r.problem, r.x0, r.method, r.status, r.it, r.resnorm_final, r.nf, r.cf, r.e_i, r.e_t
            );
            println!("wrote {} and {}", out.trace_path.display(), out.summary_path.display());
            Ok(if out.outcome.report.status == Status::DiscrepancyMet { 0 } else { 2 })
        }
        Command::Table { table, flags } => {
            let table = table.map(|t| t.to_string());
            let (rows, path) = harness::cmd_table(&flags.settings(&[("table", &table)])?)?;
            println!("{:<4} {:<16} {:<4} {:>4} {:>10} {:>4} {:>3} {:>10} {:>10}  status", "", "x0", "", "it", "||F||", "nf", "cf", "e_I", "e_T");
            for r in &rows {
                println!(
                    "{:<4} {:<16} {:<4} {:>4} {:>10.2e} {:>4} {:>3} {:>10.2e} {:>10.2e}  {}",
                    r.problem, r.x0, r.method, r.it, r.resnorm_final, r.nf, r.cf, r.e_i, r.e_t, r.status
                );
            }
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Sweep { deltas, flags } => {
            let (rows, path) = harness::cmd_sweep(&flags.settings(&[("deltas", &deltas)])?)?;
            for r in &rows {
                println!("delta={:.1e} k*={} error={:.3e} e_I={:.3e} e_T={:.3e} {}", r.delta, r.k_star, r.error, r.e_i, r.e_t, r.status);
            }
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Qtrace(flags) => {
            let (rows, outcome, path) = harness::cmd_qtrace(&flags.settings(&[])?)?;
            let q = rows.first().map_or(0.0, |r| r.q);
            let met = rows.iter().filter(|r| r.q_k >= q).count();
            println!("q = {q:.4}; q_k >= q at {met} of {} accepted iterations", rows.len());
            println!("wrote {}", path.display());
            Ok(if outcome.report.status == Status::DiscrepancyMet { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if usage_error(&e) { 1 } else { 2 })
        }
    }
}
