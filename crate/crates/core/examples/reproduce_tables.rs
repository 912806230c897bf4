//! Run a full results grid: four problems, four initial guesses each.
//!
//! Table 1 uses delta = 1e-4 and table 2 delta = 1e-2. Starred rows did not
//! stop by the discrepancy principle or ended far from both true solutions.
//!
//! cargo run --release --example reproduce_tables -- [1|2] [seed] [methods]

use regtr::fredholm::{InitialGuess, ProblemId};
use regtr::harness::{grid_specs, run_grid, summarize, table_delta, RunSpec};
use regtr::Method;

fn main() -> regtr::Result<()> {
    let mut args = std::env::args().skip(1);
    let table: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let methods: Vec<Method> = args
        .next()
        .unwrap_or_else(|| "rtr,rlm".into())
        .split(',')
        .map(str::parse)
        .collect::<regtr::Result<_>>()?;

    let delta = table_delta(table)?;
    let template = RunSpec::new(ProblemId::P1, InitialGuess::Constant(0.0), delta, seed, Method::RegularizingTR);
    let specs = grid_specs(&ProblemId::ALL, &methods, &template);
    let rows = summarize(&specs, &run_grid(&specs));

    println!("delta = {delta:e}, seed = {seed}");
    println!("{:<3} {:<15} {:<4} {:>4} {:>9} {:>4} {:>3} {:>9} {:>9}  status", "", "x0", "", "it", "||F||", "nf", "cf", "e_I", "e_T");
    for r in &rows {
        println!(
            "{:<3} {:<15} {:<4} {:>4} {:>9.1e} {:>4} {:>3} {:>9.1e} {:>9.1e}  {}",
            r.problem, r.x0, r.method, r.it, r.resnorm_final, r.nf, r.cf, r.e_i, r.e_t, r.status
        );
    }
    let starred = rows.iter().filter(|r| r.starred()).count();
    println!("{starred} starred of {}", rows.len());
    Ok(())
}
