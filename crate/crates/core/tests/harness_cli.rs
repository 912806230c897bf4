use std::fs;
use std::process::Command;

use regtr::fredholm::{InitialGuess, ProblemId};
use regtr::harness::{
    self, grid_specs, read_summary, read_trace, run, run_grid, summarize, write_summary, write_trace, RunSpec, Settings,
};
use regtr::Method;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_regtr"));
    cmd.env_remove(harness::OUT_ENV);
    cmd
}

#[test]
fn trace_csv_round_trips_exactly() {
    for method in [Method::RegularizingTR, Method::RegularizingLM, Method::StandardTR] {
        let spec = RunSpec::new(ProblemId::P1, InitialGuess::Constant(-0.5), 1e-2, 3, method);
        let report = run(&spec).unwrap().report;
        let mut buf = Vec::new();
        write_trace(&mut buf, &report.trace).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), report.trace);
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), report.it + report.rejected + 1);
    }
}

#[test]
fn summary_csv_round_trips() {
    let t = RunSpec::new(ProblemId::P3, InitialGuess::Quadratic(1.25), 1e-2, 1, Method::RegularizingTR);
    let specs = grid_specs(&[ProblemId::P3], &[Method::RegularizingTR], &t);
    let rows = summarize(&specs, &run_grid(&specs));
    let mut buf = Vec::new();
    write_summary(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("problem,x0,method,it,resnorm_final,nf,cf,e_I,e_T,status,seed,rng_id\n"));
    assert_eq!(read_summary(buf.as_slice()).unwrap(), rows);
}

#[test]
fn grid_rows_mirror_reports() {
    let t = RunSpec::new(ProblemId::P1, InitialGuess::Constant(0.0), 1e-2, 1, Method::RegularizingTR);
    let methods = [Method::RegularizingTR, Method::StandardTR];
    let specs = grid_specs(&[ProblemId::P2, ProblemId::P4], &methods, &t);
    let outcomes = run_grid(&specs);
    let rows = summarize(&specs, &outcomes);
    assert_eq!(rows.len(), 2 * 4 * 2);
    for (row, o) in rows.iter().zip(&outcomes) {
        let o = o.as_ref().unwrap();
        assert_eq!(row.it, o.report.it);
        assert_eq!(row.nf, o.report.nf);
        assert_eq!(row.cf, o.report.cf);
        assert_eq!(row.resnorm_final, o.report.residual_norm_final);
        assert_eq!(row.status.trim_end_matches('*'), o.report.status.as_str());
    }
}

#[test]
fn failed_cells_stay_in_the_grid() {
    let mut t = RunSpec::new(ProblemId::P1, InitialGuess::Constant(0.0), 1e-2, 1, Method::RegularizingTR);
    t.solver.tau = 0.5;
    let specs = grid_specs(&[ProblemId::P1], &[Method::RegularizingTR], &t);
    let rows = summarize(&specs, &run_grid(&specs));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.status == "Error*" && r.starred()));
}

#[test]
fn config_file_flags_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "problem = P3\nx0 = alpha=1.5\ndelta = 1e-2\nseed = 4\nout = cfg_out\n").unwrap();
    let s = Settings::load(Some(&cfg), &[("seed".into(), "8".into())]).unwrap();
    assert_eq!(s.problems, vec![ProblemId::P3]);
    assert_eq!(s.seed, 8);
    assert_eq!(s.delta, 1e-2);
    let spec = s.run_spec().unwrap();
    assert_eq!(spec.guess, InitialGuess::Quadratic(1.5));
    assert!(Settings::load(Some(&dir.path().join("missing.cfg")), &[]).is_err());
}

#[test]
fn cli_solve_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let status = bin()
        .args(["solve", "--problem", "P1", "--x0", "0e", "--delta", "1e-4", "--method", "rtr", "--seed", "7", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let trace = read_trace(fs::File::open(out.join("trace.csv")).unwrap()).unwrap();
    let rows = read_summary(fs::File::open(out.join("summary.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!((row.problem.as_str(), row.x0.as_str(), row.method.as_str()), ("P1", "0e", "rtr"));
    assert_eq!(row.status, "DiscrepancyMet");
    assert_eq!(trace.len(), row.nf - 1);
    assert_eq!(trace.iter().filter(|t| t.accepted).count(), row.it);
    assert_eq!(row.seed, 7);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| bin().args(args).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(run(&["solve", "--problem", "P7"]).status.code(), Some(1));
    assert_eq!(run(&["solve", "--problem", "P1", "--x0", "alpha=2"]).status.code(), Some(1));
    assert_eq!(run(&["solve", "--problem", "P1", "--tau", "0.9"]).status.code(), Some(1));
    assert_eq!(run(&["solve", "--problem", "P1", "--method", "xyz"]).status.code(), Some(1));
    assert_eq!(run(&["qtrace", "--problem", "P2", "--method", "rlm"]).status.code(), Some(1));
    assert_eq!(bin().args(["solve", "--no-such-flag"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().output().unwrap().status.code(), Some(1));
    // the iteration cap ends the run without meeting the discrepancy principle
    let capped = run(&["solve", "--problem", "P2", "--x0", "2e", "--max-iter", "3"]);
    assert_eq!(capped.status.code(), Some(2));
    let rows = read_summary(fs::File::open(dir.path().join("summary.csv")).unwrap()).unwrap();
    assert_eq!(rows[0].status, "MaxIterExceeded*");
}

#[test]
fn cli_output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("env");
    let flag_dir = dir.path().join("flag");
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, format!("out = {}\nproblem = P3\ndelta = 1e-2\n", dir.path().join("cfg").display())).unwrap();
    let base = ["solve", "--config", cfg.to_str().unwrap()];
    assert_eq!(bin().args(base).output().unwrap().status.code(), Some(0));
    assert!(dir.path().join("cfg/summary.csv").exists());
    assert_eq!(bin().args(base).env(harness::OUT_ENV, &env_dir).output().unwrap().status.code(), Some(0));
    assert!(env_dir.join("summary.csv").exists());
    let status = bin().args(base).arg("--out").arg(&flag_dir).env(harness::OUT_ENV, &env_dir).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(flag_dir.join("summary.csv").exists());
}

#[test]
fn cli_table_sweep_and_qtrace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = bin().args(["table", "--table", "2", "--problem", "P3,P4", "--method", "rtr,str", "--out"]).arg(d).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows = read_summary(fs::File::open(d.join("table2.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 4 * 2);
    assert_eq!(rows[0].method, "rtr");
    assert_eq!(rows[1].method, "str");

    let out = bin().args(["sweep", "--problem", "P2", "--x0", "0e", "--deltas", "1e-1,1e-2", "--out"]).arg(d).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let sweep = fs::read_to_string(d.join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(lines.next(), Some("delta,k_star,error,e_I,e_T,seed,rng_id,status"));
    assert_eq!(lines.count(), 2);

    let out = bin().args(["qtrace", "--problem", "P2", "--x0", "0e", "--delta", "1e-2", "--out"]).arg(d).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let q = fs::read_to_string(d.join("qtrace.csv")).unwrap();
    let mut lines = q.lines();
    assert_eq!(lines.next(), Some("k,q_k,q,err"));
    for line in lines {
        let q: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((q - 1.1 / 1.5).abs() < 1e-15);
    }
}
