//! Convergence reports as CSV: header `iteration,objective,step_norm,cg_iters`.
//!
//! Row 0 holds the objective before the first outer iteration with zero step
//! norm and CG count; row `k` holds outer iteration `k`. Reals are written in
//! shortest round-trip notation, so parsing recovers the histories exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use tvreg::SolveReport;

use crate::error::{CliError, CliResult};

pub const REPORT_HEADER: [&str; 4] = ["iteration", "objective", "step_norm", "cg_iters"];

/// One CSV row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunReportRow {
    pub iteration: usize,
    pub objective: f64,
    pub step_norm: f64,
    pub cg_iters: usize,
}

/// Histories recovered from a report file.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportHistory {
    pub initial_objective: f64,
    pub objective_history: Vec<f64>,
    pub step_norm_history: Vec<f64>,
    pub cg_iterations: Vec<usize>,
}

impl ReportHistory {
    pub fn matches(&self, r: &SolveReport) -> bool {
        self.initial_objective.to_bits() == r.initial_objective.to_bits()
            && bits(&self.objective_history) == bits(&r.objective_history)
            && bits(&self.step_norm_history) == bits(&r.step_norm_history)
            && self.cg_iterations == r.cg_iterations
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub fn report_rows(r: &SolveReport) -> Vec<RunReportRow> {
    let mut rows = vec![RunReportRow { iteration: 0, objective: r.initial_objective, step_norm: 0.0, cg_iters: 0 }];
    for k in 0..r.objective_history.len() {
        rows.push(RunReportRow {
            iteration: k + 1,
            objective: r.objective_history[k],
            step_norm: r.step_norm_history[k],
            cg_iters: r.cg_iterations[k],
        });
    }
    rows
}

pub fn write_report_to<W: Write>(out: W, r: &SolveReport) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for row in report_rows(r) {
        w.write_record([
            row.iteration.to_string(),
            row.objective.to_string(),
            row.step_norm.to_string(),
            row.cg_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(path: &Path, r: &SolveReport) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_report_to(file, r).map_err(|e| CliError::Format { path: path.to_path_buf(), message: e.to_string() })
}

pub fn parse_report<R: Read>(input: R) -> Result<ReportHistory, String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let field = |k: usize| rec.get(k).ok_or_else(|| format!("row has {} fields", rec.len()));
        let parse_f = |k: usize| field(k)?.parse::<f64>().map_err(|e| format!("{}: {e}", REPORT_HEADER[k]));
        let parse_u = |k: usize| field(k)?.parse::<usize>().map_err(|e| format!("{}: {e}", REPORT_HEADER[k]));
        rows.push(RunReportRow { iteration: parse_u(0)?, objective: parse_f(1)?, step_norm: parse_f(2)?, cg_iters: parse_u(3)? });
    }
    let first = rows.first().ok_or("report has no rows")?;
    if first.iteration != 0 {
        return Err("first row must be iteration 0".into());
    }
    for (k, row) in rows.iter().enumerate() {
        if row.iteration != k {
            return Err(format!("iteration {} out of sequence at row {}", row.iteration, k + 1));
        }
    }
    Ok(ReportHistory {
        initial_objective: first.objective,
        objective_history: rows[1..].iter().map(|r| r.objective).collect(),
        step_norm_history: rows[1..].iter().map(|r| r.step_norm).collect(),
        cg_iterations: rows[1..].iter().map(|r| r.cg_iters).collect(),
    })
}

pub fn read_report(path: &Path) -> CliResult<ReportHistory> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_report(file).map_err(|message| CliError::Format { path: path.to_path_buf(), message })
}
