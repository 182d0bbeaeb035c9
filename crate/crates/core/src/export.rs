//! Plain-text outputs: trajectory and series CSV files, report and path JSON.
//!
//! Every number in a CSV is written with 17 significant digits and every line
//! ends with a single LF.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::flow::{Clock, FlowTrajectory};
use crate::harnack::{HarnackReport, TheoremId, Verdict};
use crate::pathopt::PathResult;

/// `{:.16e}`: 17 significant digits, exact round trip for f64.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Columns `step,t,min_R,max_R,mass_or_blank,sup_u,inf_u`.
///
/// `t` is physical time. Conjugate runs are listed in τ order and report
/// `u = −ln f` in the last two columns.
pub fn trajectory_csv(traj: &FlowTrajectory) -> String {
    let mut out = String::from("step,t,min_R,max_R,mass_or_blank,sup_u,inf_u\n");
    let conjugate = matches!(traj.clock(), Clock::Backward { .. });
    for k in 0..traj.len() {
        let (sup_u, inf_u) = if traj.has_solution() {
            let field = traj.field(k);
            if conjugate {
                (Some(-field.min().ln()), Some(-field.max().ln()))
            } else {
                (Some(field.max()), Some(field.min()))
            }
        } else {
            (None, None)
        };
        let mass = traj.mass().map(|m| m[k]);
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            traj.step_indices()[k],
            num(traj.physical_time(k)),
            num(traj.min_r()[k]),
            num(traj.max_r()[k]),
            opt_num(mass),
            opt_num(sup_u),
            opt_num(inf_u),
        )
        .expect("write to string");
    }
    out
}

/// Columns `t,sup_quantity,min_R`.
pub fn series_csv(report: &HarnackReport) -> String {
    let mut out = String::from("t,sup_quantity,min_R\n");
    for p in &report.series {
        writeln!(out, "{},{},{}", num(p.t), num(p.sup_quantity), num(p.min_r)).expect("write to string");
    }
    out
}

/// On-disk form of a [`HarnackReport`]; the series lives in a sibling CSV.
#[derive(Debug, Serialize)]
pub struct ReportDocument<'a> {
    pub theorem: TheoremId,
    pub window: [f64; 2],
    pub tolerance: f64,
    pub max_violation: f64,
    pub verdict: Verdict,
    pub fingerprint: &'a str,
    pub series_path: String,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text.as_bytes())?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

/// Writes `<theorem>.json` and `<theorem>_series.csv` into `dir`.
pub fn write_report(dir: &Path, report: &HarnackReport) -> Result<Vec<PathBuf>> {
    let series_name = format!("{}_series.csv", report.theorem);
    let series_path = dir.join(&series_name);
    write_text(&series_path, &series_csv(report))?;
    let json_path = dir.join(format!("{}.json", report.theorem));
    write_json(
        &json_path,
        &ReportDocument {
            theorem: report.theorem,
            window: report.window,
            tolerance: report.tolerance,
            max_violation: report.max_violation,
            verdict: report.verdict,
            fingerprint: &report.fingerprint,
            series_path: series_name,
        },
    )?;
    Ok(vec![json_path, series_path])
}

/// Writes the per-query path results of the integrated inequality.
pub fn write_paths(path: &Path, results: &[PathResult]) -> Result<()> {
    write_json(path, &results)
}

/// One row of a resolution sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub residual_h: Option<f64>,
    pub residual_p: Option<f64>,
    pub mass_drift: Option<f64>,
}

/// `log(a_prev / a) / log(N / N_prev)` when both values are present and positive.
pub fn empirical_order(
    prev: &ConvergenceRow,
    row: &ConvergenceRow,
    pick: fn(&ConvergenceRow) -> Option<f64>,
) -> Option<f64> {
    let (a, b) = (pick(prev)?, pick(row)?);
    if !(a > 0.0 && b > 0.0) {
        return None;
    }
    Some((a / b).ln() / (row.n as f64 / prev.n as f64).ln())
}

/// Columns `N,residual_H,residual_P,mass_drift,order_H,order_P,order_mass`;
/// orders compare each row with the one before and are blank on the first.
pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("N,residual_H,residual_P,mass_drift,order_H,order_P,order_mass\n");
    for (i, row) in rows.iter().enumerate() {
        let orders: [Option<f64>; 3] = match i.checked_sub(1).map(|j| &rows[j]) {
            Some(prev) => [
                empirical_order(prev, row, |r| r.residual_h),
                empirical_order(prev, row, |r| r.residual_p),
                empirical_order(prev, row, |r| r.mass_drift),
            ],
            None => [None; 3],
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.n,
            opt_num(row.residual_h),
            opt_num(row.residual_p),
            opt_num(row.mass_drift),
            opt_num(orders[0]),
            opt_num(orders[1]),
            opt_num(orders[2]),
        )
        .expect("write to string");
    }
    out
}

pub(crate) fn save_text(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

pub(crate) fn save_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_json(path, value)
}
