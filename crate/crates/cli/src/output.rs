//! CSV and JSON emission. Column order and header names are fixed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sqa_core::{FlowTrajectory, Trajectory};

use crate::error::{CliError, Result};

pub const SIM_HEADER: &str = "t,m,E,eps";
pub const FLOW_HEADER: &str = "t,m,E,eps,x,y,C,u,branch_count,residual";

/// Shortest round-trip form, switching to exponent notation for small magnitudes.
pub fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn sim_csv(traj: &Trajectory) -> String {
    let mut s = String::with_capacity(64 * traj.times.len());
    s.push_str(SIM_HEADER);
    s.push('\n');
    for (t, o) in traj.times.iter().zip(&traj.states) {
        writeln!(s, "{},{},{},{}", num(*t), num(o.m), num(o.e), num(o.eps)).unwrap();
    }
    s
}

pub fn flow_csv(traj: &FlowTrajectory) -> String {
    let mut s = String::with_capacity(128 * traj.records.len());
    s.push_str(FLOW_HEADER);
    s.push('\n');
    for r in &traj.records {
        let d = &r.diag;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            num(r.t),
            num(r.m),
            num(r.e),
            num(r.eps),
            opt(d.x),
            opt(d.y),
            opt(d.c),
            opt(d.u),
            d.branch_count.map(|b| b.to_string()).unwrap_or_default(),
            num(d.residual)
        )
        .unwrap();
    }
    s
}

pub fn columns_csv(header: &[String], columns: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    let rows = columns.iter().map(Vec::len).min().unwrap_or(0);
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| num(c[i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    write_text(path, &text)
}

/// Parses a CSV written by this module into its header and numeric columns.
/// Empty cells read as NaN.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{}: empty CSV", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(CliError::ConfigAt {
                path: path.to_path_buf(),
                line: n + 2,
                msg: format!("expected {} cells, got {}", header.len(), cells.len()),
            });
        }
        for (col, cell) in cols.iter_mut().zip(cells) {
            col.push(if cell.is_empty() { f64::NAN } else {
                cell.parse().map_err(|_| CliError::ConfigAt {
                    path: path.to_path_buf(),
                    line: n + 2,
                    msg: format!("bad number '{cell}'"),
                })?
            });
        }
    }
    Ok((header, cols))
}
