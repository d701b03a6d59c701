//! CSV and JSON writers. Numbers use the shortest decimal that parses back
//! to the same `f64`, so identical runs give byte-identical files.

use std::io::Write;
use std::path::Path;

use crate::solver::Trajectory;
use crate::verify::{ConvergenceTable, ReachableSet, ResidualReport};

/// Shortest round-trip decimal; exponent notation outside `[1e-5, 1e16)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// JSON number, or a string for non-finite values.
pub fn json_num(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::json!(fmt_f64(x))
    }
}

fn writer(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    let n = traj.states.first().map_or(0, |x| x.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (t, x) in traj.grid.iter().zip(&traj.states) {
        let mut row = vec![fmt_f64(*t)];
        row.extend(x.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_residuals(path: &Path, rep: &ResidualReport) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["k", "t", "feasibility", "inclusion", "bound_margin"])?;
    for s in &rep.per_step {
        w.write_record([
            s.k.to_string(),
            fmt_f64(s.t),
            fmt_f64(s.feasibility),
            fmt_f64(s.inclusion),
            fmt_f64(s.bound_margin),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_endpoints(path: &Path, reach: &ReachableSet) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    let n = reach.entries.first().map_or(0, |e| e.x0.len());
    let mut header = vec!["index".to_string()];
    header.extend((1..=n).map(|i| format!("x0_{i}")));
    header.extend((1..=n).map(|i| format!("xT_{i}")));
    w.write_record(&header)?;
    for e in &reach.entries {
        let mut row = vec![e.index.to_string()];
        row.extend(e.x0.iter().chain(&e.endpoint).map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence(path: &Path, table: &ConvergenceTable) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "h", "sup_error", "endpoint_error"])?;
    for r in &table.rows {
        w.write_record([
            r.n.to_string(),
            fmt_f64(r.h),
            fmt_f64(r.sup_error),
            fmt_f64(r.endpoint_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}
