//! CSV and JSON artefacts.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! reading a file back reproduces every value bit for bit and identical runs
//! produce identical files.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::model::{BoundaryCondition, FieldState};
use crate::simulator::Trajectory;
use crate::steady::{SteadyMethod, SteadyProfile};

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

/// `x,u_bar,v_bar`.
pub fn write_profile_csv(path: &Path, profile: &SteadyProfile) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", "u_bar", "v_bar"])?;
    for i in 0..profile.len() {
        w.write_record([num(profile.x[i]), num(profile.u_bar[i]), num(profile.v_bar[i])])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `x,u_bar,v_bar` (or any three-column `x,u,v` file) into a profile.
pub fn read_profile_csv(
    path: &Path,
    alpha: f64,
    bc: BoundaryCondition,
) -> Result<SteadyProfile> {
    let (u, v) = read_columns(path)?;
    Ok(SteadyProfile::new(u, v, alpha, bc, SteadyMethod::TimeMarch, f64::NAN))
}

/// Reads an initial state from `x,u,v` columns.
pub fn read_state_csv(path: &Path) -> Result<FieldState> {
    let (u, v) = read_columns(path)?;
    Ok(FieldState::new(0.0, u, v))
}

fn read_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut u = Vec::new();
    let mut v = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 3 {
            return Err(Error::Config(format!(
                "{}: line {}: expected 3 columns x,u,v",
                path.display(),
                line + 2
            )));
        }
        let parse = |k: usize| {
            record[k].trim().parse::<f64>().map_err(|e| {
                Error::Config(format!("{}: line {}: {e}", path.display(), line + 2))
            })
        };
        u.push(parse(1)?);
        v.push(parse(2)?);
    }
    Ok((u, v))
}

/// `t,x,u,v[,a]`, one row per recorded cell.
pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    let with_a = trajectory.records.iter().any(|r| r.a.is_some());
    if with_a {
        w.write_record(["t", "x", "u", "v", "a"])?;
    } else {
        w.write_record(["t", "x", "u", "v"])?;
    }
    for state in &trajectory.records {
        let n = state.len();
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64;
            let mut row = vec![num(state.t), num(x), num(state.u[i]), num(state.v[i])];
            if with_a {
                row.push(state.a.as_ref().map_or(String::new(), |a| num(a[i])));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,mass_u,mass_v,l2_u,l2_v,min_u,min_v,max_u,max_v[,H]`.
pub fn write_diagnostics_csv(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    let with_h = trajectory.diagnostics.iter().any(|d| d.lyapunov.is_some());
    let mut header = vec![
        "t", "mass_u", "mass_v", "l2_u", "l2_v", "min_u", "min_v", "max_u", "max_v",
    ];
    if with_h {
        header.push("H");
    }
    w.write_record(&header)?;
    for d in &trajectory.diagnostics {
        let mut row: Vec<String> = [
            d.t, d.mass_u, d.mass_v, d.l2_u, d.l2_v, d.min_u, d.min_v, d.max_u, d.max_v,
        ]
        .into_iter()
        .map(num)
        .collect();
        if with_h {
            row.push(d.lyapunov.map_or(String::new(), num));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,H,dH_dt_identity,dH_dt_fd,l2_u,l2_v,mass_u,mass_v,min_u,min_v,max_u,max_v,bound_ok`.
pub fn write_lyapunov_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "t",
        "H",
        "dH_dt_identity",
        "dH_dt_fd",
        "l2_u",
        "l2_v",
        "mass_u",
        "mass_v",
        "min_u",
        "min_v",
        "max_u",
        "max_v",
        "bound_ok",
    ])?;
    for r in records {
        let mut row: Vec<String> = [
            r.t,
            r.h,
            r.dh_dt_identity,
            r.dh_dt_fd,
            r.l2_u,
            r.l2_v,
            r.mass_u,
            r.mass_v,
            r.min_u,
            r.min_v,
            r.max_u,
            r.max_v,
        ]
        .into_iter()
        .map(num)
        .collect();
        row.push(r.bound_ok.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns of equal length under the given headers.
pub fn write_columns_csv(path: &Path, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.len() != headers.len() || columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Config("column count or length mismatch".into()));
    }
    let mut w = writer(path)?;
    w.write_record(headers)?;
    for k in 0..rows {
        w.write_record(columns.iter().map(|c| num(c[k])))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}
