//! CSV and JSON export/import. Floats are written in shortest round-trip
//! form, so reading a file back reproduces the values exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::bayes::Trajectory;
use crate::concurrence::HistogramGrid;
use crate::ensemble::TimeToMax;
use crate::error::{Error, Result};
use crate::model::{XState, INTEGRATION_TOL};

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn state_fields(x: &XState) -> impl Iterator<Item = String> {
    x.as_array().into_iter().map(num)
}

/// Trajectories as `t,v,x1..x5,C` rows, optionally prefixed by `traj_id`.
/// Row k's `v` is the readout over [t_k, t_{k+1}); the last row leaves it empty.
pub fn write_trajectories_csv(path: &Path, trajs: &[Trajectory], with_id: bool) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t", "v", "x1", "x2", "x3", "x4", "x5", "C"];
    if with_id {
        header.insert(0, "traj_id");
    }
    w.write_record(&header)?;
    for (id, tr) in trajs.iter().enumerate() {
        for k in 0..tr.len() {
            let mut row = Vec::with_capacity(9);
            if with_id {
                row.push(id.to_string());
            }
            row.push(num(tr.times[k]));
            row.push(tr.readouts.get(k).map_or(String::new(), |v| num(*v)));
            row.extend(state_fields(&tr.states[k]));
            row.push(num(tr.concurrences[k]));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, line: u64, col: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| {
        Error::InvalidArgument(format!("line {line}: column '{col}' holds '{s}', not a number"))
    })
}

/// Reads the trajectory CSV format; rows are grouped by `traj_id` when that
/// column is present. The `C` column is recomputed, not trusted.
pub fn read_trajectories_csv(path: &Path) -> Result<Vec<Trajectory>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| {
            Error::InvalidArgument(format!("{}: missing column '{name}'", path.display()))
        })
    };
    let ci = [need("t")?, need("v")?, need("x1")?, need("x2")?, need("x3")?, need("x4")?, need("x5")?];
    let id_col = col("traj_id");
    let mut groups: BTreeMap<u64, (Vec<f64>, Vec<Option<f64>>, Vec<XState>)> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(k).unwrap_or("");
        let id = match id_col {
            Some(c) => field(c).trim().parse::<u64>().map_err(|_| {
                Error::InvalidArgument(format!("line {line}: bad traj_id '{}'", field(c)))
            })?,
            None => 0,
        };
        let t = parse_f64(field(ci[0]), line, "t")?;
        let v = if field(ci[1]).trim().is_empty() {
            None
        } else {
            Some(parse_f64(field(ci[1]), line, "v")?)
        };
        let mut x = [0.0; 5];
        for (j, name) in ["x1", "x2", "x3", "x4", "x5"].iter().enumerate() {
            x[j] = parse_f64(field(ci[2 + j]), line, name)?;
        }
        let state = XState::with_tolerance([x[0], x[1], x[2], x[3]], x[4], INTEGRATION_TOL)
            .map_err(|e| Error::InvalidArgument(format!("line {line}: {e}")))?;
        let g = groups.entry(id).or_default();
        g.0.push(t);
        g.1.push(v);
        g.2.push(state);
    }
    groups
        .into_iter()
        .map(|(id, (times, vs, states))| {
            let n = times.len();
            let readouts: Vec<f64> = vs
                .iter()
                .take(n.saturating_sub(1))
                .map(|v| {
                    v.ok_or_else(|| {
                        Error::InvalidArgument(format!("trajectory {id}: missing readout"))
                    })
                })
                .collect::<Result<_>>()?;
            Trajectory::new(times, readouts, states)
        })
        .collect()
}

/// A state path as `t,x1..x5,C`.
pub fn write_path_csv(path: &Path, times: &[f64], states: &[XState], conc: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "x1", "x2", "x3", "x4", "x5", "C"])?;
    for k in 0..times.len() {
        let mut row = vec![num(times[k])];
        row.extend(state_fields(&states[k]));
        row.push(num(conc[k]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Labelled paths as `branch,t,x1..x5,C`.
pub fn write_branch_paths_csv(path: &Path, paths: &[(String, &Trajectory)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["branch", "t", "x1", "x2", "x3", "x4", "x5", "C"])?;
    for (label, tr) in paths {
        for k in 0..tr.len() {
            let mut row = vec![label.clone(), num(tr.times[k])];
            row.extend(state_fields(&tr.states[k]));
            row.push(num(tr.concurrences[k]));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Two-column numeric table with the given header.
pub fn write_pairs_csv(path: &Path, header: [&str; 2], rows: &[(f64, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for (a, b) in rows {
        w.write_record([num(*a), num(*b)])?;
    }
    w.flush()?;
    Ok(())
}

/// Histogram grid as `t,c_bin,mass`, with `c_bin` the left edge of the bin.
pub fn write_grid_csv(path: &Path, grid: &HistogramGrid) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "c_bin", "mass"])?;
    for (t, row) in grid.times.iter().zip(&grid.mass) {
        for (j, m) in row.iter().enumerate() {
            w.write_record([num(*t), num(j as f64 * grid.bin), num(*m)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Time-to-max histogram as `t_bin,mass`, with `t_bin` the left edge.
pub fn write_time_to_max_csv(path: &Path, h: &TimeToMax) -> Result<()> {
    let rows: Vec<(f64, f64)> = h.edges.iter().cloned().zip(h.mass.iter().cloned()).collect();
    write_pairs_csv(path, ["t_bin", "mass"], &rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
