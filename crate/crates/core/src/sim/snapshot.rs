//! Density snapshots on disk.
//!
//! A snapshot at step `n` is three files in one directory:
//! `rho1_<n>.csv`, `rho2_<n>.csv` (columns `x[,y],density`, one row per cell
//! in flat order) and `meta_<n>.txt` with the grid, time and `β`. Numbers are
//! written in shortest round-trip form, so reading a snapshot back gives the
//! exact state.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::Grid;
use crate::scheme::{DensityField, SimState};

fn name(prefix: &str, step: u64, ext: &str) -> String {
    format!("{prefix}_{step:06}.{ext}")
}

pub fn snapshot_paths(dir: &Path, step: u64) -> [PathBuf; 3] {
    [
        dir.join(name("rho1", step, "csv")),
        dir.join(name("rho2", step, "csv")),
        dir.join(name("meta", step, "txt")),
    ]
}

fn field_csv(field: &DensityField) -> String {
    let g = field.grid();
    let mut out = String::from(if g.dimension() == 1 {
        "x,density\n"
    } else {
        "x,y,density\n"
    });
    for (l, v) in field.values().iter().enumerate() {
        for x in g.center_of(l) {
            let _ = write!(out, "{x},");
        }
        let _ = writeln!(out, "{v}");
    }
    out
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn meta_text(state: &SimState) -> String {
    let g = state.grid();
    format!(
        "step {}\ntime {}\nbeta {}\norigin {}\ncells {}\nsteps {}\n",
        state.step_index,
        state.time,
        state.beta,
        join(g.origin()),
        join(g.cells()),
        join(g.steps()),
    )
}

pub fn write_snapshot(dir: &Path, state: &SimState) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let [p1, p2, pm] = snapshot_paths(dir, state.step_index);
    for (path, text) in [
        (p1, field_csv(&state.rho1)),
        (p2, field_csv(&state.rho2)),
        (pm, meta_text(state)),
    ] {
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn malformed(path: &Path, message: impl Into<String>) -> Error {
    Error::Snapshot {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_list<T: std::str::FromStr>(path: &Path, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| malformed(path, format!("bad {key} entry {t:?}")))
        })
        .collect()
}

fn read_field(path: &Path, grid: &Grid) -> Result<DensityField> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dim = grid.dimension();
    let mut lines = text.lines();
    lines.next().ok_or_else(|| malformed(path, "empty file"))?;
    let mut values = Vec::with_capacity(grid.cell_count());
    for (row, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != dim + 1 {
            return Err(malformed(
                path,
                format!("row {} has {} columns", row + 2, cols.len()),
            ));
        }
        let v: f64 = cols[dim].parse().map_err(|_| {
            malformed(
                path,
                format!("bad density {:?} on row {}", cols[dim], row + 2),
            )
        })?;
        values.push(v);
    }
    if values.len() != grid.cell_count() {
        return Err(malformed(
            path,
            format!("{} rows for {} cells", values.len(), grid.cell_count()),
        ));
    }
    DensityField::from_values(grid, values)
}

pub fn read_snapshot(dir: &Path, step: u64) -> Result<SimState> {
    let [p1, p2, pm] = snapshot_paths(dir, step);
    let meta = fs::read_to_string(&pm).map_err(|e| Error::io(&pm, e))?;
    let get = |key: &str| -> Result<&str> {
        meta.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
            .ok_or_else(|| malformed(&pm, format!("missing {key}")))
    };
    let scalar = |key: &str| -> Result<f64> {
        get(key)?
            .trim()
            .parse()
            .map_err(|_| malformed(&pm, format!("bad {key}")))
    };
    let grid = Grid::new(
        parse_list(&pm, "origin", get("origin")?)?,
        parse_list(&pm, "cells", get("cells")?)?,
        parse_list(&pm, "steps", get("steps")?)?,
    )?;
    let step_index: u64 = get("step")?
        .trim()
        .parse()
        .map_err(|_| malformed(&pm, "bad step"))?;
    let mut state = SimState::new(
        read_field(&p1, &grid)?,
        read_field(&p2, &grid)?,
        scalar("beta")?,
    )?;
    state.time = scalar("time")?;
    state.step_index = step_index;
    Ok(state)
}
