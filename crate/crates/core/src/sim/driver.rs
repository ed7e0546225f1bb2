//! Running a configured scenario.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use crate::diagnostics::{assert_invariants, csv_header, record, DiagnosticsRecord, Tolerances};
use crate::error::{Error, Result};
use crate::init::discretize;
use crate::scheme::{resolve_dt, run, DensityField, RunOptions, SimState};
use crate::sim::config::{InvariantPolicy, SimConfig, SpeciesInit};
use crate::sim::snapshot::write_snapshot;
use crate::velocity::{InteractionModel, Velocities};

pub fn build_model(config: &SimConfig) -> Result<InteractionModel> {
    InteractionModel::new(
        &config.grid,
        config.w1,
        config.w2,
        config.k,
        config.velocity_path,
        config.weighting,
    )
}

fn species_field(config: &SimConfig, init: &SpeciesInit) -> Result<DensityField> {
    match &init.measure {
        Some(m) => discretize(&config.grid, m, init.normalize),
        None => Ok(DensityField::zeros(&config.grid)),
    }
}

pub fn initial_state(config: &SimConfig) -> Result<SimState> {
    SimState::new(
        species_field(config, &config.species1)?,
        species_field(config, &config.species2)?,
        config.beta,
    )
}

/// Final state of a run together with the time step it used.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub dt: f64,
    pub state: SimState,
}

/// Runs `config` to its final time without writing anything.
pub fn simulate(config: &SimConfig) -> Result<Outcome> {
    let model = build_model(config)?;
    let initial = initial_state(config)?;
    let dt = resolve_dt(&model, &initial, config.dt_policy, true)?;
    let options = RunOptions {
        observe_every: u64::MAX,
        guard: true,
    };
    let mut ignore = |_: &SimState, _: &Velocities| Ok(());
    let state = run(
        &model,
        initial,
        config.t_final,
        config.dt_policy,
        options,
        &mut ignore,
    )?;
    Ok(Outcome { dt, state })
}

#[derive(Debug, Clone, Default)]
pub struct ExecuteOptions {
    /// Overrides the configured output directory.
    pub out_dir: Option<PathBuf>,
    pub snapshot_every: Option<u64>,
    pub fatal_invariants: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub dt: f64,
    pub state: SimState,
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<u64>,
    /// Invariant failures seen under the warn policy.
    pub invariant_failures: Vec<String>,
    pub boundary_notes: usize,
}

/// Runs `config`, writing `diagnostics.csv`, snapshots and `meta.txt` to the
/// output directory and checking the invariants between consecutive records.
pub fn execute(config: &SimConfig, options: &ExecuteOptions) -> Result<RunSummary> {
    let out_dir = options
        .out_dir
        .clone()
        .unwrap_or_else(|| config.output.dir.clone());
    let snap_dir = out_dir.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    let snapshot_every = options
        .snapshot_every
        .unwrap_or(config.output.snapshot_every)
        .max(1);
    let diag_every = config.output.diagnostics_every.max(1);
    let fatal = options.fatal_invariants || config.output.invariants == InvariantPolicy::Fatal;

    let model = build_model(config)?;
    let initial = initial_state(config)?;
    let dt = resolve_dt(&model, &initial, config.dt_policy, true)?;
    let t_final = config.t_final;

    let mut records: Vec<DiagnosticsRecord> = Vec::new();
    let mut snapshots = Vec::new();
    let mut failures = Vec::new();
    let mut notes = 0;
    let mut observer = |state: &SimState, velocities: &Velocities| -> Result<()> {
        let last = state.time >= t_final;
        let n = state.step_index;
        if n.is_multiple_of(snapshot_every) || last {
            write_snapshot(&snap_dir, state)?;
            snapshots.push(n);
        }
        if n.is_multiple_of(diag_every) || last {
            let rec = record(&model, state, velocities);
            if let Some(prev) = records.last() {
                let report = assert_invariants(prev, &rec, Tolerances::default());
                notes += report.notes().count();
                for f in report.failures() {
                    let msg = format!("step {n}: {}: {}", f.name, f.detail);
                    if fatal {
                        return Err(Error::InvariantFailure(msg));
                    }
                    log::warn!("{msg}");
                    failures.push(msg);
                }
            }
            records.push(rec);
        }
        Ok(())
    };
    let options = RunOptions {
        observe_every: 1,
        guard: true,
    };
    let state = run(
        &model,
        initial,
        t_final,
        config.dt_policy,
        options,
        &mut observer,
    )?;

    let dim = config.grid.dimension();
    let mut csv = csv_header(dim);
    csv.push('\n');
    for r in &records {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let diag_path = out_dir.join("diagnostics.csv");
    fs::write(&diag_path, csv).map_err(|e| Error::io(&diag_path, e))?;

    let summary = RunSummary {
        out_dir: out_dir.clone(),
        dt,
        state,
        records,
        snapshots,
        invariant_failures: failures,
        boundary_notes: notes,
    };
    let meta_path = out_dir.join("meta.txt");
    fs::write(&meta_path, meta_text(config, &model, &summary))
        .map_err(|e| Error::io(&meta_path, e))?;
    Ok(summary)
}

fn meta_text(config: &SimConfig, model: &InteractionModel, s: &RunSummary) -> String {
    let b = model.bounds();
    let mut out = String::new();
    let _ = writeln!(out, "cells {:?}", config.grid.cells());
    let _ = writeln!(out, "steps {:?}", config.grid.steps());
    let _ = writeln!(out, "w1 {} {}", config.w1.kind, config.w1.scale);
    let _ = writeln!(out, "w2 {} {}", config.w2.kind, config.w2.scale);
    let _ = writeln!(out, "k {} {}", config.k.kind, config.k.scale);
    let _ = writeln!(out, "beta {}", config.beta);
    let _ = writeln!(
        out,
        "omega1 {}\nomega2 {}\nkappa {}",
        b.omega1, b.omega2, b.kappa
    );
    let _ = writeln!(out, "dt {}", s.dt);
    let _ = writeln!(out, "final_time {}", s.state.time);
    let _ = writeln!(out, "steps_taken {}", s.state.step_index);
    let _ = writeln!(out, "snapshots {}", s.snapshots.len());
    let _ = writeln!(out, "invariant_failures {}", s.invariant_failures.len());
    let _ = writeln!(out, "boundary_notes {}", s.boundary_notes);
    out
}
