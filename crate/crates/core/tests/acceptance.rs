//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nonlocal_fv::convergence::refinement_study;
use nonlocal_fv::diagnostics::{
    assert_invariants, record, CheckStatus, DiagnosticsRecord, Tolerances,
};
use nonlocal_fv::init::{discretize, InitialMeasure};
use nonlocal_fv::scheme::{cfl_max_dt, run, DtPolicy, RunOptions};
use nonlocal_fv::sim::config::SimConfig;
use nonlocal_fv::sim::driver::{build_model, execute, ExecuteOptions};
use nonlocal_fv::sim::scenario;
use nonlocal_fv::velocity::{
    compute_velocities_direct, InteractionModel, SpectralKernels, Velocities, VelocityPath,
    Weighting,
};
use nonlocal_fv::{DensityField, Error, Grid, Potential, PotentialKind, SimState};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn random_potential(rng: &mut StdRng, allow_zero: bool) -> Potential {
    let kinds = [
        PotentialKind::Newtonian,
        PotentialKind::Exponential,
        PotentialKind::FlyAndRegroup,
        PotentialKind::Zero,
    ];
    let kind = kinds[rng.gen_range(0..if allow_zero { 4 } else { 3 })];
    Potential::new(kind, rng.gen_range(0.1..2.0)).unwrap()
}

fn random_grid(rng: &mut StdRng, max_2d: usize, max_1d: usize) -> Grid {
    if rng.gen_bool(0.5) {
        let n = rng.gen_range(16..=max_1d);
        Grid::line(-1.0, 2.0 / n as f64, n).unwrap()
    } else {
        let nx = rng.gen_range(8..=max_2d);
        let ny = rng.gen_range(8..=max_2d);
        Grid::from_extent(
            vec![-1.0, -0.5],
            vec![2.0, rng.gen_range(0.5..2.0)],
            vec![nx, ny],
        )
        .unwrap()
    }
}

/// Random nonnegative data on a random interior sub-box, with some empty
/// cells, normalized to unit mass.
fn random_field(rng: &mut StdRng, grid: &Grid) -> DensityField {
    let cells = grid.cells();
    let bounds: Vec<(usize, usize)> = cells
        .iter()
        .map(|&n| {
            let lo = rng.gen_range(n / 4..n / 2);
            let hi = rng.gen_range(n / 2..(3 * n) / 4).max(lo);
            (lo, hi)
        })
        .collect();
    let sparsity = rng.gen_range(0.0..0.5);
    let mut values = vec![0.0; grid.cell_count()];
    for (l, v) in values.iter_mut().enumerate() {
        let inside = grid
            .multi_index(l)
            .iter()
            .zip(&bounds)
            .all(|(&j, &(lo, hi))| lo <= j && j <= hi);
        if inside && !rng.gen_bool(sparsity) {
            *v = rng.gen_range(0.0..1.0);
        }
    }
    let mut field = DensityField::from_values(grid, values).unwrap();
    if field.sum() == 0.0 {
        let l = grid
            .linear_index(&bounds.iter().map(|b| b.0).collect::<Vec<_>>())
            .unwrap();
        field.values_mut()[l] = 1.0;
    }
    let mass = field.mass();
    let scaled = field.values().iter().map(|v| v / mass).collect();
    field.with_values(scaled).unwrap()
}

fn random_model(rng: &mut StdRng, grid: &Grid) -> InteractionModel {
    InteractionModel::new(
        grid,
        random_potential(rng, false),
        random_potential(rng, true),
        random_potential(rng, true),
        VelocityPath::Direct,
        Weighting::Volume,
    )
    .unwrap()
}

fn run_steps(
    model: &InteractionModel,
    state: SimState,
    dt: f64,
    steps: u64,
    guard: bool,
    mut observe: impl FnMut(&SimState, &Velocities),
) -> nonlocal_fv::Result<SimState> {
    let t_final = state.time + dt * steps as f64;
    let mut obs = |s: &SimState, v: &Velocities| {
        observe(s, v);
        Ok(())
    };
    run(
        model,
        state,
        t_final,
        DtPolicy::Fixed(dt),
        RunOptions {
            observe_every: 1,
            guard,
        },
        &mut obs,
    )
}

fn criterion_1() -> Verdict {
    let mut rng = StdRng::seed_from_u64(1);
    let configs = 60;
    let steps = 200;
    let (mut checked, mut literal_checked, mut noted) = (0usize, 0usize, 0usize);
    let (mut worst_mass, mut worst_moment, mut worst_literal) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..configs {
        let grid = random_grid(&mut rng, 64, 256);
        let model = random_model(&mut rng, &grid);
        let beta = if rng.gen_bool(0.2) {
            0.0
        } else {
            rng.gen_range(0.0..1.0)
        };
        let state = SimState::new(
            random_field(&mut rng, &grid),
            random_field(&mut rng, &grid),
            beta,
        )
        .unwrap();
        let theta = rng.gen_range(0.2..=1.0);
        let dt = theta * model.max_stable_dt(&state);
        let literal_conserved = model.k.kind == PotentialKind::Zero || beta == 0.0;

        let mut records: Vec<DiagnosticsRecord> = Vec::new();
        let result = run_steps(&model, state, dt, steps, true, |s, v| {
            records.push(record(&model, s, v))
        });
        if let Err(e) = result {
            return Err(format!("case {case}: run failed: {e}"));
        }
        if records.len() < steps as usize {
            return Err(format!("case {case}: only {} records", records.len()));
        }
        for pair in records.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            let report = assert_invariants(prev, next, Tolerances::default());
            if let Some(f) = report.failures().next() {
                return Err(format!(
                    "case {case} step {}: {}: {}",
                    next.step, f.name, f.detail
                ));
            }
            if report
                .checks
                .iter()
                .any(|c| c.name == "moment" && c.status == CheckStatus::Pass)
            {
                checked += 1;
                for (a, b) in [(prev.mass1, next.mass1), (prev.mass2, next.mass2)] {
                    worst_mass = worst_mass.max((a - b).abs() / a);
                }
                for (a, b) in prev.conserved_moment.iter().zip(&next.conserved_moment) {
                    worst_moment = worst_moment.max((a - b).abs());
                }
                if literal_conserved {
                    literal_checked += 1;
                    for (a, b) in prev.weighted_com.iter().zip(&next.weighted_com) {
                        let d = (a - b).abs();
                        worst_literal = worst_literal.max(d);
                        if d > 1e-10 {
                            return Err(format!(
                                "case {case} step {}: weighted center drifted by {d:e}",
                                next.step
                            ));
                        }
                    }
                }
            } else {
                noted += 1;
            }
        }
    }
    if checked < configs * steps as usize / 4 {
        return Err(format!("only {checked} steps had an interior support"));
    }
    Ok(format!(
        "{configs} configs x {steps} steps; {checked} interior steps checked ({literal_checked} also for (beta rho1 + rho2)), \
         {noted} boundary steps; worst mass drift {worst_mass:.1e} rel, moment drift {worst_moment:.1e}, \
         weighted center drift {worst_literal:.1e}; no negative cells, speeds within bounds"
    ))
}

fn criterion_2() -> Verdict {
    let text = scenario("test1").unwrap();
    let config = SimConfig::parse(text).unwrap();
    let budget = config.cfl_budget().unwrap();
    let bad = text.replace("dt = 0.005", &format!("dt = {}", 5.0 * budget));
    match SimConfig::parse(&bad) {
        Err(Error::Config { .. }) => {}
        other => return Err(format!("config with 5x dt was accepted: {other:?}")),
    }
    let model = build_model(&config).map_err(|e| e.to_string())?;
    let state = nonlocal_fv::sim::driver::initial_state(&config).unwrap();
    match run_steps(&model, state, 5.0 * budget, 10, true, |_, _| {}) {
        Err(Error::CflViolation { .. }) => {}
        other => {
            return Err(format!(
                "driver ran with 5x dt: {:?}",
                other.map(|s| s.step_index)
            ))
        }
    }

    let mut rng = StdRng::seed_from_u64(2);
    let cases = 20;
    let mut negative = 0;
    let mut first = None;
    for _ in 0..cases {
        let grid = random_grid(&mut rng, 32, 128);
        let model = InteractionModel::new(
            &grid,
            random_potential(&mut rng, false),
            random_potential(&mut rng, false),
            random_potential(&mut rng, false),
            VelocityPath::Direct,
            Weighting::Volume,
        )
        .unwrap();
        let beta = rng.gen_range(0.0..1.0);
        let state = SimState::new(
            random_field(&mut rng, &grid),
            random_field(&mut rng, &grid),
            beta,
        )
        .unwrap();
        let b = model.bounds();
        let dt = 5.0 * cfl_max_dt(&grid, b.omega1, b.omega2, b.kappa);
        if let Err(Error::NumericalIntegrity { step, .. }) =
            run_steps(&model, state, dt, 500, false, |_, _| {})
        {
            negative += 1;
            first.get_or_insert(step);
        }
    }
    if negative == 0 {
        return Err(format!("no negative cell in {cases} unguarded cases"));
    }
    Ok(format!(
        "5x dt refused by config and driver; unguarded: {negative}/{cases} cases went negative (first at step {})",
        first.unwrap()
    ))
}

fn criterion_3() -> Verdict {
    let mut cases = 0;
    for grid in [
        Grid::line(-1.0, 0.05, 40).unwrap(),
        Grid::from_extent(vec![-0.5, -0.5], vec![1.0, 1.0], vec![24, 20]).unwrap(),
    ] {
        for w1 in [
            Potential::newtonian(1.0),
            Potential::exponential(2.0),
            Potential::fly_and_regroup(1.5),
        ] {
            let location = vec![0.13; grid.dimension()];
            let rho1 = discretize(&grid, &InitialMeasure::dirac(location, 1.0), true).unwrap();
            let initial = SimState::new(rho1, DensityField::zeros(&grid), 0.4).unwrap();
            let model = InteractionModel::new(
                &grid,
                w1,
                Potential::newtonian(1.0),
                Potential::newtonian(1.0),
                VelocityPath::Direct,
                Weighting::Volume,
            )
            .unwrap();
            let dt = model.max_stable_dt(&initial);
            let last = run_steps(&model, initial.clone(), dt, 1000, true, |_, _| {})
                .map_err(|e| e.to_string())?;
            if last.step_index != 1000 {
                return Err(format!("ran {} steps", last.step_index));
            }
            let same = last
                .rho1
                .values()
                .iter()
                .zip(initial.rho1.values())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same || last.rho2.values().iter().any(|&v| v != 0.0) {
                return Err(format!(
                    "Dirac moved under {:?} on {:?}",
                    w1.kind,
                    grid.cells()
                ));
            }
            cases += 1;
        }
    }
    Ok(format!(
        "{cases} Diracs (1D/2D, three attractive kinds) bit-identical after 1000 steps"
    ))
}

fn support_cells(field: &DensityField, threshold: f64) -> Vec<usize> {
    let vol = field.grid().cell_volume();
    field
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v * vol >= threshold)
        .map(|(j, _)| j)
        .collect()
}

fn criterion_4() -> Verdict {
    let mut config = SimConfig::parse(scenario("two_dirac_1d").unwrap()).unwrap();
    config.grid = config.grid.refined(2).map_err(|e| e.to_string())?;
    let dx = config.grid.max_step();
    config.t_final = 1.0 + 5.0 * dx;
    let model = build_model(&config).unwrap();
    let initial = nonlocal_fv::sim::driver::initial_state(&config).unwrap();
    let mut widths = Vec::new();
    let mut worst_com = 0.0f64;
    let mut obs = |s: &SimState, v: &Velocities| {
        let r = record(&model, s, v);
        worst_com = worst_com.max(r.com1[0].abs());
        let cells = support_cells(&s.rho1, 1e-8);
        widths.push((cells.last().unwrap() - cells.first().unwrap()) as f64 * dx);
        Ok(())
    };
    let last = run(
        &model,
        initial,
        config.t_final,
        config.dt_policy,
        RunOptions::default(),
        &mut obs,
    )
    .map_err(|e| e.to_string())?;
    if worst_com > 1e-10 {
        return Err(format!("center of mass left 0 by {worst_com:e}"));
    }
    if widths.windows(2).any(|w| w[1] > w[0]) || widths.last() >= widths.first() {
        return Err(format!(
            "support width did not decrease: {:?} -> {:?}",
            widths.first(),
            widths.last()
        ));
    }
    let cells = support_cells(&last.rho1, 1e-8);
    if cells.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(format!(
            "support still split at t = {}: cells {cells:?}",
            last.time
        ));
    }
    Ok(format!(
        "N = {}, |com| <= {worst_com:.1e}, width {:.3} -> {:.3}, single component of {} cells at t = {:.4}",
        config.grid.cells()[0],
        widths[0],
        widths.last().unwrap(),
        cells.len(),
        last.time
    ))
}

fn criterion_5() -> Verdict {
    let mut rng = StdRng::seed_from_u64(5);
    let grids: Vec<Grid> = [16, 32, 64]
        .iter()
        .map(|&n| Grid::from_extent(vec![-1.0, -1.0], vec![2.0, 2.0], vec![n, n]).unwrap())
        .chain(
            [64, 256, 1024]
                .iter()
                .map(|&n| Grid::line(-1.0, 2.0 / n as f64, n).unwrap()),
        )
        .collect();
    let mut worst = 0.0f64;
    let mut states = 0;
    for grid in &grids {
        for batch in 0..10 {
            let model = random_model(&mut rng, grid);
            let spectral = SpectralKernels::new(grid, model.kernels());
            for _ in 0..10 {
                let beta = rng.gen_range(0.0..1.0);
                let (r1, r2) = (random_field(&mut rng, grid), random_field(&mut rng, grid));
                let w = model.weight();
                let direct = compute_velocities_direct(&r1, &r2, model.kernels(), beta, w).unwrap();
                let fast = spectral.velocities(&r1, &r2, beta, w).unwrap();
                let diff = direct.max_abs_diff(&fast);
                if diff > 1e-10 {
                    return Err(format!(
                        "grid {:?} batch {batch}: paths differ by {diff:e}",
                        grid.cells()
                    ));
                }
                worst = worst.max(diff);
                states += 1;
            }
        }
    }
    Ok(format!(
        "{states} states on 16^2..64^2 and 1D 64..1024, max difference {worst:.1e}"
    ))
}

fn criterion_6() -> Verdict {
    let config = SimConfig::parse(scenario("two_dirac_1d").unwrap()).unwrap();
    let report = refinement_study(&config, 4).map_err(|e| e.to_string())?;
    let d = report.distances(1);
    let cells: Vec<usize> = report.rows.iter().map(|r| r.cells).collect();
    if d.len() != 3 {
        return Err(format!("expected 3 distances, got {d:?}"));
    }
    if d.windows(2).any(|w| w[1] >= w[0]) {
        return Err(format!("distances not strictly decreasing: {d:?}"));
    }
    let ratio = d[0] / d[2];
    let orders: Vec<String> = report
        .rows
        .iter()
        .filter_map(|r| r.observed_order)
        .map(|o| format!("{o:.2}"))
        .collect();
    let detail = format!(
        "W1 between levels {cells:?}/2x: {:.3e}, {:.3e}, {:.3e}; ratio {ratio:.2}; orders {}",
        d[0],
        d[1],
        d[2],
        orders.join(", ")
    );
    if ratio >= 4.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (j, &x)| if x > v[best] { j } else { best })
}

fn criterion_7(out: &Path) -> Verdict {
    let config = SimConfig::parse(scenario("test1").unwrap()).unwrap();
    let options = ExecuteOptions {
        out_dir: Some(out.to_path_buf()),
        ..Default::default()
    };
    let summary = execute(&config, &options).map_err(|e| e.to_string())?;
    let distance = |r: &DiagnosticsRecord| {
        ((r.com1[0] - r.com2[0]).powi(2) + (r.com1[1] - r.com2[1]).powi(2)).sqrt()
    };

    let early: Vec<f64> = summary
        .records
        .iter()
        .filter(|r| r.time <= 0.5 + 1e-9)
        .map(distance)
        .collect();
    if early.windows(2).any(|w| w[1] >= w[0]) || early.last().unwrap() * 2.0 > early[0] {
        return Err(format!(
            "(a) predator-prey distance not decreasing over t <= 0.5: {:.3} -> {:.3}",
            early[0],
            early.last().unwrap()
        ));
    }

    let state = &summary.state;
    let grid = state.grid();
    let predator = argmax(state.rho1.values());
    let p = grid.center_of(predator);
    let r2 = state.rho2.values();
    let max2 = r2.iter().cloned().fold(0.0, f64::max);
    let at_predator = r2[predator] / max2;
    let initial_mass = summary.records[0].mass2;
    let (r_in, r_out) = (0.05, 0.3);
    let ring = r2
        .iter()
        .enumerate()
        .filter(|(l, _)| {
            let c = grid.center_of(*l);
            let r = ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2)).sqrt();
            (r_in..=r_out).contains(&r)
        })
        .map(|(_, v)| v * grid.cell_volume())
        .sum::<f64>()
        / initial_mass;
    let detail = format!(
        "(a) distance {:.3} -> {:.3} over t <= 0.5; (b) at t = {}: rho2 at predator ({:.2}, {:.2}) = {:.1}% of max, \
         {:.1}% of prey mass in {r_in} <= r <= {r_out}",
        early[0],
        early.last().unwrap(),
        state.time,
        p[0],
        p[1],
        100.0 * at_predator,
        100.0 * ring
    );
    if at_predator < 0.1 && ring > 0.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8(out: &Path) -> Verdict {
    let config = SimConfig::parse(scenario("test2").unwrap()).unwrap();
    let options = ExecuteOptions {
        out_dir: Some(out.to_path_buf()),
        snapshot_every: Some(1000),
        ..Default::default()
    };
    let summary = execute(&config, &options).map_err(|e| e.to_string())?;
    let moments: Vec<f64> = summary.records.iter().map(|r| r.second_moment).collect();
    let max = moments.iter().cloned().fold(0.0, f64::max);
    let last = *moments.last().unwrap();
    let at_80 = summary
        .records
        .iter()
        .find(|r| r.time >= 0.8 * config.t_final)
        .unwrap()
        .second_moment;
    let plateau = (last - at_80).abs() / last;
    let detail = format!(
        "second_moment max {max:.3e}, final {last:.3e} ({:.1}% of max), change over the last 20% of the run {:.1}%",
        100.0 * last / max,
        100.0 * plateau
    );
    if last < 0.1 * max && plateau < 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9(out: &Path) -> Verdict {
    let bin = env!("CARGO_BIN_EXE_nonlocal-fv");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = out.join(run);
        let status = Command::new(bin)
            .args(["run", "test1", "--out"])
            .arg(&dir)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!(
                "run {run} failed: {}",
                String::from_utf8_lossy(&status.stderr)
            ));
        }
        outputs.push(std::fs::read(dir.join("diagnostics.csv")).map_err(|e| e.to_string())?);
    }
    if outputs[0] == outputs[1] {
        Ok(format!(
            "two `run test1` invocations wrote identical diagnostics.csv ({} bytes)",
            outputs[0].len()
        ))
    } else {
        Err("diagnostics.csv differs between runs".into())
    }
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<Criterion> = vec![
        ("1 invariant suite", Box::new(criterion_1)),
        ("2 CFL guard", Box::new(criterion_2)),
        ("3 stationary Dirac", Box::new(criterion_3)),
        ("4 two-Dirac collapse", Box::new(criterion_4)),
        ("5 fast vs direct velocities", Box::new(criterion_5)),
        ("6 convergence", Box::new(criterion_6)),
        (
            "7 test1 pursuit and ring",
            Box::new(|| criterion_7(&dir.path().join("test1"))),
        ),
        (
            "8 test2 collapse",
            Box::new(|| criterion_8(&dir.path().join("test2"))),
        ),
        (
            "9 determinism",
            Box::new(|| criterion_9(&dir.path().join("det"))),
        ),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {name}: PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
