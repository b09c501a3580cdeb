use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::{CliError, ContinuationMode, ContinueSettings, InitialField, RunConfig, SeedChoice, Subcommand};
use crate::continuation::{arclength_continue, compare_folds, natural_continue, ArclengthOptions, Branch};
use crate::dynamics::integrate;
use crate::error::IoError;
use crate::fieldio::{
    fmt_f64, read_complex_field, read_real_field, write_complex_field, write_csv, write_json, write_real_field_with,
};
use crate::lattice::{ComplexField, LatticeWindow, ModelParams, RealField, C64};
use crate::stationary::{
    sampled_soliton, scalar_root_double, scalar_root_single, solve_from_seed, SeedKind, SeedSpec, StationaryState,
};
use crate::verify::run_verify;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| {
        CliError::Io(IoError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

/// Execute a parsed configuration; returns a one-line summary.
pub fn run(config: &RunConfig) -> Result<String, CliError> {
    std::fs::create_dir_all(&config.output_dir).map_err(io(&config.output_dir))?;
    match config.command {
        Subcommand::Evolve => evolve(config),
        Subcommand::Stationary => stationary(config),
        Subcommand::Roots => roots(config),
        Subcommand::Continue => continue_branches(config),
        Subcommand::Verify => verify(config),
    }
}

fn initial_field(config: &RunConfig, init: &InitialField) -> Result<ComplexField, CliError> {
    let window = config.window;
    match init {
        InitialField::Random { mass } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            let raw = ComplexField::from_fn(window, |_| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
            .map_err(validation)?;
            let scale = (mass / raw.mass()).sqrt();
            let values = raw.values().iter().map(|z| z * scale).collect();
            ComplexField::new(window, values).map_err(validation)
        }
        InitialField::Soliton => {
            let u = sampled_soliton(window, &config.params).map_err(validation)?;
            Ok(ComplexField::from_real(&u))
        }
        InitialField::File(path) => {
            let field = match read_complex_field(path) {
                Ok(f) => f,
                Err(IoError::Csv { .. }) => ComplexField::from_real(&read_real_field(path)?),
                Err(e) => return Err(e.into()),
            };
            field.with_spacing(config.params.h).map_err(validation)
        }
    }
}

fn evolve(config: &RunConfig) -> Result<String, CliError> {
    let settings = config.evolution.as_ref().expect("evolve settings");
    let phi0 = initial_field(config, &settings.init)?;
    let trace = integrate(&phi0, &config.params, &settings.config).map_err(|e| match e {
        crate::error::EvolutionError::Config(_) | crate::error::EvolutionError::Lattice(_) => validation(e),
        _ => CliError::Convergence(e.to_string()),
    })?;
    let dir = &config.output_dir;
    let rows = trace
        .times
        .iter()
        .zip(&trace.mass_series)
        .zip(&trace.constraint_series)
        .map(|((t, m), c)| vec![fmt_f64(*t), fmt_f64(*m), fmt_f64(*c)]);
    write_csv(&dir.join("trace.csv"), &["t", "mass", "constraint_linf"], rows)?;
    if settings.write_snapshots {
        let snap_dir = dir.join("snapshots");
        std::fs::create_dir_all(&snap_dir).map_err(io(&snap_dir))?;
        for (k, (_, field)) in trace.snapshots.iter().enumerate() {
            write_complex_field(&snap_dir.join(format!("snapshot_{k:05}.csv")), field)?;
        }
    }
    let last = trace.final_state().expect("initial record exists");
    write_complex_field(&dir.join("final.csv"), last)?;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let summary = json!({
        "params": config.params,
        "t_end": settings.config.t_end,
        "mass_initial": trace.mass_series[0],
        "mass_drift": trace.mass_drift(),
        "constraint_linf_max": max(&trace.constraint_series),
        "evolved_constraint_linf_max": max(&trace.evolved_constraint_series),
        "accepted_steps": trace.accepted_steps,
        "rejected_steps": trace.rejected_steps,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(format!(
        "evolved to t = {}: relative mass drift {:e}, {} steps",
        settings.config.t_end,
        trace.mass_drift(),
        trace.accepted_steps
    ))
}

fn seed_spec(config: &RunConfig, kind: &SeedChoice) -> Result<SeedSpec, CliError> {
    Ok(match kind {
        SeedChoice::SingleSite => SeedSpec::SingleSite { center: config.center },
        SeedChoice::DoubleSite => SeedSpec::DoubleSite { center: config.center },
        SeedChoice::File(path) => SeedSpec::External(read_real_field(path)?),
        SeedChoice::Both => unreachable!("expanded by the caller"),
    })
}

fn solve(config: &RunConfig, seed: &SeedSpec, window: LatticeWindow) -> Result<StationaryState, CliError> {
    let window = match seed {
        SeedSpec::External(field) => field.window(),
        _ => window,
    };
    solve_from_seed(seed, window, &config.params, &config.newton).map_err(|e| match e {
        crate::error::LatticeError::Parameter { name: "center", .. } => CliError::Validation(format!("`center`: {e}")),
        _ => validation(e),
    })
}

/// Metadata written next to a stationary profile.
pub fn state_metadata(state: &StationaryState) -> serde_json::Map<String, serde_json::Value> {
    let value = json!({
        "lambda": state.params.lambda,
        "p": state.params.p,
        "omega": state.params.omega,
        "h": state.params.h,
        "gamma": state.params.gamma,
        "residual_linf": state.residual_linf,
        "iterations": state.iterations,
        "converged": state.converged,
        "mass": state.mass(),
    });
    match value {
        serde_json::Value::Object(map) => map,
        _ => unreachable!(),
    }
}

fn write_state(path: &Path, state: &StationaryState) -> Result<(), CliError> {
    write_real_field_with(path, &state.u, state_metadata(state))?;
    let g = RealField::new(state.u.window(), state.g.clone()).map_err(validation)?;
    let g_path = path.with_file_name(format!(
        "{}_g.csv",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("state")
    ));
    write_real_field_with(&g_path, &g, serde_json::Map::new())?;
    Ok(())
}

fn stationary(config: &RunConfig) -> Result<String, CliError> {
    let seed = seed_spec(config, &config.seed)?;
    let state = solve(config, &seed, config.window)?;
    write_state(&config.output_dir.join("state.csv"), &state)?;
    if !state.converged {
        let why = state
            .failure
            .map(|f| f.to_string())
            .unwrap_or_else(|| format!("residual {:e}", state.residual_linf));
        return Err(CliError::Convergence(format!("newton did not converge: {why}")));
    }
    Ok(format!(
        "converged in {} iterations: residual {:e}, mass {}, {} sites",
        state.iterations,
        state.residual_linf,
        state.mass(),
        state.u.len()
    ))
}

fn roots(config: &RunConfig) -> Result<String, CliError> {
    let sweep = config.roots.expect("roots settings");
    let ratio = (sweep.h_max / sweep.h_min).ln();
    let rows: Vec<Vec<String>> = (0..sweep.h_steps)
        .map(|k| {
            let h = sweep.h_min * (ratio * k as f64 / (sweep.h_steps - 1) as f64).exp();
            let prm = ModelParams { h, ..config.params };
            let u = scalar_root_single(&prm);
            let w = scalar_root_double(&prm, u);
            let lam_u = prm.lambda * u.powf(2.0 * prm.p);
            let single = lam_u + 0.25 * h * h * u.powi(4) - (prm.omega - prm.gamma);
            let double = prm.lambda * w.powf(2.0 * prm.p) + 0.25 * h * h * w.powi(4) - lam_u;
            let anti = u * h.sqrt() / (4.0 * prm.omega).powf(0.25);
            vec![
                fmt_f64(h),
                fmt_f64(u),
                fmt_f64(w),
                fmt_f64(single),
                fmt_f64(double),
                fmt_f64(anti),
            ]
        })
        .collect();
    write_csv(
        &config.output_dir.join("roots.csv"),
        &[
            "h",
            "u_single",
            "w_double",
            "single_residual",
            "double_residual",
            "ratio",
        ],
        rows,
    )?;
    Ok(format!("{} root pairs written", sweep.h_steps))
}

#[derive(Serialize)]
struct BranchSummary<'a> {
    seed_kind: SeedKind,
    params: &'a ModelParams,
    fold_h: Option<f64>,
    folds: &'a [crate::continuation::Fold],
    termination: &'a Option<crate::continuation::Termination>,
    points: Vec<MassPoint>,
}

#[derive(Serialize)]
struct MassPoint {
    h: f64,
    mass: f64,
}

fn branch_rows(branch: &Branch) -> Vec<Vec<String>> {
    branch
        .points
        .iter()
        .enumerate()
        .map(|(i, pt)| {
            let fold = branch.folds.iter().any(|f| f.after_point == i);
            vec![
                fmt_f64(pt.arc_param),
                fmt_f64(pt.h),
                fmt_f64(pt.mass),
                fmt_f64(pt.state.residual_linf),
                pt.state.iterations.to_string(),
                fmt_f64(pt.tangent_dh),
                u8::from(fold).to_string(),
            ]
        })
        .collect()
}

fn branch_stem(index: usize, branch: &Branch) -> String {
    format!("branch_{index}_{}", branch.seed_kind)
}

/// One CSV per branch plus `branches.json` with the `(h, M)` curves and
/// fold locations. Returns the written paths.
pub fn emit_branch_figure_data(branches: &[Branch], dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for (i, branch) in branches.iter().enumerate() {
        let path = dir.join(format!("{}.csv", branch_stem(i, branch)));
        write_csv(
            &path,
            &["arc", "h", "mass", "residual", "iterations", "tangent_dh", "fold_flag"],
            branch_rows(branch),
        )?;
        written.push(path);
        summaries.push(BranchSummary {
            seed_kind: branch.seed_kind,
            params: &branch.params,
            fold_h: branch.fold_h(),
            folds: &branch.folds,
            termination: &branch.termination,
            points: branch
                .points
                .iter()
                .map(|p| MassPoint { h: p.h, mass: p.mass })
                .collect(),
        });
    }
    // pairwise fold comparison between branches from different seeds
    let mut connections = Vec::new();
    for (i, a) in branches.iter().enumerate() {
        for (j, b) in branches.iter().enumerate().skip(i + 1) {
            if a.seed_kind == b.seed_kind {
                continue;
            }
            connections.push(json!({
                "branches": [i, j],
                "folds": compare_folds(a, b, 1e-6),
            }));
        }
    }
    let json_path = dir.join("branches.json");
    write_json(
        &json_path,
        &json!({ "branches": summaries, "connections": connections }),
    )?;
    written.push(json_path);
    Ok(written)
}

fn trace_branch(
    config: &RunConfig,
    settings: &ContinueSettings,
    start: &StationaryState,
    direction: crate::continuation::Direction,
) -> Result<Branch, CliError> {
    let mut branch = match settings.mode {
        ContinuationMode::Arclength => arclength_continue(
            start,
            &ArclengthOptions {
                direction,
                ..settings.arclength
            },
            &settings.control,
            &config.newton,
        ),
        ContinuationMode::Natural => natural_continue(
            start,
            settings.h_target.expect("validated"),
            &settings.control,
            &config.newton,
        ),
    }
    .map_err(validation)?;
    branch.seed_kind = match &config.seed {
        SeedChoice::File(_) => SeedKind::External,
        _ => branch.seed_kind,
    };
    Ok(branch)
}

fn continue_branches(config: &RunConfig) -> Result<String, CliError> {
    let settings = config.continuation.as_ref().expect("continue settings");
    let seeds = match &config.seed {
        SeedChoice::Both => vec![SeedChoice::SingleSite, SeedChoice::DoubleSite],
        other => vec![other.clone()],
    };
    let directions = match settings.mode {
        ContinuationMode::Arclength => settings.directions.clone(),
        ContinuationMode::Natural => vec![settings.arclength.direction],
    };
    let mut starts = Vec::new();
    for seed in &seeds {
        let spec = seed_spec(config, seed)?;
        let state = solve(config, &spec, config.window)?;
        if !state.converged {
            return Err(CliError::Convergence(format!(
                "{} start state at h = {} did not converge: {}",
                spec.kind(),
                config.params.h,
                state.failure.map(|f| f.to_string()).unwrap_or_default()
            )));
        }
        starts.push((spec.kind(), state));
    }

    // independent branches run concurrently; results keep the input order
    let jobs: Vec<_> = starts
        .iter()
        .flat_map(|(kind, state)| directions.iter().map(move |d| (*kind, state, *d)))
        .collect();
    let results: Vec<Result<Branch, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(kind, state, dir)| {
                scope.spawn(move || {
                    trace_branch(config, settings, state, *dir).map(|mut b| {
                        b.seed_kind = *kind;
                        b
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("branch worker panicked"))
            .collect()
    });
    let branches = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let dir = &config.output_dir;
    emit_branch_figure_data(&branches, dir)?;
    if settings.write_fields {
        for (i, branch) in branches.iter().enumerate() {
            let sub = dir.join(format!("{}_fields", branch_stem(i, branch)));
            std::fs::create_dir_all(&sub).map_err(io(&sub))?;
            for (k, pt) in branch.points.iter().enumerate() {
                write_state(&sub.join(format!("point_{k:05}.csv")), &pt.state)?;
            }
        }
    }
    let folds: Vec<String> = branches
        .iter()
        .flat_map(|b| b.folds.iter().map(|f| format!("{:.10}", f.h)))
        .collect();
    Ok(format!(
        "{} branch(es), {} points, folds at h = [{}]",
        branches.len(),
        branches.iter().map(|b| b.points.len()).sum::<usize>(),
        folds.join(", ")
    ))
}

fn verify(config: &RunConfig) -> Result<String, CliError> {
    let options = config.verify.expect("verify settings");
    let report = run_verify(&options);
    write_json(&config.output_dir.join("verify.json"), &report)?;
    for s in &report.suites {
        println!(
            "{:<28} {}  measured {:.3e}  tolerance {:.1e}",
            s.name,
            if s.passed { "pass" } else { "FAIL" },
            s.measured,
            s.tolerance
        );
    }
    if report.passed {
        Ok(format!("all {} suites passed", report.suites.len()))
    } else {
        Err(CliError::Verification(format!(
            "failing suites: {}",
            report.failing().join(", ")
        )))
    }
}
