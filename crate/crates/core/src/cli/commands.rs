use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{RunConfig, SweepConfig};
use crate::diagnostics::{fit_decay_rate, lyapunov_series, positivity_threshold};
use crate::error::{Error, Result};
use crate::io::{
    read_profile_csv, write_columns_csv, write_diagnostics_csv, write_json, write_lyapunov_csv,
    write_profile_csv, write_trajectory_csv,
};
use crate::model::{BoundaryCondition, FieldState, Grid, ModelParams, ProfileSpec, SpeedProfile};
use crate::simulator::{
    march_to_steady, simulate, simulate_full_arp23, simulate_with_reference, MarchConfig,
    MarchOutcome, Scheme,
};
use crate::steady::{
    bifurcation_analysis, branch_slope, dbc_shooting_steady, pbc_constant_steady,
    pbc_perturbative_for_spec, SteadyMethod, SteadyProfile,
};

/// Residual accepted for an explicit constant branch.
const CONSTANT_RESIDUAL: f64 = 1e-10;

fn base_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

fn output_dir(config: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output.dir.clone());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn simulate_cmd(config_path: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let config = RunConfig::load(config_path)?;
    let run = config.prepare(&base_dir(config_path))?;
    let dir = output_dir(&config, out)?;
    let scheme = config.scheme_config();
    let trajectory = if run.params.epsilon.is_some() {
        let mut init = run.init.clone();
        if init.a.is_none() {
            // start on the quasi-steady manifold
            init.a = Some(
                init.u
                    .iter()
                    .zip(&init.v)
                    .map(|(u, v)| 1.0 / (1.0 + u + v))
                    .collect(),
            );
        }
        simulate_full_arp23(&init, &run.params, &run.profile, &scheme)?
    } else {
        simulate(&run.init, &run.params, &run.profile, &scheme)?
    };
    write_trajectory_csv(&dir.join("trajectory.csv"), &trajectory)?;
    write_diagnostics_csv(&dir.join("diagnostics.csv"), &trajectory)?;
    write_json(
        &dir.join("metadata.json"),
        &json!({
            "config": config,
            "dt": trajectory.dt,
            "steps": trajectory.steps,
            "records": trajectory.records.len(),
            "clamped": trajectory.clamped,
            "bound_violations": trajectory.bound_violations,
            "bounds": trajectory.bounds,
            "harmonic_mean_speed": run.profile.big_c(),
        }),
    )?;
    if trajectory.bound_violations > 0 {
        return Err(Error::Integration(format!(
            "a-priori bound violated at {} steps (see {})",
            trajectory.bound_violations,
            dir.display()
        )));
    }
    Ok(dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyChoice {
    March,
    Shooting,
    Perturbative,
    Constant,
}

fn constant_speed(spec: &ProfileSpec) -> Option<f64> {
    match spec {
        ProfileSpec::Constant { value } => Some(*value),
        _ => None,
    }
}

fn march_steady(
    init: &FieldState,
    params: &ModelParams,
    profile: &SpeedProfile,
    config: &MarchConfig,
) -> Result<SteadyProfile> {
    match march_to_steady(init, params, profile, config)? {
        MarchOutcome::Converged(s) => {
            if s.residual > 100.0 * config.tolerance {
                return Err(Error::Numerical(format!(
                    "marched profile residual {:e} exceeds 100 x tolerance",
                    s.residual
                )));
            }
            Ok(s)
        }
        MarchOutcome::DecayedToZero { t } => Err(Error::Domain(format!(
            "the flow decayed to zero by t = {t}: no nontrivial steady state is attracting for alpha = {}",
            params.alpha
        ))),
        MarchOutcome::NotConverged { t, rate, .. } => Err(Error::Numerical(format!(
            "not converged by t = {t}: sup rate of change {rate:e} > {:e}",
            config.tolerance
        ))),
    }
}

pub fn steady_cmd(config_path: &Path, method: SteadyChoice, out: Option<&Path>) -> Result<PathBuf> {
    let config = RunConfig::load(config_path)?;
    let run = config.prepare(&base_dir(config_path))?;
    let dir = output_dir(&config, out)?;
    let alpha = run.params.alpha;
    let bc = run.params.bc;
    let mut extra = json!({});
    let profile = match method {
        SteadyChoice::Constant => {
            if bc != BoundaryCondition::Pbc || constant_speed(&config.profile).is_none() {
                return Err(Error::Config(
                    "the constant branch needs periodic conditions and constant speed".into(),
                ));
            }
            let s = pbc_constant_steady(alpha, &run.grid)?;
            if s.residual > CONSTANT_RESIDUAL {
                return Err(Error::Numerical(format!("residual {:e}", s.residual)));
            }
            s
        }
        SteadyChoice::Perturbative => {
            if bc != BoundaryCondition::Pbc {
                return Err(Error::Config(
                    "the perturbative branch needs periodic conditions".into(),
                ));
            }
            pbc_perturbative_for_spec(alpha, &config.profile, &run.grid)?
        }
        SteadyChoice::Shooting => {
            let c = match (bc, constant_speed(&config.profile)) {
                (BoundaryCondition::Dbc, Some(c)) => c,
                _ => {
                    return Err(Error::Config(
                        "shooting needs zero-inflow conditions and constant speed".into(),
                    ))
                }
            };
            let sol = dbc_shooting_steady(alpha, c, &run.grid, config.tolerances.steady)?;
            extra = json!({
                "shooting": sol.state,
                "q_half": sol.q_half,
                "energy_drift": sol.drift,
                "rk4_steps": sol.steps,
            });
            sol.profile
        }
        SteadyChoice::March => march_steady(&run.init, &run.params, &run.profile, &config.march_config())?,
    };
    write_profile_csv(&dir.join("profile.csv"), &profile)?;
    write_json(
        &dir.join("steady.json"),
        &json!({
            "method": profile.method,
            "alpha": alpha,
            "bc": bc,
            "n_cells": profile.len(),
            "residual": profile.residual,
            "energy": profile.energy,
            "bounds": profile.bounds,
            "details": extra,
        }),
    )?;
    Ok(dir)
}

#[derive(Serialize)]
struct BifurcationReport {
    bc: BoundaryCondition,
    harmonic_mean_speed: f64,
    b0: Option<f64>,
    alpha0: f64,
    kappa1: Option<f64>,
    kappa2: Option<f64>,
}

pub fn bifurcation_cmd(config_path: &Path, out: Option<&Path>) -> Result<String> {
    let config = RunConfig::load(config_path)?;
    let params = config.params()?;
    let grid = Grid::new(config.grid.n_cells)?;
    let profile = SpeedProfile::for_grid(config.profile.clone(), &grid)?;
    let bif = bifurcation_analysis(params.bc, &profile)?;
    let (su, sv) = branch_slope(&bif, &profile, &grid)?;
    let report = BifurcationReport {
        bc: bif.bc,
        harmonic_mean_speed: bif.big_c,
        b0: bif.b0,
        alpha0: bif.alpha0,
        kappa1: bif.kappa1,
        kappa2: bif.kappa2,
    };
    let dir = output_dir(&config, out)?;
    write_json(&dir.join("bifurcation.json"), &report)?;
    write_columns_csv(
        &dir.join("branch_slope.csv"),
        &["x", "du_dalpha", "dv_dalpha"],
        &[&grid.centers(), &su, &sv],
    )?;
    Ok(serde_json::to_string_pretty(&report)?)
}

pub fn lyapunov_cmd(config_path: &Path, steady: Option<&Path>, out: Option<&Path>) -> Result<PathBuf> {
    let config = RunConfig::load(config_path)?;
    let run = config.prepare(&base_dir(config_path))?;
    let dir = output_dir(&config, out)?;
    let reference = match steady {
        Some(path) => {
            let s = read_profile_csv(path, run.params.alpha, run.params.bc)?;
            if s.len() != run.grid.n_cells() {
                return Err(Error::Config(format!(
                    "{} has {} rows, grid has {} cells",
                    path.display(),
                    s.len(),
                    run.grid.n_cells()
                )));
            }
            s
        }
        None if run.params.bc.is_periodic() && constant_speed(&config.profile).is_some() => {
            pbc_constant_steady(run.params.alpha, &run.grid)?
        }
        // the discrete steady state of the scheme itself, so H really tends to 0
        None => {
            let march = config.march_config().with_tolerance(config.tolerances.steady * 1e-4);
            march_steady(&run.init, &run.params, &run.profile, &march)?
        }
    };
    let scheme = config.scheme_config();
    let trajectory =
        simulate_with_reference(&run.init, &run.params, &run.profile, &scheme, Some(&reference))?;
    let series = lyapunov_series(&trajectory, &reference, &run.params, &run.profile)?;
    write_lyapunov_csv(&dir.join("lyapunov.csv"), &series)?;
    write_diagnostics_csv(&dir.join("diagnostics.csv"), &trajectory)?;
    let h: Vec<f64> = series.iter().map(|r| r.h).collect();
    let floor = 1e-14 * h[0];
    let rate = fit_decay_rate(
        &trajectory.records,
        &h,
        &reference,
        run.params.alpha,
        positivity_threshold(&run.profile),
        floor,
    )?;
    write_json(&dir.join("rate.json"), &rate)?;
    Ok(dir)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub outcome: String,
    pub t: f64,
    pub sup_u: f64,
    pub sup_v: f64,
}

pub fn sweep_cmd(config_path: &Path, workers: usize, out: Option<&Path>) -> Result<PathBuf> {
    let sweep = SweepConfig::load(config_path)?;
    let base = base_dir(config_path);
    let template = sweep.base.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        sweep
            .alphas
            .par_iter()
            .map(|&alpha| {
                let mut cfg = template.clone();
                cfg.model.alpha = alpha;
                let run = cfg.prepare(&base)?;
                let outcome = march_to_steady(&run.init, &run.params, &run.profile, &cfg.march_config())?;
                let sup = |w: &[f64]| w.iter().cloned().fold(0.0, f64::max);
                let (t, sup_u, sup_v) = match &outcome {
                    MarchOutcome::Converged(s) => (f64::NAN, sup(&s.u_bar), sup(&s.v_bar)),
                    MarchOutcome::DecayedToZero { t } => (*t, 0.0, 0.0),
                    MarchOutcome::NotConverged { t, state, .. } => (*t, sup(&state.u), sup(&state.v)),
                };
                Ok(SweepRow {
                    alpha,
                    outcome: outcome.label().to_string(),
                    t,
                    sup_u,
                    sup_v,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let dir = output_dir(&sweep.base, out)?;
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    if !classification_is_monotone(&rows) {
        eprintln!("warning: sweep classification is not monotone in alpha; refine the grid");
    }
    Ok(dir)
}

/// Decay below the threshold and convergence above it, in order of `α`.
pub fn classification_is_monotone(rows: &[SweepRow]) -> bool {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let mut seen_converged = false;
    for row in sorted {
        match row.outcome.as_str() {
            "converged" => seen_converged = true,
            "decayed" if seen_converged => return false,
            _ => {}
        }
    }
    true
}

pub fn reproduce_fig3_cmd(alpha: f64, eps: f64, n_cells: usize, out: &Path) -> Result<PathBuf> {
    if !(eps > 0.0 && eps < 4.0 / 3.0) {
        return Err(Error::Config(format!(
            "eps must lie in (0, 4/3) for a positive speed, got {eps}"
        )));
    }
    let grid = Grid::new(n_cells)?;
    let spec = ProfileSpec::cosine(1.0, 0.75 * eps, 1);
    let profile = SpeedProfile::for_grid(spec.clone(), &grid)?;
    let params = ModelParams::new(alpha, BoundaryCondition::Pbc)?;
    let predicted = pbc_perturbative_for_spec(alpha, &spec, &grid)?;
    // from the homogeneous branch of the constant-speed problem
    let level = 0.5 * (alpha - 1.0);
    let init = FieldState::new(0.0, vec![level; n_cells], vec![level; n_cells]);
    let march = MarchConfig::new(Scheme::Characteristics)
        .with_tolerance(1e-10)
        .with_t_max(400.0);
    let marched = march_steady(&init, &params, &profile, &march)?;
    fs::create_dir_all(out)?;
    let x = grid.centers();
    let c: Vec<f64> = x.iter().map(|&x| profile.eval(x)).collect();
    write_columns_csv(
        &out.join("fig3.csv"),
        &["x", "c", "u_perturbative", "v_perturbative", "u_numerical", "v_numerical"],
        &[&x, &c, &predicted.u_bar, &predicted.v_bar, &marched.u_bar, &marched.v_bar],
    )?;
    let argmax = |w: &[f64]| x[(0..w.len()).fold(0, |k, i| if w[i] > w[k] { i } else { k })];
    write_json(
        &out.join("fig3.json"),
        &json!({
            "alpha": alpha,
            "eps": eps,
            "n_cells": n_cells,
            "sup_difference": predicted.sup_distance(&marched),
            "argmax_u_numerical": argmax(&marched.u_bar),
            "argmax_v_numerical": argmax(&marched.v_bar),
            "argmax_u_perturbative": argmax(&predicted.u_bar),
            "argmax_v_perturbative": argmax(&predicted.v_bar),
            "march_residual": marched.residual,
            "method": SteadyMethod::TimeMarch,
        }),
    )?;
    Ok(out.to_path_buf())
}
