//! The four CLI subcommands as library functions. Each writes its artifacts
//! into `out_dir` and returns the paths it wrote, in a fixed order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capacity::controlled_lyapunov;
use crate::config::RunConfig;
use crate::controller::{run_rollout, Rollout};
use crate::error::{Error, Result};
use crate::io::{
    convergence_csv, landscape_csv, landscape_svg, lyapunov_csv, rollout_csv, rollout_svg, to_json, write_text,
    LyapunovReport,
};
use crate::landscape::{convergence_study, evaluate_landscape, richardson_limit, ConvergenceRow, LandscapeGrid};
use crate::model::{wrap_angle, StateVector, SystemModel};

/// Result of a step-size refinement study, as written to `convergence.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub system: String,
    pub variant: String,
    pub t_e_s: f64,
    pub state: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
    pub richardson_limit: Option<f64>,
}

fn write(out: &mut Vec<PathBuf>, dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    write_text(&path, contents)?;
    log::info!("wrote {}", path.display());
    out.push(path);
    Ok(())
}

fn axis_labels(model: &dyn SystemModel, cfg: &RunConfig) -> [String; 2] {
    let names = model.state_names();
    cfg.grid.axes.map(|a| names[a].clone())
}

/// Projects a rollout onto the landscape plane, wrapping angle axes so the
/// trajectory stays inside the plotted window.
fn project(model: &dyn SystemModel, cfg: &RunConfig, rollout: &Rollout) -> Vec<(f64, f64)> {
    let angles = model.angle_indices();
    let coord = |x: &[f64], axis: usize| {
        let v = x[axis];
        if angles.contains(&axis) {
            wrap_angle(v)
        } else {
            v
        }
    };
    let [a, b] = cfg.grid.axes;
    rollout.states.iter().map(|x| (coord(x, a), coord(x, b))).collect()
}

fn landscape(model: &dyn SystemModel, cfg: &RunConfig, workers: usize) -> Result<LandscapeGrid> {
    let grid = evaluate_landscape(model, &cfg.grid, cfg.variant, &cfg.horizon, &cfg.channel, workers)?;
    if grid.failed_count() > 0 {
        log::warn!("{} of {} grid points failed", grid.failed_count(), grid.grid.len());
    }
    Ok(grid)
}

pub fn cmd_landscape(cfg: &RunConfig, out_dir: &Path, workers: usize) -> Result<Vec<PathBuf>> {
    let model = cfg.system.build()?;
    let grid = landscape(model.as_ref(), cfg, workers)?;
    let mut files = Vec::new();
    write(&mut files, out_dir, "landscape.csv", &landscape_csv(&grid))?;
    write(&mut files, out_dir, "landscape.json", &to_json(&grid)?)?;
    if cfg.output.svg {
        let overlay = if cfg.output.overlay_rollout {
            let rollout = run_rollout(
                model.as_ref(),
                &cfg.initial_state(),
                cfg.duration_s,
                &cfg.policy,
                &cfg.noise,
                cfg.seed,
            )?;
            Some(project(model.as_ref(), cfg, &rollout))
        } else {
            None
        };
        let [l0, l1] = axis_labels(model.as_ref(), cfg);
        let svg = landscape_svg(&grid, [&l0, &l1], overlay.as_deref());
        write(&mut files, out_dir, "landscape.svg", &svg)?;
    }
    Ok(files)
}

pub fn cmd_rollout(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let model = cfg.system.build()?;
    let rollout = run_rollout(
        model.as_ref(),
        &cfg.initial_state(),
        cfg.duration_s,
        &cfg.policy,
        &cfg.noise,
        cfg.seed,
    )?;
    if let Some(reason) = &rollout.failure {
        log::warn!("rollout stopped early: {reason}");
    }
    let mut files = Vec::new();
    write(&mut files, out_dir, "rollout.csv", &rollout_csv(&rollout))?;
    write(&mut files, out_dir, "rollout.json", &to_json(&rollout)?)?;
    if cfg.output.svg {
        write(&mut files, out_dir, "rollout.svg", &rollout_svg(&rollout))?;
    }
    Ok(files)
}

/// Runs the refinement study at `[convergence] state`, or at the landscape
/// maximum when no state is given.
pub fn cmd_convergence(cfg: &RunConfig, out_dir: &Path, workers: usize) -> Result<Vec<PathBuf>> {
    let model = cfg.system.build()?;
    let state = match &cfg.convergence.state {
        Some(s) => s.clone(),
        None => {
            let grid = landscape(model.as_ref(), cfg, workers)?;
            let (i, j, _) = grid
                .argmax()
                .ok_or_else(|| Error::NumericalFailure("every landscape point failed".into()))?;
            grid.grid.state(i, j).as_slice().to_vec()
        }
    };
    let rows = convergence_study(
        model.as_ref(),
        &StateVector::from_column_slice(&state),
        cfg.variant,
        cfg.convergence.t_e_s,
        &cfg.convergence.dt_list,
        &cfg.channel,
    )?;
    let report = ConvergenceReport {
        system: cfg.system.kind().to_string(),
        variant: cfg.variant.name().to_string(),
        t_e_s: cfg.convergence.t_e_s,
        state,
        richardson_limit: richardson_limit(&rows),
        rows,
    };
    let mut files = Vec::new();
    write(&mut files, out_dir, "convergence.csv", &convergence_csv(&report.rows))?;
    write(&mut files, out_dir, "convergence.json", &to_json(&report)?)?;
    Ok(files)
}

pub fn cmd_lyapunov(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let model = cfg.system.build()?;
    let ly = &cfg.lyapunov;
    let result = controlled_lyapunov(
        model.as_ref(),
        &StateVector::from_column_slice(&ly.state),
        ly.horizon_steps,
        ly.dt,
        &cfg.channel,
    )?;
    let report = LyapunovReport::new(cfg.system.kind(), &result);
    let mut files = Vec::new();
    write(&mut files, out_dir, "lyapunov.csv", &lyapunov_csv(&report))?;
    write(&mut files, out_dir, "lyapunov.json", &to_json(&report)?)?;
    Ok(files)
}
