use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use varflow::convergence::{slopes, REFERENCE_STEP, STUDY_STEPS};
use varflow::{
    action_decomposition_constant_for, convergence_study, empirical_moments, integrate,
    kinetic_energy, master_equation_residual_of_field, total_action, AffineFlow, ConvergenceRow,
    DVector, Method, ParticleEnsemble,
};

use crate::config::Experiment;
use crate::error::CliError;
use crate::format::{float, write_csv};
use crate::report::{ExperimentReport, FlowResult, GaussianRecord};

/// Continuity residual, relative to `1 + |log h − E[log h]|`, above which a
/// run is aborted.
pub const RESIDUAL_TOLERANCE: f64 = 1e-7;

/// Particles per snapshot checked against the continuity equation.
const RESIDUAL_SAMPLE: usize = 100;

/// Rows of `energy.csv`: λ = 0, 0.01, …, 1.
pub const ENERGY_GRID_POINTS: usize = 101;

/// Particles used by the convergence study.
pub const CONVERGENCE_PARTICLES: usize = 16;

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn max_master_residual(
    flow: &AffineFlow,
    initial: &ParticleEnsemble,
    last: &ParticleEnsemble,
) -> Result<f64, CliError> {
    let path = flow.path();
    let d = path.dim();
    let snaps: Vec<(f64, &[f64])> = if last.trajectory().is_empty() {
        vec![(0.0, initial.positions()), (1.0, last.positions())]
    } else {
        last.trajectory()
            .iter()
            .map(|s| (s.lambda, &s.positions[..]))
            .collect()
    };
    let mut worst: f64 = 0.0;
    for (lambda, positions) in snaps {
        let field = flow.field(lambda)?;
        for x in positions.chunks_exact(d).take(RESIDUAL_SAMPLE) {
            let x = DVector::from_column_slice(x);
            let r = master_equation_residual_of_field(path, lambda, &field, &x)?;
            let scale = 1.0 + path.centered_log_likelihood(lambda, &x)?.abs();
            if r.is_nan() || r.abs() > RESIDUAL_TOLERANCE * scale {
                return Err(CliError::Numerical(format!(
                    "{}: continuity residual {r:e} at lambda = {lambda}",
                    flow.label()
                )));
            }
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

fn run_flow(
    exp: &Experiment,
    flow: &AffineFlow,
    initial: &ParticleEnsemble,
) -> Result<(FlowResult, ParticleEnsemble), CliError> {
    let label = flow.label();
    let with_label = |e: varflow::Error| CliError::Numerical(format!("{label}: {e}"));
    let action = total_action(flow, exp.config.quadrature_nodes).map_err(with_label)?;
    let out = integrate(flow, initial, &exp.config.integrator).map_err(with_label)?;
    let moments = empirical_moments(&out).map_err(with_label)?;
    let max_master_residual = max_master_residual(flow, initial, &out)?;
    let result = FlowResult {
        label: label.clone(),
        action,
        final_moments: GaussianRecord::from_parts(&moments.mean, &moments.cov),
        max_master_residual,
    };
    Ok((result, out))
}

fn trajectory_rows(initial: &ParticleEnsemble, out: &ParticleEnsemble) -> Vec<Vec<String>> {
    let d = out.dim();
    let snaps: Vec<(f64, &[f64])> = if out.trajectory().is_empty() {
        vec![(0.0, initial.positions()), (1.0, out.positions())]
    } else {
        out.trajectory()
            .iter()
            .map(|s| (s.lambda, &s.positions[..]))
            .collect()
    };
    let mut rows = Vec::with_capacity(out.len() * snaps.len());
    for i in 0..out.len() {
        for (lambda, positions) in &snaps {
            let mut row = vec![i.to_string(), float(*lambda)];
            row.extend(positions[i * d..(i + 1) * d].iter().map(|&v| float(v)));
            rows.push(row);
        }
    }
    rows
}

/// Transports the ensemble with every configured flow and writes
/// `actions.csv`, `energy.csv`, `trajectories_<label>.csv` and
/// `report.json` into the output directory.
pub fn run(exp: &Experiment) -> Result<ExperimentReport, CliError> {
    let start = Instant::now();
    let cfg = &exp.config;
    let flows = exp.flows();
    let initial = ParticleEnsemble::sample(exp.path.prior(), cfg.n_particles, cfg.seed)?;
    let results: Vec<(FlowResult, ParticleEnsemble)> = flows
        .par_iter()
        .map(|flow| run_flow(exp, flow, &initial))
        .collect::<Result<_, _>>()?;

    let grid: Vec<f64> = (0..ENERGY_GRID_POINTS)
        .map(|k| k as f64 / (ENERGY_GRID_POINTS - 1) as f64)
        .collect();
    let mut energy_rows: Vec<Vec<String>> = grid.iter().map(|&l| vec![float(l)]).collect();
    for flow in &flows {
        for (row, &l) in energy_rows.iter_mut().zip(&grid) {
            row.push(float(kinetic_energy(flow, l)?));
        }
    }
    let posterior = exp.path.moments(1.0)?;

    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let mut artifacts = Vec::new();

    let actions = dir.join("actions.csv");
    write_csv(
        &actions,
        &["label".into(), "total_action".into()],
        results
            .iter()
            .map(|(r, _)| vec![r.label.clone(), float(r.action.total_action)]),
    )?;
    artifacts.push(actions);

    let energy = dir.join("energy.csv");
    let mut header = vec!["lambda".to_string()];
    header.extend(flows.iter().map(|f| f.label()));
    write_csv(&energy, &header, energy_rows)?;
    artifacts.push(energy);

    let mut header = vec!["particle_id".to_string(), "lambda".to_string()];
    header.extend((1..=exp.path.dim()).map(|i| format!("x{i}")));
    for (result, out) in &results {
        let file = dir.join(format!("trajectories_{}.csv", result.label));
        write_csv(&file, &header, trajectory_rows(&initial, out))?;
        artifacts.push(file);
    }

    let json = dir.join("report.json");
    artifacts.push(json.clone());
    let report = ExperimentReport {
        config_echo: cfg.clone(),
        posterior_analytic: GaussianRecord::from(&posterior),
        per_flow: results.into_iter().map(|(r, _)| r).collect(),
        runtime_ms: start.elapsed().as_millis() as u64,
        artifact_paths: artifacts,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::output(&json, e))?;
    fs::write(&json, text + "\n").map_err(|e| CliError::output(&json, e))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub total_action: f64,
    /// `S* + c·α²`.
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    /// Action of the potential flow.
    pub minimum_action: f64,
    pub coefficient: f64,
    pub rows: Vec<SweepRow>,
    pub max_deviation: f64,
    pub max_relative_deviation: f64,
    pub csv_path: PathBuf,
}

/// Compares the action of each rotational flow with the quadratic law
/// `S(α) = S* + c·α²` and writes `alpha_sweep.csv`.
pub fn sweep_alpha(exp: &Experiment, alphas: &[f64]) -> Result<SweepSummary, CliError> {
    if alphas.len() < 2 {
        return Err(CliError::Usage(format!(
            "sweep-alpha needs at least two alpha values, got {}",
            alphas.len()
        )));
    }
    if let Some(a) = alphas.iter().find(|a| !a.is_finite()) {
        return Err(CliError::Usage(format!(
            "alpha values must be finite, got {a}"
        )));
    }
    let nodes = exp.config.quadrature_nodes;
    let minimum_action = total_action(&AffineFlow::potential(&exp.path), nodes)?.total_action;
    let coefficient = action_decomposition_constant_for(&exp.path, &exp.generator, nodes)?;
    let rows: Vec<SweepRow> = alphas
        .par_iter()
        .map(|&alpha| {
            let s = total_action(&exp.rotational(alpha), nodes)?.total_action;
            Ok(SweepRow {
                alpha,
                total_action: s,
                predicted: minimum_action + coefficient * alpha * alpha,
            })
        })
        .collect::<Result<_, varflow::Error>>()?;
    let max_deviation = rows
        .iter()
        .map(|r| (r.total_action - r.predicted).abs())
        .fold(0.0, f64::max);
    let max_relative_deviation = rows
        .iter()
        .map(|r| (r.total_action - r.predicted).abs() / r.total_action.abs())
        .fold(0.0, f64::max);

    let dir = &exp.config.output_dir;
    prepare_dir(dir)?;
    let csv_path = dir.join("alpha_sweep.csv");
    write_csv(
        &csv_path,
        &["alpha".into(), "total_action".into(), "predicted".into()],
        rows.iter()
            .map(|r| vec![float(r.alpha), float(r.total_action), float(r.predicted)]),
    )?;
    Ok(SweepSummary {
        minimum_action,
        coefficient,
        rows,
        max_deviation,
        max_relative_deviation,
        csv_path,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSummary {
    pub rows: Vec<ConvergenceRow>,
    pub slopes: Vec<(Method, f64)>,
    pub csv_path: PathBuf,
}

/// Endpoint error of Euler, Verlet and RK4 on the potential flow against a
/// fine RK4 reference; writes `convergence.csv`.
pub fn convergence(exp: &Experiment) -> Result<ConvergenceSummary, CliError> {
    let n = exp.config.n_particles.min(CONVERGENCE_PARTICLES);
    let initial = ParticleEnsemble::sample(exp.path.prior(), n, exp.config.seed)?;
    let flow = AffineFlow::potential(&exp.path);
    let rows = convergence_study(
        &flow,
        &initial,
        &[Method::Euler, Method::Verlet, Method::Rk4],
        &STUDY_STEPS,
        REFERENCE_STEP,
    )?;
    let fitted = slopes(&rows);
    let slope_of = |m: Method| {
        fitted
            .iter()
            .find(|(fm, _)| *fm == m)
            .map_or(f64::NAN, |s| s.1)
    };

    let dir = &exp.config.output_dir;
    prepare_dir(dir)?;
    let csv_path = dir.join("convergence.csv");
    write_csv(
        &csv_path,
        &[
            "method".into(),
            "h".into(),
            "endpoint_error".into(),
            "slope".into(),
        ],
        rows.iter().map(|r| {
            vec![
                r.method.name().to_string(),
                float(r.step_size),
                float(r.endpoint_error),
                float(slope_of(r.method)),
            ]
        }),
    )?;
    Ok(ConvergenceSummary {
        rows,
        slopes: fitted,
        csv_path,
    })
}
