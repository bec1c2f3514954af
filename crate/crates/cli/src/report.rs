use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use varflow::{ActionReport, DMatrix, DVector, Gaussian};

use crate::config::ExperimentConfig;

/// Mean and covariance as plain nested vectors (covariance row by row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianRecord {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl GaussianRecord {
    pub fn from_parts(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Self {
        GaussianRecord {
            mean: mean.iter().copied().collect(),
            cov: cov
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }
}

impl From<&Gaussian> for GaussianRecord {
    fn from(g: &Gaussian) -> Self {
        Self::from_parts(g.mean(), g.cov().as_matrix())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub label: String,
    pub action: ActionReport,
    /// Sample moments of the transported ensemble at λ = 1.
    pub final_moments: GaussianRecord,
    /// Largest continuity-equation residual seen along the recorded
    /// trajectories.
    pub max_master_residual: f64,
}

/// Everything `run` produces, as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_echo: ExperimentConfig,
    pub posterior_analytic: GaussianRecord,
    pub per_flow: Vec<FlowResult>,
    pub runtime_ms: u64,
    pub artifact_paths: Vec<PathBuf>,
}
