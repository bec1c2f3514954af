//! Experiment configuration, read from TOML.
//!
//! ```toml
//! prior_mean = [0.0, 0.0]
//! prior_cov = [[4.0, 1.5], [1.5, 2.0]]
//! h_matrix = [[1.0, 0.0]]
//! noise_cov = [[0.25]]
//! observation = [3.0]
//! alphas = [2.5]
//! n_particles = 40
//! seed = 42
//! quadrature_nodes = 64
//! output_dir = "output"
//!
//! [integrator]
//! method = "rk4"
//! step_size = 0.01
//! ```
//!
//! `rotation_generator` (a `d×d` antisymmetric matrix) is optional; without
//! it rotational flows use the generator with `+1` at (1, 2) and `−1` at
//! (2, 1).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use varflow::diagnostics::MIN_QUADRATURE_NODES;
use varflow::{
    AffineFlow, Antisymmetric, DMatrix, DVector, Error, FlowKind, Gaussian, HomotopyPath,
    IntegratorSpec, LinearMeasurement, SpdMatrix, DEFAULT_QUADRATURE_NODES,
};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub prior_mean: Vec<f64>,
    pub prior_cov: Vec<Vec<f64>>,
    pub h_matrix: Vec<Vec<f64>>,
    pub noise_cov: Vec<Vec<f64>>,
    pub observation: Vec<f64>,
    /// One rotational flow per entry.
    #[serde(default)]
    pub alphas: Vec<f64>,
    pub n_particles: usize,
    pub seed: u64,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default = "default_quadrature_nodes")]
    pub quadrature_nodes: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_generator: Option<Vec<Vec<f64>>>,
}

fn default_quadrature_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

/// The correlated two-dimensional example: prior `N(0, [[4, 1.5], [1.5, 2]])`,
/// `H = [1, 0]`, `R = 0.25`, `z = 3`, 40 particles, `α = 2.5`.
impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            prior_mean: vec![0.0, 0.0],
            prior_cov: vec![vec![4.0, 1.5], vec![1.5, 2.0]],
            h_matrix: vec![vec![1.0, 0.0]],
            noise_cov: vec![vec![0.25]],
            observation: vec![3.0],
            alphas: vec![2.5],
            n_particles: 40,
            seed: 42,
            integrator: IntegratorSpec::default(),
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
            output_dir: default_output_dir(),
            rotation_generator: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::general(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| ConfigError {
            message: format!("{}: {}", path.display(), e.message),
            ..e
        })
    }

    /// Checks every field and builds the homotopy path.
    pub fn validate(self) -> Result<Experiment, ConfigError> {
        let d = self.prior_mean.len();
        let m = self.observation.len();
        if d == 0 {
            return Err(ConfigError::field("prior_mean", "must not be empty"));
        }
        if m == 0 {
            return Err(ConfigError::field("observation", "must not be empty"));
        }
        let prior_mean = vector("prior_mean", &self.prior_mean)?;
        let observation = vector("observation", &self.observation)?;
        let prior_cov = spd("prior_cov", &self.prior_cov, d)?;
        let noise_cov = spd("noise_cov", &self.noise_cov, m)?;
        let h = matrix("h_matrix", &self.h_matrix, m, d)?;

        let mut seen = HashSet::new();
        for &a in &self.alphas {
            if !a.is_finite() {
                return Err(ConfigError::field("alphas", "entries must be finite"));
            }
            if !seen.insert(a.to_bits()) {
                return Err(ConfigError::field("alphas", format!("duplicate value {a}")));
            }
        }
        if self.n_particles < 2 {
            return Err(ConfigError::field(
                "n_particles",
                "need at least 2 particles",
            ));
        }
        if self.quadrature_nodes < MIN_QUADRATURE_NODES {
            return Err(ConfigError::field(
                "quadrature_nodes",
                format!("need at least {MIN_QUADRATURE_NODES}"),
            ));
        }
        self.integrator
            .validate()
            .map_err(|e| ConfigError::field("integrator", e.to_string()))?;
        let generator = match &self.rotation_generator {
            None => Antisymmetric::elementary(d),
            Some(rows) => Antisymmetric::new(matrix("rotation_generator", rows, d, d)?)
                .map_err(|e| ConfigError::field("rotation_generator", e.to_string()))?,
        };

        let prior = Gaussian::new(prior_mean, prior_cov)
            .map_err(|e| ConfigError::field("prior_mean", e.to_string()))?;
        let measurement = LinearMeasurement::new(h, noise_cov, observation)
            .map_err(|e| ConfigError::field("h_matrix", e.to_string()))?;
        let path = HomotopyPath::new(prior, measurement)
            .map_err(|e| ConfigError::field("h_matrix", e.to_string()))?;
        Ok(Experiment {
            config: self,
            path,
            generator,
        })
    }
}

fn vector(field: &str, v: &[f64]) -> Result<DVector<f64>, ConfigError> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(ConfigError::field(field, "entries must be finite"));
    }
    Ok(DVector::from_column_slice(v))
}

fn matrix(
    field: &str,
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
) -> Result<DMatrix<f64>, ConfigError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        let got = format!("{}x{}", rows.len(), rows.first().map_or(0, Vec::len));
        return Err(ConfigError::field(
            field,
            format!("expected {nrows}x{ncols}, got {got}"),
        ));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if !flat.iter().all(|x| x.is_finite()) {
        return Err(ConfigError::field(field, "entries must be finite"));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

fn spd(field: &str, rows: &[Vec<f64>], d: usize) -> Result<SpdMatrix, ConfigError> {
    SpdMatrix::new(matrix(field, rows, d, d)?).map_err(|e| {
        let msg = match e {
            Error::NotPositiveDefinite => "not positive definite".to_string(),
            other => other.to_string(),
        };
        ConfigError::field(field, msg)
    })
}

/// A validated configuration together with the objects it describes.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub path: HomotopyPath,
    pub generator: Antisymmetric,
}

impl Experiment {
    /// Potential, exact, then one rotational flow per configured α.
    pub fn flows(&self) -> Vec<AffineFlow<'_>> {
        let mut flows = vec![
            AffineFlow::potential(&self.path),
            AffineFlow::exact(&self.path),
        ];
        flows.extend(
            self.config
                .alphas
                .iter()
                .map(|&alpha| self.rotational(alpha)),
        );
        flows
    }

    pub fn rotational(&self, alpha: f64) -> AffineFlow<'_> {
        let kind = FlowKind::Rotational {
            alpha,
            generator: self.generator.clone(),
        };
        AffineFlow::new(&self.path, kind).expect("generator dimension checked during validation")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invalid(edit: impl FnOnce(&mut ExperimentConfig)) -> ConfigError {
        let mut cfg = ExperimentConfig::default();
        edit(&mut cfg);
        cfg.validate().unwrap_err()
    }

    #[test]
    fn default_is_valid() {
        let exp = ExperimentConfig::default().validate().unwrap();
        let labels: Vec<_> = exp.flows().iter().map(|f| f.label()).collect();
        assert_eq!(labels, ["potential", "exact", "rotational_alpha_2.5"]);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_field() {
        let cases: Vec<(&str, ConfigError)> = vec![
            (
                "prior_cov",
                invalid(|c| c.prior_cov = vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            ),
            (
                "prior_cov",
                invalid(|c| c.prior_cov = vec![vec![1.0, 0.5], vec![0.0, 1.0]]),
            ),
            ("noise_cov", invalid(|c| c.noise_cov = vec![vec![-1.0]])),
            ("h_matrix", invalid(|c| c.h_matrix = vec![vec![1.0]])),
            ("observation", invalid(|c| c.observation.clear())),
            ("n_particles", invalid(|c| c.n_particles = 1)),
            ("alphas", invalid(|c| c.alphas = vec![1.0, 1.0])),
            ("alphas", invalid(|c| c.alphas = vec![f64::NAN])),
            ("quadrature_nodes", invalid(|c| c.quadrature_nodes = 2)),
            ("integrator", invalid(|c| c.integrator.step_size = -1.0)),
            (
                "rotation_generator",
                invalid(|c| c.rotation_generator = Some(vec![vec![0.0, 1.0], vec![1.0, 0.0]])),
            ),
        ];
        for (field, err) in cases {
            assert_eq!(err.field.as_deref(), Some(field), "{err}");
            assert!(err.to_string().contains(field));
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = toml::to_string(&ExperimentConfig::default()).unwrap();
        for bad in [format!("bogus = 1\n{text}"), format!("{text}\nbogus = 1\n")] {
            let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
            assert!(err.message.contains("bogus"), "{err}");
        }
    }

    #[test]
    fn custom_generator_is_used() {
        let cfg = ExperimentConfig {
            rotation_generator: Some(vec![vec![0.0, -2.0], vec![2.0, 0.0]]),
            ..Default::default()
        };
        let exp = cfg.validate().unwrap();
        match exp.rotational(1.0).kind() {
            FlowKind::Rotational { generator, .. } => {
                assert_eq!(generator.as_matrix()[(1, 0)], 2.0)
            }
            other => panic!("{other:?}"),
        }
    }
}
