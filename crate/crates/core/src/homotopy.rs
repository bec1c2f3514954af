//! The Gaussian log-homotopy path between prior and posterior.
//!
//! For a prior `N(μ0, P0)` and a linear measurement `z = Hx + ε`,
//! `ε ~ N(0, R)`, the tempered density `p(x, λ) ∝ g(x)·h(x)^λ` stays Gaussian
//! with information-form moments
//!
//! ```text
//! P(λ)⁻¹ = P0⁻¹ + λ·HᵀR⁻¹H
//! μ(λ)   = P(λ)·(P0⁻¹μ0 + λ·HᵀR⁻¹z)
//! ```
//!
//! The normalizer `K(λ)` never appears: every quantity exposed here, and
//! everything built on top of it, depends only on moments and on centered
//! log-likelihood values in which it cancels.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gauss::{spd_inverse, symmetrize, Gaussian, SpdMatrix};

/// Linear-Gaussian likelihood `z = Hx + ε`, `ε ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMeasurement {
    h_matrix: DMatrix<f64>,
    noise_cov: SpdMatrix,
    observation: DVector<f64>,
}

impl LinearMeasurement {
    pub fn new(
        h_matrix: DMatrix<f64>,
        noise_cov: SpdMatrix,
        observation: DVector<f64>,
    ) -> Result<Self> {
        let m = observation.len();
        if h_matrix.nrows() != m || noise_cov.dim() != m {
            return Err(Error::DimensionMismatch(format!(
                "observation has length {m}, H has {} rows, R is {}x{}",
                h_matrix.nrows(),
                noise_cov.dim(),
                noise_cov.dim()
            )));
        }
        if !h_matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput("observation matrix"));
        }
        if !observation.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput("observation"));
        }
        Ok(LinearMeasurement {
            h_matrix,
            noise_cov,
            observation,
        })
    }

    pub fn h_matrix(&self) -> &DMatrix<f64> {
        &self.h_matrix
    }

    pub fn noise_cov(&self) -> &SpdMatrix {
        &self.noise_cov
    }

    pub fn observation(&self) -> &DVector<f64> {
        &self.observation
    }

    /// State dimension `d` (columns of `H`).
    pub fn state_dim(&self) -> usize {
        self.h_matrix.ncols()
    }
}

/// Moments of the homotopy density and their pseudo-time derivatives at a
/// single `λ`.
#[derive(Debug, Clone)]
pub struct PathState {
    pub lambda: f64,
    /// `P(λ)⁻¹`
    pub precision: SpdMatrix,
    /// `P(λ)`
    pub covariance: SpdMatrix,
    /// `μ(λ)`
    pub mean: DVector<f64>,
    /// `dμ/dλ = P(λ)·HᵀR⁻¹(z − Hμ(λ))`
    pub mean_rate: DVector<f64>,
    /// `d²μ/dλ² = −2·P(λ)·HᵀR⁻¹H·dμ/dλ`
    pub mean_accel: DVector<f64>,
}

/// The λ-indexed Gaussian path for one Bayesian update. Immutable.
#[derive(Debug, Clone)]
pub struct HomotopyPath {
    prior: Gaussian,
    measurement: LinearMeasurement,
    prior_precision: SpdMatrix,
    noise_precision: DMatrix<f64>,
    info_increment: DMatrix<f64>,
    info_vector: DVector<f64>,
    prior_info_vector: DVector<f64>,
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::LambdaOutOfRange(lambda))
    }
}

impl HomotopyPath {
    pub fn new(prior: Gaussian, measurement: LinearMeasurement) -> Result<Self> {
        if measurement.state_dim() != prior.dim() {
            return Err(Error::DimensionMismatch(format!(
                "prior has dimension {} but H has {} columns",
                prior.dim(),
                measurement.state_dim()
            )));
        }
        let prior_precision = spd_inverse(prior.cov());
        let noise_precision = spd_inverse(measurement.noise_cov()).into_inner();
        let h = measurement.h_matrix();
        let info_increment = symmetrize(&(h.transpose() * &noise_precision * h));
        let info_vector = h.transpose() * (&noise_precision * measurement.observation());
        let prior_info_vector = prior_precision.as_matrix() * prior.mean();
        Ok(HomotopyPath {
            prior,
            measurement,
            prior_precision,
            noise_precision,
            info_increment,
            info_vector,
            prior_info_vector,
        })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn prior(&self) -> &Gaussian {
        &self.prior
    }

    pub fn measurement(&self) -> &LinearMeasurement {
        &self.measurement
    }

    /// `P0⁻¹`
    pub fn prior_precision(&self) -> &SpdMatrix {
        &self.prior_precision
    }

    /// `R⁻¹`
    pub fn noise_precision(&self) -> &DMatrix<f64> {
        &self.noise_precision
    }

    /// `HᵀR⁻¹H`, positive semi-definite.
    pub fn info_increment(&self) -> &DMatrix<f64> {
        &self.info_increment
    }

    /// `HᵀR⁻¹z`
    pub fn info_vector(&self) -> &DVector<f64> {
        &self.info_vector
    }

    /// `P(λ)⁻¹`
    pub fn precision(&self, lambda: f64) -> Result<SpdMatrix> {
        check_lambda(lambda)?;
        Ok(self.precision_unchecked(lambda))
    }

    fn precision_unchecked(&self, lambda: f64) -> SpdMatrix {
        SpdMatrix::from_trusted(self.prior_precision.as_matrix() + &self.info_increment * lambda)
    }

    /// Moments and derivatives at `λ`, computed once.
    pub fn state(&self, lambda: f64) -> Result<PathState> {
        check_lambda(lambda)?;
        let precision = self.precision_unchecked(lambda);
        let covariance = if lambda == 0.0 {
            self.prior.cov().clone()
        } else {
            spd_inverse(&precision)
        };
        let mean = if lambda == 0.0 {
            self.prior.mean().clone()
        } else {
            covariance.as_matrix() * (&self.prior_info_vector + &self.info_vector * lambda)
        };
        let p = covariance.as_matrix();
        let mean_rate = p * (&self.info_vector - &self.info_increment * &mean);
        let mean_accel = p * (&self.info_increment * &mean_rate) * -2.0;
        Ok(PathState {
            lambda,
            precision,
            covariance,
            mean,
            mean_rate,
            mean_accel,
        })
    }

    /// `N(μ(λ), P(λ))`.
    pub fn moments(&self, lambda: f64) -> Result<Gaussian> {
        let s = self.state(lambda)?;
        Gaussian::new(s.mean, s.covariance)
    }

    /// `(dμ/dλ, d²μ/dλ²)`.
    pub fn mean_derivatives(&self, lambda: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let s = self.state(lambda)?;
        Ok((s.mean_rate, s.mean_accel))
    }

    /// `log h(x) − E_{p(·,λ)}[log h]`.
    pub fn centered_log_likelihood(&self, lambda: f64, x: &DVector<f64>) -> Result<f64> {
        let s = self.state(lambda)?;
        Ok(self.centered_log_likelihood_at(&s, x))
    }

    pub(crate) fn centered_log_likelihood_at(&self, state: &PathState, x: &DVector<f64>) -> f64 {
        let h = self.measurement.h_matrix();
        let z = self.measurement.observation();
        let r_inv = &self.noise_precision;
        let resid_x = z - h * x;
        let resid_mu = z - h * &state.mean;
        let spread = (r_inv * h * state.covariance.as_matrix() * h.transpose()).trace();
        -0.5 * resid_x.dot(&(r_inv * &resid_x))
            + 0.5 * (resid_mu.dot(&(r_inv * &resid_mu)) + spread)
    }

    /// Normalized `log p(x, λ)`.
    pub fn log_density(&self, lambda: f64, x: &DVector<f64>) -> Result<f64> {
        let s = self.state(lambda)?;
        let dx = x - &s.mean;
        let d = self.dim() as f64;
        let log_det_p = -s.precision.cholesky().determinant().ln();
        Ok(-0.5 * dx.dot(&(s.precision.as_matrix() * &dx))
            - 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det_p))
    }
}
