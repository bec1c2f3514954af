//! Ready-made problem setups.

use nalgebra::{DMatrix, DVector};

use crate::gauss::{Gaussian, SpdMatrix};
use crate::homotopy::{HomotopyPath, LinearMeasurement};

/// Prior covariance of the correlated two-dimensional scenario.
pub const CORRELATED_PRIOR_COV: [f64; 4] = [4.0, 1.5, 1.5, 2.0];

/// Two-dimensional update with a correlated zero-mean prior
/// `P0 = [[4, 1.5], [1.5, 2]]`, observing the first coordinate
/// (`H = [1, 0]`, `R = 0.25`) with value `z = 3`.
pub fn correlated_2d() -> HomotopyPath {
    with_prior_cov(&CORRELATED_PRIOR_COV)
}

/// Same measurement as [`correlated_2d`] with the uncorrelated prior
/// `diag(4, 2)`.
pub fn uncorrelated_2d() -> HomotopyPath {
    with_prior_cov(&[4.0, 0.0, 0.0, 2.0])
}

/// Same prior as [`correlated_2d`] with an uninformative measurement
/// (`H = 0`).
pub fn uninformative_2d() -> HomotopyPath {
    let prior = Gaussian::centered(SpdMatrix::from_row_slice(2, &CORRELATED_PRIOR_COV).unwrap());
    HomotopyPath::new(prior, first_coordinate_measurement(DMatrix::zeros(1, 2))).unwrap()
}

fn with_prior_cov(cov: &[f64; 4]) -> HomotopyPath {
    let prior = Gaussian::centered(SpdMatrix::from_row_slice(2, cov).unwrap());
    let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    HomotopyPath::new(prior, first_coordinate_measurement(h)).unwrap()
}

fn first_coordinate_measurement(h: DMatrix<f64>) -> LinearMeasurement {
    LinearMeasurement::new(
        h,
        SpdMatrix::from_diagonal(&[0.25]).unwrap(),
        DVector::from_vec(vec![3.0]),
    )
    .unwrap()
}
