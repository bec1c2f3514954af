//! Affine velocity fields that transport the homotopy density.
//!
//! Every flow here has the form `v(x, λ) = M(λ)(x − μ(λ)) + dμ/dλ`. Any `M`
//! with `P(λ)⁻¹M + MᵀP(λ)⁻¹ = −HᵀR⁻¹H` moves particles along the same density
//! path; the kinds differ only in which solution they pick:
//!
//! * [`FlowKind::Potential`]: the unique symmetric solution, i.e. a gradient
//!   field. This is the minimum kinetic-action flow.
//! * [`FlowKind::Exact`]: the classical closed form `A(λ) = −½P(λ)HᵀR⁻¹H`,
//!   which is not symmetric when the prior is correlated.
//! * [`FlowKind::Rotational`]: the potential flow plus `αJ∇log p` for an
//!   antisymmetric generator `J`, a divergence-free (w.r.t. `p`) addition.
//!
//! Accelerations are material derivatives `Dv/Dλ = ∂v/∂λ + (v·∇)v`. For an
//! affine field this is again affine: `(M′ + M²)(x − μ) + d²μ/dλ²`. The
//! scalar velocity potential and the Lagrange multiplier of the
//! Hamilton–Jacobi system are not materialized; only their gradients are.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gauss::{solve_lyapunov, spd_inverse, SpdMatrix};
use crate::homotopy::{HomotopyPath, PathState};

/// An exactly antisymmetric matrix (`J + Jᵀ = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Antisymmetric(DMatrix<f64>);

impl Antisymmetric {
    pub fn new(j: DMatrix<f64>) -> Result<Self> {
        if !j.is_square() {
            return Err(Error::DimensionMismatch("generator must be square".into()));
        }
        if !j.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput("generator"));
        }
        if (&j + j.transpose()).iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument(
                "rotation generator must satisfy J + Jᵀ = 0 exactly".into(),
            ));
        }
        Ok(Antisymmetric(j))
    }

    /// `+1` at (0, 1), `−1` at (1, 0), zero elsewhere. In two dimensions this
    /// is the quarter-turn `[[0, 1], [−1, 0]]`; for `d = 1` it is zero.
    pub fn elementary(d: usize) -> Self {
        let mut j = DMatrix::zeros(d, d);
        if d >= 2 {
            j[(0, 1)] = 1.0;
            j[(1, 0)] = -1.0;
        }
        Antisymmetric(j)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Which solution of the Jacobian constraint a flow uses.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind {
    Potential,
    Exact,
    Rotational {
        alpha: f64,
        generator: Antisymmetric,
    },
}

/// The frozen-λ affine map `x ↦ J(x − c) + b`.
#[derive(Debug, Clone)]
pub struct AffineField {
    jacobian: DMatrix<f64>,
    center: DVector<f64>,
    offset: DVector<f64>,
    // row-major `J` and `b − Jc` for the slice kernel
    rows: Vec<f64>,
    shift: Vec<f64>,
}

impl AffineField {
    pub fn new(jacobian: DMatrix<f64>, center: DVector<f64>, offset: DVector<f64>) -> Self {
        let rows = jacobian.transpose().as_slice().to_vec();
        let shift = (&offset - &jacobian * &center).as_slice().to_vec();
        AffineField {
            jacobian,
            center,
            offset,
            rows,
            shift,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.jacobian * (x - &self.center) + &self.offset
    }

    /// Allocation-free evaluation on a coordinate slice.
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.shift.len();
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d);
        for ((o, row), s) in out
            .iter_mut()
            .zip(self.rows.chunks_exact(d))
            .zip(&self.shift)
        {
            *o = s + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// [`eval_into`](Self::eval_into) with the dimension known at compile
    /// time. `D` must equal [`dim`](Self::dim).
    #[inline(always)]
    pub fn eval_fixed<const D: usize>(&self, x: &[f64], out: &mut [f64]) {
        let x: &[f64; D] = x.try_into().expect("dimension mismatch");
        let out: &mut [f64; D] = out.try_into().expect("dimension mismatch");
        let rows: &[f64] = &self.rows[..D * D];
        let shift: &[f64; D] = self.shift[..D].try_into().expect("dimension mismatch");
        for i in 0..D {
            let mut acc = shift[i];
            for k in 0..D {
                acc += rows[i * D + k] * x[k];
            }
            out[i] = acc;
        }
    }

    /// Largest Euclidean norm of the field over a row-major point block.
    pub fn max_norm_flat(&self, points: &[f64]) -> f64 {
        let d = self.dim();
        let mut buf = vec![0.0; d];
        points
            .chunks_exact(d)
            .map(|x| {
                self.eval_into(x, &mut buf);
                buf.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// A λ-indexed affine flow over a homotopy path.
#[derive(Debug, Clone)]
pub struct AffineFlow<'p> {
    path: &'p HomotopyPath,
    kind: FlowKind,
}

impl<'p> AffineFlow<'p> {
    pub fn new(path: &'p HomotopyPath, kind: FlowKind) -> Result<Self> {
        if let FlowKind::Rotational { alpha, generator } = &kind {
            if !alpha.is_finite() {
                return Err(Error::NonFiniteInput("rotation strength"));
            }
            if generator.dim() != path.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "generator is {0}x{0} for a {1}-dimensional state",
                    generator.dim(),
                    path.dim()
                )));
            }
        }
        Ok(AffineFlow { path, kind })
    }

    pub fn potential(path: &'p HomotopyPath) -> Self {
        AffineFlow {
            path,
            kind: FlowKind::Potential,
        }
    }

    pub fn exact(path: &'p HomotopyPath) -> Self {
        AffineFlow {
            path,
            kind: FlowKind::Exact,
        }
    }

    /// Rotational flow with the elementary generator.
    pub fn rotational(path: &'p HomotopyPath, alpha: f64) -> Result<Self> {
        Self::new(
            path,
            FlowKind::Rotational {
                alpha,
                generator: Antisymmetric::elementary(path.dim()),
            },
        )
    }

    pub fn path(&self) -> &'p HomotopyPath {
        self.path
    }

    pub fn kind(&self) -> &FlowKind {
        &self.kind
    }

    /// Short identifier, usable in file names: `potential`, `exact`,
    /// `rotational_alpha_<α>`.
    pub fn label(&self) -> String {
        match &self.kind {
            FlowKind::Potential => "potential".into(),
            FlowKind::Exact => "exact".into(),
            FlowKind::Rotational { alpha, .. } => format!("rotational_alpha_{alpha}"),
        }
    }

    /// `M(λ)`.
    pub fn jacobian(&self, lambda: f64) -> Result<DMatrix<f64>> {
        let s = self.path.state(lambda)?;
        self.jacobian_at(&s)
    }

    pub(crate) fn jacobian_at(&self, s: &PathState) -> Result<DMatrix<f64>> {
        let q = self.path.info_increment();
        match &self.kind {
            FlowKind::Potential => solve_lyapunov(&s.precision, q),
            FlowKind::Exact => Ok(s.covariance.as_matrix() * q * -0.5),
            FlowKind::Rotational { alpha, generator } => {
                let sym = solve_lyapunov(&s.precision, q)?;
                Ok(sym - generator.as_matrix() * s.precision.as_matrix() * *alpha)
            }
        }
    }

    /// `dM/dλ`, from differentiating the equation that defines `M`.
    pub fn jacobian_rate(&self, lambda: f64) -> Result<DMatrix<f64>> {
        let s = self.path.state(lambda)?;
        let m = self.jacobian_at(&s)?;
        self.jacobian_rate_at(&s, &m)
    }

    fn jacobian_rate_at(&self, s: &PathState, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let q = self.path.info_increment();
        // d(P⁻¹)/dλ = Q, so the symmetric solution S moves with
        // P⁻¹S′ + S′P⁻¹ = −(QS + SQ).
        let sym_rate = |sym: &DMatrix<f64>| solve_lyapunov(&s.precision, &(q * sym + sym * q));
        match &self.kind {
            FlowKind::Potential => sym_rate(m),
            FlowKind::Exact => {
                // dP/dλ = −PQP, A′ = −½P′Q
                let p = s.covariance.as_matrix();
                let p_rate = -(p * q * p);
                Ok(p_rate * q * -0.5)
            }
            FlowKind::Rotational { alpha, generator } => {
                let sym = m + generator.as_matrix() * s.precision.as_matrix() * *alpha;
                Ok(sym_rate(&sym)? - generator.as_matrix() * q * *alpha)
            }
        }
    }

    /// The velocity field frozen at `λ`.
    pub fn field(&self, lambda: f64) -> Result<AffineField> {
        let s = self.path.state(lambda)?;
        Ok(AffineField::new(self.jacobian_at(&s)?, s.mean, s.mean_rate))
    }

    /// The material-acceleration field frozen at `λ`.
    pub fn acceleration_field(&self, lambda: f64) -> Result<AffineField> {
        let s = self.path.state(lambda)?;
        let m = self.jacobian_at(&s)?;
        let rate = self.jacobian_rate_at(&s, &m)?;
        Ok(AffineField::new(rate + &m * &m, s.mean, s.mean_accel))
    }

    /// `v(x, λ)`.
    pub fn velocity(&self, lambda: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x)?;
        Ok(self.field(lambda)?.eval(x))
    }

    /// `Dv/Dλ` at `x`.
    pub fn acceleration(&self, lambda: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x)?;
        Ok(self.acceleration_field(lambda)?.eval(x))
    }

    /// Largest acceleration norm over `points`, used as a stiffness measure.
    pub fn stiffness_metric(&self, lambda: f64, points: &[DVector<f64>]) -> Result<f64> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let field = self.acceleration_field(lambda)?;
        Ok(points
            .iter()
            .map(|x| field.eval(x).norm())
            .fold(0.0, f64::max))
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.path.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has length {} for a {}-dimensional state",
                x.len(),
                self.path.dim()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput("point"));
        }
        Ok(())
    }
}

/// `A(λ) = −½·P0Hᵀ(λHP0Hᵀ + R)⁻¹H`, the exact-flow gain in its original
/// (innovation-covariance) form.
pub fn exact_gain_direct(path: &HomotopyPath, lambda: f64) -> Result<DMatrix<f64>> {
    crate::homotopy::check_lambda(lambda)?;
    let p0 = path.prior().cov().as_matrix();
    let h = path.measurement().h_matrix();
    let r = path.measurement().noise_cov().as_matrix();
    let innovation = SpdMatrix::new(h * p0 * h.transpose() * lambda + r)?;
    Ok(p0 * h.transpose() * spd_inverse(&innovation).as_matrix() * h * -0.5)
}

/// Exact-flow offset `b(λ) = (I + 2λA)[(I + λA)P0HᵀR⁻¹z + Aμ0]`.
pub fn exact_offset(path: &HomotopyPath, lambda: f64) -> Result<DVector<f64>> {
    let a = exact_gain_direct(path, lambda)?;
    let d = path.dim();
    let eye = DMatrix::<f64>::identity(d, d);
    let p0 = path.prior().cov().as_matrix();
    let inner = (&eye + &a * lambda) * p0 * path.info_vector() + &a * path.prior().mean();
    Ok((eye + &a * (2.0 * lambda)) * inner)
}

/// Exact-flow velocity evaluated as `A(λ)x + b(λ)`.
pub fn exact_velocity_affine(
    path: &HomotopyPath,
    lambda: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(exact_gain_direct(path, lambda)? * x + exact_offset(path, lambda)?)
}

/// Gaussian score `∇log p(x, λ) = −P(λ)⁻¹(x − μ(λ))`.
pub fn log_density_gradient(
    path: &HomotopyPath,
    lambda: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = path.state(lambda)?;
    Ok(-(s.precision.as_matrix() * (x - &s.mean)))
}
