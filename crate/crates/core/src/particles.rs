//! Transporting particle ensembles along `dx/dλ = v(x, λ)` from λ = 0 to 1.
//!
//! Positions are stored row-major (`n × d`). Each particle is advanced
//! independently, so the work is split across threads by particle index and
//! the output does not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{AffineField, AffineFlow};
use crate::gauss::{cholesky_sample, symmetrize, Gaussian, SpdMatrix};

/// Particles per rayon task.
const PAR_MIN_PARTICLES: usize = 2048;

/// Ensembles up to this size record every step under [`Recording::Auto`].
pub const AUTO_DENSE_RECORDING_MAX: usize = 100;

/// Stride used by [`Recording::Auto`] for larger ensembles.
pub const AUTO_SPARSE_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Explicit Euler, `x⁺ = x + h·v`.
    Euler,
    /// Classical fourth-order Runge–Kutta.
    Rk4,
    /// Second-order Taylor/Verlet step `x⁺ = x + h·v + ½h²·a`, with `a` the
    /// material acceleration of the flow. The flow is first order and
    /// non-autonomous, so this is a kinematic Verlet variant and is not
    /// claimed to be symplectic.
    Verlet,
    /// Euler with the step chosen from the stiffness metric each step.
    AdaptiveEuler,
}

impl Method {
    /// Same spelling as the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
            Method::Verlet => "verlet",
            Method::AdaptiveEuler => "adaptive_euler",
        }
    }
}

/// Which λ snapshots to keep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    /// Every step for small ensembles, every 10th step otherwise.
    #[default]
    Auto,
    Off,
    Every(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSpec {
    pub method: Method,
    /// Fixed step; the last step is shortened to land on λ = 1.
    pub step_size: f64,
    /// Local error target of the adaptive controller.
    pub tolerance: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub recording: Recording,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec {
            method: Method::Rk4,
            step_size: 1e-2,
            tolerance: 1e-3,
            min_step: 1e-6,
            max_step: 5e-2,
            recording: Recording::Auto,
        }
    }
}

impl IntegratorSpec {
    pub fn fixed(method: Method, step_size: f64) -> Self {
        IntegratorSpec {
            method,
            step_size,
            ..Default::default()
        }
    }

    pub fn adaptive(tolerance: f64, min_step: f64, max_step: f64) -> Self {
        IntegratorSpec {
            method: Method::AdaptiveEuler,
            tolerance,
            min_step,
            max_step,
            ..Default::default()
        }
    }

    pub fn with_recording(mut self, recording: Recording) -> Self {
        self.recording = recording;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self.method {
            Method::AdaptiveEuler => {
                if !positive(self.tolerance) {
                    return Err(Error::InvalidArgument("tolerance must be positive".into()));
                }
                check_bounds(self.min_step, self.max_step)?;
            }
            _ => {
                if !positive(self.step_size) {
                    return Err(Error::InvalidArgument("step size must be positive".into()));
                }
            }
        }
        if self.recording == Recording::Every(0) {
            return Err(Error::InvalidArgument(
                "recording stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_bounds(min_step: f64, max_step: f64) -> Result<()> {
    if !(min_step.is_finite() && max_step.is_finite() && min_step > 0.0 && min_step <= max_step) {
        return Err(Error::InvalidArgument(format!(
            "step bounds must satisfy 0 < min <= max, got [{min_step}, {max_step}]"
        )));
    }
    Ok(())
}

/// Ensemble positions at one λ.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub lambda: f64,
    pub positions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub lambda: f64,
    pub step_size: f64,
    /// Only evaluated by the adaptive method.
    pub stiffness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    seed: u64,
    trajectory: Vec<Snapshot>,
    step_log: Vec<StepRecord>,
}

impl ParticleEnsemble {
    /// `n` Cholesky samples of `g`.
    pub fn sample(g: &Gaussian, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "ensemble needs at least one particle".into(),
            ));
        }
        Self::from_points(&cholesky_sample(g, n, seed), seed)
    }

    pub fn from_points(points: &[DVector<f64>], seed: u64) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyPointSet)?.len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch(
                "particles of unequal dimension".into(),
            ));
        }
        let positions: Vec<f64> = points.iter().flat_map(|p| p.iter().copied()).collect();
        if !positions.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput("particle positions"));
        }
        Ok(ParticleEnsemble {
            dim,
            positions,
            seed,
            trajectory: Vec::new(),
            step_log: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major `n × d` coordinates.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        self.positions
            .chunks_exact(self.dim)
            .map(DVector::from_column_slice)
            .collect()
    }

    pub fn trajectory(&self) -> &[Snapshot] {
        &self.trajectory
    }

    pub fn step_log(&self) -> &[StepRecord] {
        &self.step_log
    }
}

/// Step from the stiffness metric: `h = sqrt(2·tol / stiffness)` clamped to
/// the upper bound, so that `½h²‖a‖ ≤ tol`. Falling under the lower bound is
/// an error rather than a silent clamp.
pub fn step_from_stiffness(
    stiffness: f64,
    tolerance: f64,
    bounds: (f64, f64),
    lambda: f64,
) -> Result<f64> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    check_bounds(bounds.0, bounds.1)?;
    if !stiffness.is_finite() {
        return Err(Error::NonFiniteState { lambda });
    }
    if stiffness == 0.0 {
        return Ok(bounds.1);
    }
    let step = (2.0 * tolerance / stiffness).sqrt();
    if step < bounds.0 {
        return Err(Error::StepBoundViolation {
            lambda,
            step,
            min_step: bounds.0,
        });
    }
    Ok(step.min(bounds.1))
}

/// Adaptive step for the ensemble `positions` at `λ`.
pub fn adaptive_step_controller(
    flow: &AffineFlow,
    lambda: f64,
    positions: &[DVector<f64>],
    tolerance: f64,
    bounds: (f64, f64),
) -> Result<f64> {
    let stiffness = flow.stiffness_metric(lambda, positions)?;
    step_from_stiffness(stiffness, tolerance, bounds, lambda)
}

fn par_max_norm(field: &AffineField, positions: &[f64]) -> f64 {
    let d = field.dim();
    positions
        .par_chunks(d * PAR_MIN_PARTICLES)
        .map(|block| field.max_norm_flat(block))
        .reduce(|| 0.0, f64::max)
}

/// Field evaluation routine, either generic or specialized to a dimension.
type EvalFn = fn(&AffineField, &[f64], &mut [f64]);

fn evaluator(d: usize) -> EvalFn {
    match d {
        1 => AffineField::eval_fixed::<1>,
        2 => AffineField::eval_fixed::<2>,
        3 => AffineField::eval_fixed::<3>,
        4 => AffineField::eval_fixed::<4>,
        _ => AffineField::eval_into,
    }
}

/// One fixed step of a particle update rule, frozen at a given λ.
enum Stepper {
    Euler {
        v: AffineField,
        h: f64,
    },
    Verlet {
        v: AffineField,
        a: AffineField,
        h: f64,
    },
    Rk4 {
        start: AffineField,
        mid: AffineField,
        end: AffineField,
        h: f64,
    },
}

impl Stepper {
    /// Advances one particle; `buf` holds at least `5·d` scratch values.
    #[inline(always)]
    fn advance(&self, eval: EvalFn, x: &mut [f64], buf: &mut [f64]) {
        let d = x.len();
        match self {
            Stepper::Euler { v, h } => {
                let vb = &mut buf[..d];
                eval(v, x, vb);
                for (xi, vi) in x.iter_mut().zip(&*vb) {
                    *xi += h * vi;
                }
            }
            Stepper::Verlet { v, a, h } => {
                let (vb, rest) = buf.split_at_mut(d);
                let ab = &mut rest[..d];
                eval(v, x, vb);
                eval(a, x, ab);
                let half_h2 = 0.5 * h * h;
                for ((xi, vi), ai) in x.iter_mut().zip(&*vb).zip(&*ab) {
                    *xi += h * vi + half_h2 * ai;
                }
            }
            Stepper::Rk4 { start, mid, end, h } => {
                let (k1, rest) = buf.split_at_mut(d);
                let (k2, rest) = rest.split_at_mut(d);
                let (k3, rest) = rest.split_at_mut(d);
                let (k4, rest) = rest.split_at_mut(d);
                let tmp = &mut rest[..d];
                eval(start, x, k1);
                axpy_into(tmp, x, 0.5 * h, k1);
                eval(mid, tmp, k2);
                axpy_into(tmp, x, 0.5 * h, k2);
                eval(mid, tmp, k3);
                axpy_into(tmp, x, *h, k3);
                eval(end, tmp, k4);
                let w = h / 6.0;
                for ((((xi, a), b), c), e) in x.iter_mut().zip(&*k1).zip(&*k2).zip(&*k3).zip(&*k4) {
                    *xi += w * (a + 2.0 * b + 2.0 * c + e);
                }
            }
        }
    }

    /// Applies the step to every particle; returns whether all coordinates
    /// stayed finite.
    fn apply(&self, positions: &mut [f64], d: usize) -> bool {
        let eval = evaluator(d);
        positions
            .par_chunks_mut(d * PAR_MIN_PARTICLES)
            .map(|block| {
                let mut buf = vec![0.0; 5 * d];
                let mut finite = true;
                for x in block.chunks_exact_mut(d) {
                    self.advance(eval, x, &mut buf);
                    finite &= x.iter().all(|v| v.is_finite());
                }
                finite
            })
            .reduce(|| true, |a, b| a && b)
    }
}

/// `out = x + s·k`
#[inline(always)]
fn axpy_into(out: &mut [f64], x: &[f64], s: f64, k: &[f64]) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + s * ki;
    }
}

/// Advances `initial` from λ = 0 to λ = 1 along `flow`.
pub fn integrate(
    flow: &AffineFlow,
    initial: &ParticleEnsemble,
    spec: &IntegratorSpec,
) -> Result<ParticleEnsemble> {
    spec.validate()?;
    let d = initial.dim;
    if d != flow.path().dim() {
        return Err(Error::DimensionMismatch(format!(
            "ensemble is {d}-dimensional, flow is {}-dimensional",
            flow.path().dim()
        )));
    }
    let n = initial.len();
    let stride = match spec.recording {
        Recording::Off => None,
        Recording::Every(k) => Some(k),
        Recording::Auto if n <= AUTO_DENSE_RECORDING_MAX => Some(1),
        Recording::Auto => Some(AUTO_SPARSE_STRIDE),
    };

    let mut positions = initial.positions.clone();
    let mut trajectory = Vec::new();
    let mut step_log = Vec::new();
    if stride.is_some() {
        trajectory.push(Snapshot {
            lambda: 0.0,
            positions: positions.clone(),
        });
    }

    let fixed_steps = (1.0 / spec.step_size - 1e-12).ceil().max(1.0) as usize;
    let mut lambda = 0.0;
    let mut k = 0usize;
    while lambda < 1.0 {
        let (next, stiffness) = match spec.method {
            Method::AdaptiveEuler => {
                let stiff = par_max_norm(&flow.acceleration_field(lambda)?, &positions);
                let h = step_from_stiffness(
                    stiff,
                    spec.tolerance,
                    (spec.min_step, spec.max_step),
                    lambda,
                )?;
                let next = if lambda + h >= 1.0 - 1e-12 {
                    1.0
                } else {
                    lambda + h
                };
                (next, Some(stiff))
            }
            _ if k + 1 >= fixed_steps => (1.0, None),
            _ => (((k + 1) as f64 * spec.step_size).min(1.0), None),
        };
        let h = next - lambda;
        let stepper = match spec.method {
            Method::Euler | Method::AdaptiveEuler => Stepper::Euler {
                v: flow.field(lambda)?,
                h,
            },
            Method::Verlet => Stepper::Verlet {
                v: flow.field(lambda)?,
                a: flow.acceleration_field(lambda)?,
                h,
            },
            Method::Rk4 => Stepper::Rk4 {
                start: flow.field(lambda)?,
                mid: flow.field((lambda + 0.5 * h).min(1.0))?,
                end: flow.field(next)?,
                h,
            },
        };
        if !stepper.apply(&mut positions, d) {
            return Err(Error::NonFiniteState { lambda: next });
        }
        step_log.push(StepRecord {
            lambda,
            step_size: h,
            stiffness,
        });
        k += 1;
        lambda = next;
        if let Some(stride) = stride {
            if k % stride == 0 || lambda >= 1.0 {
                trajectory.push(Snapshot {
                    lambda,
                    positions: positions.clone(),
                });
            }
        }
    }

    Ok(ParticleEnsemble {
        dim: d,
        positions,
        seed: initial.seed,
        trajectory,
        step_log,
    })
}

/// Sample mean and unbiased sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMoments {
    pub mean: DVector<f64>,
    /// Symmetrized; may be singular for small or degenerate ensembles.
    pub cov: DMatrix<f64>,
}

impl EmpiricalMoments {
    pub fn to_gaussian(&self) -> Result<Gaussian> {
        Gaussian::new(self.mean.clone(), SpdMatrix::new(self.cov.clone())?)
    }
}

pub fn empirical_moments(ensemble: &ParticleEnsemble) -> Result<EmpiricalMoments> {
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::TooFewParticles(n));
    }
    let d = ensemble.dim;
    let mut mean = DVector::zeros(d);
    for x in ensemble.positions.chunks_exact(d) {
        for i in 0..d {
            mean[i] += x[i];
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for x in ensemble.positions.chunks_exact(d) {
        for i in 0..d {
            let di = x[i] - mean[i];
            for j in 0..d {
                cov[(i, j)] += di * (x[j] - mean[j]);
            }
        }
    }
    cov /= (n - 1) as f64;
    Ok(EmpiricalMoments {
        mean,
        cov: symmetrize(&cov),
    })
}

/// Mean over particles of the polyline length through the recorded
/// snapshots; `None` with fewer than two snapshots.
pub fn mean_path_length(ensemble: &ParticleEnsemble) -> Option<f64> {
    let snaps = ensemble.trajectory();
    if snaps.len() < 2 {
        return None;
    }
    let d = ensemble.dim;
    let total: f64 = snaps
        .windows(2)
        .map(|w| {
            w[0].positions
                .chunks_exact(d)
                .zip(w[1].positions.chunks_exact(d))
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(p, q)| (q - p).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
        })
        .sum();
    Some(total / ensemble.len() as f64)
}
