//! Empirical order of accuracy of the fixed-step integrators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::AffineFlow;
use crate::particles::{integrate, IntegratorSpec, Method, ParticleEnsemble, Recording};

/// Step sizes of the standard study: 1/40, 1/80, 1/160, 1/320.
pub const STUDY_STEPS: [f64; 4] = [1.0 / 40.0, 1.0 / 80.0, 1.0 / 160.0, 1.0 / 320.0];

/// RK4 step of the reference solution.
pub const REFERENCE_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub method: Method,
    pub step_size: f64,
    /// Largest endpoint distance to the reference over all particles.
    pub endpoint_error: f64,
}

/// Endpoint errors of each method at each step against a fine RK4 run.
pub fn convergence_study(
    flow: &AffineFlow,
    initial: &ParticleEnsemble,
    methods: &[Method],
    steps: &[f64],
    reference_step: f64,
) -> Result<Vec<ConvergenceRow>> {
    if methods.contains(&Method::AdaptiveEuler) {
        return Err(Error::InvalidArgument(
            "convergence study needs fixed-step methods".into(),
        ));
    }
    let fixed = |method, h| IntegratorSpec::fixed(method, h).with_recording(Recording::Off);
    let reference = integrate(flow, initial, &fixed(Method::Rk4, reference_step))?;
    let d = initial.dim();
    let mut rows = Vec::with_capacity(methods.len() * steps.len());
    for &method in methods {
        for &h in steps {
            let out = integrate(flow, initial, &fixed(method, h))?;
            let err = out
                .positions()
                .chunks_exact(d)
                .zip(reference.positions().chunks_exact(d))
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(p, q)| (p - q).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            rows.push(ConvergenceRow {
                method,
                step_size: h,
                endpoint_error: err,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|(h, e)| (h.ln(), e.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Fitted slope per method, in the order methods first appear in `rows`.
pub fn slopes(rows: &[ConvergenceRow]) -> Vec<(Method, f64)> {
    let mut methods: Vec<Method> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| (r.step_size, r.endpoint_error))
                .collect();
            (m, loglog_slope(&pts))
        })
        .collect()
}
