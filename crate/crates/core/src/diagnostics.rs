//! Kinetic energy, total action and PDE residuals of affine flows.
//!
//! The Hamilton–Jacobi equation is only checked in gradient form (the
//! Euler equation, [`euler_residual`]). Its scalar form involves the
//! Lagrange multiplier itself, which is fixed only up to an additive
//! function of `λ`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{AffineField, AffineFlow, Antisymmetric};
use crate::homotopy::{check_lambda, HomotopyPath, PathState};
use crate::quadrature::CompositeRule;

/// Smallest accepted quadrature node count.
pub const MIN_QUADRATURE_NODES: usize = 8;

/// Node count used when callers have no preference.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// Kinetic energy profile and action of one flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub flow_label: String,
    pub total_action: f64,
    /// `(λ, E(λ))` at both endpoints and every quadrature node, sorted by λ.
    pub energy_samples: Vec<(f64, f64)>,
    pub quadrature_nodes: usize,
}

fn rule(quadrature_nodes: usize) -> Result<CompositeRule> {
    if quadrature_nodes < MIN_QUADRATURE_NODES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_QUADRATURE_NODES} quadrature nodes, got {quadrature_nodes}"
        )));
    }
    Ok(CompositeRule::unit_interval(quadrature_nodes))
}

fn energy_at(flow: &AffineFlow, s: &PathState) -> Result<f64> {
    let m = flow.jacobian_at(s)?;
    let spread = (m.transpose() * &m * s.covariance.as_matrix()).trace();
    Ok(0.5 * (spread + s.mean_rate.norm_squared()))
}

/// `E(λ) = ∫½p‖v‖²dx = ½[tr(MᵀM·P(λ)) + ‖dμ/dλ‖²]`, in closed form.
pub fn kinetic_energy(flow: &AffineFlow, lambda: f64) -> Result<f64> {
    let s = flow.path().state(lambda)?;
    energy_at(flow, &s)
}

/// `∫₀¹E(λ)dλ` by composite Gauss–Legendre quadrature.
pub fn total_action(flow: &AffineFlow, quadrature_nodes: usize) -> Result<ActionReport> {
    let rule = rule(quadrature_nodes)?;
    let mut samples = Vec::with_capacity(rule.len() + 2);
    samples.push((0.0, kinetic_energy(flow, 0.0)?));
    let mut total = 0.0;
    for (&l, &w) in rule.nodes().iter().zip(rule.weights()) {
        let e = kinetic_energy(flow, l)?;
        total += w * e;
        samples.push((l, e));
    }
    samples.push((1.0, kinetic_energy(flow, 1.0)?));
    Ok(ActionReport {
        flow_label: flow.label(),
        total_action: total,
        energy_samples: samples,
        quadrature_nodes: rule.len(),
    })
}

/// `c = ½∫₀¹tr(P(λ)⁻¹)dλ`, the coefficient in `S(α) = S* + cα²` for a
/// generator with `JᵀJ = I` (the planar quarter-turn).
pub fn action_decomposition_constant(path: &HomotopyPath, quadrature_nodes: usize) -> Result<f64> {
    let rule = rule(quadrature_nodes)?;
    let half = rule.try_integrate(|l| Ok::<_, Error>(path.precision(l)?.as_matrix().trace()))?;
    Ok(0.5 * half)
}

/// `c = ½∫₀¹tr(JᵀJ·P(λ)⁻¹)dλ` for an arbitrary antisymmetric generator.
pub fn action_decomposition_constant_for(
    path: &HomotopyPath,
    generator: &Antisymmetric,
    quadrature_nodes: usize,
) -> Result<f64> {
    let rule = rule(quadrature_nodes)?;
    let j = generator.as_matrix();
    let jtj = j.transpose() * j;
    let half =
        rule.try_integrate(|l| Ok::<_, Error>((&jtj * path.precision(l)?.as_matrix()).trace()))?;
    Ok(0.5 * half)
}

/// Signed residual of `−∇·(pv)/p = log h − E_p[log h]` at `x`.
///
/// Uses `∇·(pv)/p = tr(M) + v·∇log p` for the affine field; the rotational
/// addition has zero trace because `J` is antisymmetric and `P⁻¹` symmetric.
pub fn master_equation_residual(flow: &AffineFlow, lambda: f64, x: &DVector<f64>) -> Result<f64> {
    master_equation_residual_of_field(flow.path(), lambda, &flow.field(lambda)?, x)
}

/// [`master_equation_residual`] for an arbitrary affine field, e.g. a
/// hand-modified one.
pub fn master_equation_residual_of_field(
    path: &HomotopyPath,
    lambda: f64,
    field: &AffineField,
    x: &DVector<f64>,
) -> Result<f64> {
    if x.len() != path.dim() || field.dim() != path.dim() {
        return Err(Error::DimensionMismatch(
            "point or field does not match the state".into(),
        ));
    }
    let s = path.state(lambda)?;
    let v = field.eval(x);
    let score = -(s.precision.as_matrix() * (x - &s.mean));
    let transport = -(field.jacobian().trace() + v.dot(&score));
    Ok(transport - path.centered_log_likelihood_at(&s, x))
}

fn rk4_step(flow: &AffineFlow, lambda: f64, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    let k1 = flow.velocity(lambda, x)?;
    let k2 = flow.velocity(lambda + h / 2.0, &(x + &k1 * (h / 2.0)))?;
    let k3 = flow.velocity(lambda + h / 2.0, &(x + &k2 * (h / 2.0)))?;
    let k4 = flow.velocity(lambda + h, &(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Norm of the gap between a central finite-difference material derivative
/// and the analytic acceleration field.
///
/// The trajectory through `(λ, x)` is advanced one RK4 step of `±fd_step`;
/// the difference quotient `(v(x₊, λ+h) − v(x₋, λ−h)) / 2h` then estimates
/// `Dv/Dλ` to `O(h²)`.
pub fn euler_residual(
    flow: &AffineFlow,
    lambda: f64,
    x: &DVector<f64>,
    fd_step: f64,
) -> Result<f64> {
    if !(fd_step > 0.0 && fd_step <= 1e-3) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must lie in (0, 1e-3], got {fd_step}"
        )));
    }
    check_lambda(lambda - fd_step)?;
    check_lambda(lambda + fd_step)?;
    let fwd = rk4_step(flow, lambda, x, fd_step)?;
    let back = rk4_step(flow, lambda, x, -fd_step)?;
    let fd = (flow.velocity(lambda + fd_step, &fwd)? - flow.velocity(lambda - fd_step, &back)?)
        / (2.0 * fd_step);
    Ok((fd - flow.acceleration(lambda, x)?).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::FlowKind;
    use crate::gauss::cholesky_sample;
    use crate::scenarios::{correlated_2d, uninformative_2d};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Monte Carlo estimate of `E_p[½‖v‖²]` and its standard error.
    fn energy_monte_carlo(flow: &AffineFlow, lambda: f64, n: usize, seed: u64) -> (f64, f64) {
        let g = flow.path().moments(lambda).unwrap();
        let vals: Vec<f64> = cholesky_sample(&g, n, seed)
            .iter()
            .map(|x| 0.5 * flow.velocity(lambda, x).unwrap().norm_squared())
            .collect();
        let n = n as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn energy_matches_monte_carlo() {
        let path = correlated_2d();
        let flow = AffineFlow::potential(&path);
        for l in [0.0, 0.2, 0.7] {
            let (mc, se) = energy_monte_carlo(&flow, l, 100_000, 21);
            let exact = kinetic_energy(&flow, l).unwrap();
            assert!(
                (mc - exact).abs() < 3.0 * se,
                "λ={l}: {mc} vs {exact} (se {se})"
            );
        }
    }

    #[test]
    fn no_information_means_no_energy() {
        let path = uninformative_2d();
        for l in [0.0, 0.5, 1.0] {
            assert_eq!(
                kinetic_energy(&AffineFlow::potential(&path), l).unwrap(),
                0.0
            );
            assert_eq!(kinetic_energy(&AffineFlow::exact(&path), l).unwrap(), 0.0);
        }
    }

    #[test]
    fn rotation_adds_half_alpha_squared_trace() {
        let path = correlated_2d();
        let pot = AffineFlow::potential(&path);
        for alpha in [0.5, 1.0, 2.5] {
            let rot = AffineFlow::rotational(&path, alpha).unwrap();
            for l in [0.0, 0.5, 1.0] {
                let excess = kinetic_energy(&rot, l).unwrap() - kinetic_energy(&pot, l).unwrap();
                let expected = 0.5 * alpha * alpha * path.precision(l).unwrap().as_matrix().trace();
                assert!(
                    (excess - expected).abs() < 1e-9 * expected.max(1.0),
                    "α={alpha} λ={l}"
                );
            }
        }
    }

    #[test]
    fn action_values() {
        let path = correlated_2d();
        let pot = total_action(&AffineFlow::potential(&path), 64).unwrap();
        let ex = total_action(&AffineFlow::exact(&path), 64).unwrap();
        let rot = total_action(&AffineFlow::rotational(&path, 2.5).unwrap(), 64).unwrap();
        assert!(
            (pot.total_action - 31.72).abs() < 0.02,
            "{}",
            pot.total_action
        );
        assert!(
            (ex.total_action - 31.92).abs() < 0.02,
            "{}",
            ex.total_action
        );
        assert!(
            (rot.total_action - 41.23).abs() < 0.02,
            "{}",
            rot.total_action
        );
        assert!(
            pot.total_action + 0.01 < ex.total_action && ex.total_action + 0.01 < rot.total_action
        );
    }

    #[test]
    fn action_report_shape() {
        let path = correlated_2d();
        let rep = total_action(&AffineFlow::exact(&path), 64).unwrap();
        assert_eq!(rep.flow_label, "exact");
        assert_eq!(rep.quadrature_nodes, 64);
        assert_eq!(rep.energy_samples.len(), 66);
        assert_eq!(rep.energy_samples.first().unwrap().0, 0.0);
        assert_eq!(rep.energy_samples.last().unwrap().0, 1.0);
        assert!(rep.energy_samples.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(rep.energy_samples.iter().all(|s| s.1 >= 0.0));
        assert!(total_action(&AffineFlow::exact(&path), 7).is_err());
    }

    #[test]
    fn quadrature_converges_under_node_doubling() {
        let path = correlated_2d();
        for flow in [
            AffineFlow::potential(&path),
            AffineFlow::exact(&path),
            AffineFlow::rotational(&path, 2.5).unwrap(),
        ] {
            let a = total_action(&flow, 64).unwrap().total_action;
            let b = total_action(&flow, 128).unwrap().total_action;
            assert!((a - b).abs() < 1e-6, "{}: {a} vs {b}", flow.label());
        }
    }

    #[test]
    fn decomposition_constant_closed_form() {
        let path = correlated_2d();
        let c = action_decomposition_constant(&path, 64).unwrap();
        // tr P0⁻¹ = 6/5.75, tr Q = 4: ½(6/5.75 + 2)
        let closed = 0.5 * (6.0 / 5.75 + 2.0);
        assert!((c - closed).abs() < 1e-12);
        assert!((c - 1.522).abs() < 1e-3);
        let j = crate::flows::Antisymmetric::elementary(2);
        assert!((action_decomposition_constant_for(&path, &j, 64).unwrap() - c).abs() < 1e-12);

        let blind = uninformative_2d();
        let c0 = action_decomposition_constant(&blind, 8).unwrap();
        assert!((c0 - 0.5 * blind.prior_precision().as_matrix().trace()).abs() < 1e-13);
    }

    #[test]
    fn decomposition_predicts_rotational_action() {
        let path = correlated_2d();
        let s_star = total_action(&AffineFlow::potential(&path), 64)
            .unwrap()
            .total_action;
        let c = action_decomposition_constant(&path, 64).unwrap();
        assert!((s_star + c * 6.25 - 41.23).abs() < 0.03);
        for alpha in [0.5, 1.0, 2.5] {
            let s = total_action(&AffineFlow::rotational(&path, alpha).unwrap(), 64)
                .unwrap()
                .total_action;
            assert!(((s - s_star) - c * alpha * alpha).abs() < 1e-4 * c * alpha * alpha);
        }
    }

    #[test]
    fn master_residual_vanishes_for_every_flow() {
        let path = correlated_2d();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let flows = [
            AffineFlow::potential(&path),
            AffineFlow::exact(&path),
            AffineFlow::rotational(&path, 2.5).unwrap(),
        ];
        for k in 0..20 {
            let l = k as f64 / 19.0;
            for _ in 0..100 {
                let x = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
                for f in &flows {
                    let r = master_equation_residual(f, l, &x).unwrap();
                    assert!(r.abs() < 1e-9, "{} λ={l}: {r}", f.label());
                }
            }
        }
    }

    #[test]
    fn corrupted_jacobian_is_detected() {
        let path = correlated_2d();
        let flow = AffineFlow::potential(&path);
        let field = flow.field(0.5).unwrap();
        let bad = AffineField::new(
            field.jacobian() * 1.1,
            field.center().clone(),
            field.offset().clone(),
        );
        let pts = cholesky_sample(&path.moments(0.5).unwrap(), 50, 9);
        let worst = pts
            .iter()
            .map(|x| {
                master_equation_residual_of_field(&path, 0.5, &bad, x)
                    .unwrap()
                    .abs()
            })
            .fold(0.0, f64::max);
        assert!(worst > 0.01, "{worst}");
    }

    #[test]
    fn rotation_leaves_the_residual_unchanged() {
        let path = correlated_2d();
        let a0 = AffineFlow::rotational(&path, 0.0).unwrap();
        let a5 = AffineFlow::rotational(&path, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let l: f64 = rng.random();
            let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let r0 = master_equation_residual(&a0, l, &x).unwrap();
            let r5 = master_equation_residual(&a5, l, &x).unwrap();
            assert!((r0 - r5).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_residual_is_second_order() {
        let path = correlated_2d();
        let flow = AffineFlow::potential(&path);
        let x = DVector::from_vec(vec![1.5, -0.5]);
        let coarse = euler_residual(&flow, 0.5, &x, 1e-3).unwrap();
        let fine = euler_residual(&flow, 0.5, &x, 5e-4).unwrap();
        let ratio = coarse / fine;
        assert!(
            (ratio - 4.0).abs() < 0.5,
            "ratio {ratio} ({coarse} / {fine})"
        );
    }

    #[test]
    fn euler_residual_small_cases() {
        let path = correlated_2d();
        let flow = AffineFlow::potential(&path);
        let mu = path.state(0.5).unwrap().mean;
        assert!(euler_residual(&flow, 0.5, &mu, 1e-4).unwrap() < 1e-5);

        let blind = uninformative_2d();
        let r = euler_residual(&AffineFlow::potential(&blind), 0.5, &mu, 1e-4).unwrap();
        assert_eq!(r, 0.0);

        assert!(matches!(
            euler_residual(&flow, 0.5, &mu, 1e-2),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            euler_residual(&flow, 0.0, &mu, 1e-4),
            Err(Error::LambdaOutOfRange(_))
        ));
    }

    #[test]
    fn custom_generator_constant() {
        let path = correlated_2d();
        let j =
            crate::flows::Antisymmetric::new(DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]))
                .unwrap();
        let kind = FlowKind::Rotational {
            alpha: 1.0,
            generator: j.clone(),
        };
        let rot = AffineFlow::new(&path, kind).unwrap();
        let s_star = total_action(&AffineFlow::potential(&path), 64)
            .unwrap()
            .total_action;
        let s = total_action(&rot, 64).unwrap().total_action;
        let c = action_decomposition_constant_for(&path, &j, 64).unwrap();
        assert!(((s - s_star) - c).abs() < 1e-8 * c);
    }
}
