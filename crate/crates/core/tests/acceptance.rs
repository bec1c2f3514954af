//! Acceptance criteria for the correlated two-dimensional update.
//!
//! Each test prints one `criterion N: PASS|FAIL` line with the measured
//! values, then asserts. Run with
//! `cargo test -p varflow-core --test acceptance -- --nocapture --test-threads=1`
//! to see the lines in order.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varflow::convergence::{convergence_study, slopes, REFERENCE_STEP, STUDY_STEPS};
use varflow::gauss::asymmetry;
use varflow::{
    action_decomposition_constant, empirical_moments, euler_residual, integrate, kinetic_energy,
    master_equation_residual, master_equation_residual_of_field, scenarios, total_action,
    AffineField, AffineFlow, DMatrix, DVector, HomotopyPath, IntegratorSpec, Method,
    ParticleEnsemble, Recording,
};

const NODES: usize = 64;

fn verdict(id: u32, title: &str, pass: bool, detail: &str) {
    println!(
        "criterion {id:>2}: {} | {title} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({title}) failed: {detail}");
}

fn three_flows(path: &HomotopyPath) -> [AffineFlow<'_>; 3] {
    [
        AffineFlow::potential(path),
        AffineFlow::exact(path),
        AffineFlow::rotational(path, 2.5).unwrap(),
    ]
}

#[test]
fn criterion_01_analytic_posterior() {
    let path = scenarios::correlated_2d();
    let post = path.moments(1.0).unwrap();
    let mean_ok = (post.mean() - DVector::from_vec(vec![2.82, 1.06])).amax() < 0.005;
    let target = DMatrix::from_row_slice(2, 2, &[0.24, 0.0, 0.0, 1.47]);
    let p = post.cov().as_matrix();
    let variances_ok = (p[(0, 0)] - 0.24).abs() < 0.005 && (p[(1, 1)] - 1.47).abs() < 0.005;
    let cov_ok = (p - &target).amax() < 0.005;
    verdict(
        1,
        "posterior mean [2.82, 1.06], covariance diag(0.24, 1.47)",
        mean_ok && cov_ok,
        &format!(
            "mean = [{:.4}, {:.4}] ({}), variances = [{:.4}, {:.4}] ({}), off-diagonal = {:.4} (needs |.| < 0.005)",
            post.mean()[0],
            post.mean()[1],
            if mean_ok { "ok" } else { "off" },
            p[(0, 0)],
            p[(1, 1)],
            if variances_ok { "ok" } else { "off" },
            p[(0, 1)],
        ),
    );
}

#[test]
fn criterion_02_action_table() {
    let path = scenarios::correlated_2d();
    let start = Instant::now();
    let expected = [31.72, 31.92, 41.23];
    let got: Vec<f64> = three_flows(&path)
        .iter()
        .map(|f| total_action(f, NODES).unwrap().total_action)
        .collect();
    let elapsed = start.elapsed();
    let pass = got.iter().zip(expected).all(|(g, e)| (g - e).abs() <= 0.02)
        && elapsed < Duration::from_secs(1);
    verdict(
        2,
        "total actions 31.72 / 31.92 / 41.23 within 0.02",
        pass,
        &format!(
            "got {:.4} / {:.4} / {:.4} in {elapsed:?}",
            got[0], got[1], got[2]
        ),
    );
}

#[test]
fn criterion_03_exact_flow_rotation() {
    let path = scenarios::correlated_2d();
    let a = AffineFlow::exact(&path).jacobian(0.5).unwrap();
    let asym = asymmetry(&a);
    verdict(
        3,
        "||A(0.5) - A(0.5)^T||_F = 0.47 +/- 0.005",
        (asym - 0.47).abs() <= 0.005,
        &format!("{asym:.6}"),
    );
}

#[test]
fn criterion_04_quadratic_action_law() {
    let path = scenarios::correlated_2d();
    let start = Instant::now();
    let c = action_decomposition_constant(&path, NODES).unwrap();
    let s_star = total_action(&AffineFlow::potential(&path), NODES)
        .unwrap()
        .total_action;
    let mut worst: f64 = 0.0;
    for alpha in [0.0, 0.5, 1.0, 2.5] {
        let s = total_action(&AffineFlow::rotational(&path, alpha).unwrap(), NODES)
            .unwrap()
            .total_action;
        worst = worst.max((s - (s_star + c * alpha * alpha)).abs() / s);
    }
    let elapsed = start.elapsed();
    let pass = (c - 1.522).abs() <= 0.001 && worst < 1e-3 && elapsed < Duration::from_secs(1);
    verdict(
        4,
        "S(alpha) = S* + c alpha^2, c = 1.522 +/- 0.001",
        pass,
        &format!("c = {c:.6}, max relative deviation = {worst:.2e}, {elapsed:?}"),
    );
}

#[test]
fn criterion_05_master_equation_exactness() {
    let path = scenarios::correlated_2d();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let points: Vec<DVector<f64>> = (0..100)
        .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0)))
        .collect();
    let mut worst: f64 = 0.0;
    for flow in three_flows(&path) {
        for k in 0..20 {
            let l = k as f64 / 19.0;
            for x in &points {
                worst = worst.max(master_equation_residual(&flow, l, x).unwrap().abs());
            }
        }
    }
    let field = AffineFlow::potential(&path).field(0.5).unwrap();
    let corrupted = AffineField::new(
        field.jacobian() * 1.1,
        field.center().clone(),
        field.offset().clone(),
    );
    let detected = points
        .iter()
        .map(|x| {
            master_equation_residual_of_field(&path, 0.5, &corrupted, x)
                .unwrap()
                .abs()
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let pass = worst < 1e-9 && detected > 0.01 && elapsed < Duration::from_secs(1);
    verdict(
        5,
        "master-equation residual < 1e-9, corrupted flow > 0.01",
        pass,
        &format!("max residual = {worst:.2e}, corrupted = {detected:.3e}, {elapsed:?}"),
    );
}

#[test]
fn criterion_06_irrotationality_and_uniqueness() {
    let corr = scenarios::correlated_2d();
    let diag = scenarios::uncorrelated_2d();
    let mut pot_asym: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for k in 0..=100 {
        let l = k as f64 / 100.0;
        pot_asym = pot_asym.max(asymmetry(
            &AffineFlow::potential(&corr).jacobian(l).unwrap(),
        ));
        let a = AffineFlow::exact(&diag).jacobian(l).unwrap();
        let s = AffineFlow::potential(&diag).jacobian(l).unwrap();
        gap = gap.max((a - s).amax());
    }
    verdict(
        6,
        "potential Jacobian symmetric; exact = potential for diagonal prior",
        pot_asym < 1e-12 && gap < 1e-10,
        &format!("max asymmetry = {pot_asym:.2e}, max |A - S| = {gap:.2e}"),
    );
}

#[test]
fn criterion_07_ensemble_transport() {
    let path = scenarios::correlated_2d();
    let start = Instant::now();
    let post = path.moments(1.0).unwrap();
    let init = ParticleEnsemble::sample(path.prior(), 100_000, 42).unwrap();
    let spec = IntegratorSpec::fixed(Method::Rk4, 1e-3).with_recording(Recording::Off);
    let mut pass = true;
    let mut detail = Vec::new();
    for flow in three_flows(&path) {
        let out = integrate(&flow, &init, &spec).unwrap();
        let m = empirical_moments(&out).unwrap();
        let dmean = (&m.mean - post.mean()).amax();
        let dcov = (&m.cov - post.cov().as_matrix()).norm();
        pass &= dmean < 0.03 && dcov < 0.05;
        detail.push(format!("{}: mean {dmean:.4}, cov {dcov:.4}", flow.label()));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    verdict(
        7,
        "10^5 particles, RK4 h=1e-3: mean within 0.03, covariance within 0.05",
        pass,
        &format!("{} in {elapsed:?}", detail.join("; ")),
    );
}

#[test]
fn criterion_08_energy_ordering() {
    let path = scenarios::correlated_2d();
    let [pot, ex, rot] = three_flows(&path);
    let mut violations = Vec::new();
    for k in 0..64 {
        let l = k as f64 / 63.0;
        let (ep, ee, er) = (
            kinetic_energy(&pot, l).unwrap(),
            kinetic_energy(&ex, l).unwrap(),
            kinetic_energy(&rot, l).unwrap(),
        );
        if ep > ee + 1e-9 {
            violations.push(format!("potential > exact at {l:.4}"));
        }
        if ep >= er {
            violations.push(format!("potential >= rotational at {l:.4}"));
        }
        if ee > er {
            violations.push(format!(
                "exact {ee:.3} > rotational {er:.3} at lambda = {l:.4}"
            ));
        }
    }
    verdict(
        8,
        "E_potential <= E_exact <= E_rotational(2.5) on a 64-point grid",
        violations.is_empty(),
        &if violations.is_empty() {
            "ordered at all 64 points".to_string()
        } else {
            violations.join("; ")
        },
    );
}

#[test]
fn criterion_09_euler_equation_consistency() {
    let path = scenarios::correlated_2d();
    let x = DVector::from_vec(vec![1.5, -0.5]);
    let mut pass = true;
    let mut detail = Vec::new();
    for flow in three_flows(&path) {
        for l in [0.25, 0.5, 0.75] {
            let coarse = euler_residual(&flow, l, &x, 1e-3).unwrap();
            let fine = euler_residual(&flow, l, &x, 5e-4).unwrap();
            let ratio = coarse / fine;
            pass &= (ratio - 4.0).abs() <= 0.5;
            detail.push(format!("{}@{l}: {ratio:.3}", flow.label()));
        }
    }
    verdict(
        9,
        "Euler residual halving ratio 4 +/- 0.5",
        pass,
        &detail.join(", "),
    );
}

#[test]
fn criterion_10_integrator_orders() {
    let path = scenarios::correlated_2d();
    let start = Instant::now();
    let flow = AffineFlow::potential(&path);
    let init = ParticleEnsemble::sample(path.prior(), 8, 7).unwrap();
    let rows = convergence_study(
        &flow,
        &init,
        &[Method::Euler, Method::Verlet, Method::Rk4],
        &STUDY_STEPS,
        REFERENCE_STEP,
    )
    .unwrap();
    let fitted = slopes(&rows);
    let elapsed = start.elapsed();
    let expected = [
        (Method::Euler, 1.0),
        (Method::Verlet, 2.0),
        (Method::Rk4, 4.0),
    ];
    let pass = expected
        .iter()
        .zip(&fitted)
        .all(|((m, e), (fm, s))| m == fm && (s - e).abs() <= 0.3)
        && elapsed < Duration::from_secs(10);
    verdict(
        10,
        "global-error slopes 1 / 2 / 4 (+/- 0.3)",
        pass,
        &format!(
            "Euler {:.3}, Verlet {:.3}, RK4 {:.3} in {elapsed:?}",
            fitted[0].1, fitted[1].1, fitted[2].1
        ),
    );
}
