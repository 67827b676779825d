//! Optimizer contracts: line search, direction rule, initialization and runs.

mod common;

use common::{random_state, rel};
use isac_core::optimizer::{LineSearch, RcgSettings, SphereObjective};
use isac_core::{
    armijo_search, crlb, fim, grad_alpha_fairness, grad_rate, init_beams, metrics, minimize, optimize,
    polak_ribiere_beta, presets, project_tangent, ArmijoConfig, BeamDims, BeamformingState, InitStrategy,
    OptimizerConfig, Result, Scenario, SensingMode, SpherePoint, Termination,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn desk(seed: u64) -> Scenario {
    Scenario::build(&presets::desk(seed)).unwrap()
}

/// `||z - target||^2`, gradient `z - target`.
struct Quadratic {
    target: Vec<Complex64>,
}

impl SphereObjective for Quadratic {
    type Report = ();

    fn value(&self, z: &[Complex64]) -> Result<f64> {
        Ok(z.iter().zip(&self.target).map(|(a, b)| (a - b).norm_sqr()).sum())
    }

    fn value_and_gradient(&self, z: &[Complex64]) -> Result<(f64, Vec<Complex64>, ())> {
        let g = z.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        Ok((self.value(z)?, g, ()))
    }
}

#[test]
fn polak_ribiere_examples() {
    let g_prev = [c(1.0, 0.0), c(0.0, 0.0)];
    let g = [c(0.3, -0.2), c(0.5, 0.1)];
    assert_eq!(polak_ribiere_beta(&g, &g_prev, &g), Some(0.0));
    let g_perp = [c(0.0, 0.0), c(2.0, 1.0)];
    assert_eq!(polak_ribiere_beta(&g_perp, &g_prev, &g_prev), Some(5.0));
    let g_neg = [c(0.1, 0.0), c(0.0, 0.0)];
    let g_prev_big = [c(3.0, 0.0), c(0.0, 0.0)];
    assert_eq!(polak_ribiere_beta(&g_neg, &g_prev_big, &g_prev_big), Some(0.0));
    assert_eq!(polak_ribiere_beta(&g, &[c(0.0, 0.0); 2], &[c(0.0, 0.0); 2]), None);
}

#[test]
fn armijo_steepest_descent_meets_sufficient_decrease() {
    let q = Quadratic { target: vec![c(0.0, 1.0), c(1.0, 0.0), c(0.0, 0.0)] };
    let p = SpherePoint::normalize(vec![c(1.0, 0.0), c(0.0, 0.5), c(0.3, 0.3)], 2.0).unwrap();
    let (f, g, _) = q.value_and_gradient(p.as_slice()).unwrap();
    let rg = project_tangent(&p, &g).unwrap();
    let dir: Vec<_> = rg.as_slice().iter().map(|x| -x).collect();
    let slope = -2.0 * rg.norm().powi(2);
    let cfg = ArmijoConfig::default();
    match armijo_search(&q, &cfg, &p, f, &dir, slope, 1.0).unwrap() {
        LineSearch::Accepted { step, point, value, .. } => {
            assert!(f - value >= cfg.c1 * step * slope.abs());
            assert!(point.power_residual() < 1e-12);
        }
        LineSearch::Stalled { .. } => panic!("stalled on a smooth quadratic"),
    }
}

#[test]
fn armijo_stalls_on_an_ascent_direction() {
    let q = Quadratic { target: vec![c(1.0, 0.0), c(0.0, 0.0)] };
    let p = SpherePoint::normalize(vec![c(0.6, 0.0), c(0.8, 0.0)], 1.0).unwrap();
    let f = q.value(p.as_slice()).unwrap();
    // moving away from the target while claiming a negative slope
    let dir = [c(-0.8, 0.0), c(0.6, 0.0)];
    let cfg = ArmijoConfig { max_backtracks: 5, ..Default::default() };
    let out = armijo_search(&q, &cfg, &p, f, &dir, -1.0, 1.0).unwrap();
    assert!(matches!(out, LineSearch::Stalled { evaluations: 6 }));
    assert!(armijo_search(&q, &cfg, &p, f, &dir, 0.5, 1.0).is_err());
}

#[test]
fn quadratic_on_sphere_decreases_monotonically_to_the_projected_target() {
    let target = vec![c(0.2, 1.0), c(-0.5, 0.3), c(0.0, -0.7), c(1.1, 0.0)];
    let q = Quadratic { target: target.clone() };
    let start = SpherePoint::normalize(vec![c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0), c(-1.0, 0.0)], 3.0).unwrap();
    let settings = RcgSettings { max_iter: 200, grad_tol: 1e-7, armijo: ArmijoConfig::default(), restart_period: 100 };
    let out = minimize(&q, start, &settings).unwrap();
    for w in out.steps.windows(2) {
        assert!(w[1].value <= w[0].value);
    }
    assert_eq!(out.termination, Termination::GradTol);
    let best = SpherePoint::normalize(target, 3.0).unwrap();
    for (a, b) in out.point.as_slice().iter().zip(best.as_slice()) {
        assert!((a - b).norm() < 1e-6);
    }
}

#[test]
fn initialization_lands_on_sphere_and_is_deterministic() {
    let s = desk(3);
    for strategy in [InitStrategy::Mrt, InitStrategy::RandomGaussian { seed: 8 }] {
        let a = init_beams(&s, strategy, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = init_beams(&s, strategy, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert!(a.power_residual() < 1e-12);
        assert_eq!(a, b);
    }
    assert!(init_beams(&s, InitStrategy::Provided, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn mrt_aligns_each_comm_beam_with_its_channel() {
    let mut cfg = presets::desk(5);
    cfg.params = isac_core::SystemParams::new(4, 6, 4, 28e9, 120e3, 1.0 / 120e3, 1.0, vec![1e-12; 2]).unwrap();
    cfg.geometry.user_pos.truncate(1);
    cfg.geometry.target_pos.truncate(1);
    cfg.geometry.target_vel.truncate(1);
    let s = Scenario::build(&cfg).unwrap();
    let p = init_beams(&s, InitStrategy::Mrt, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let b = BeamformingState::from_stacked(BeamDims::of(&s), p.into_vec()).unwrap();
    for i in 0..6 {
        let cos = metrics::dot_h(s.channels().h(0, i), b.v(0, i)).norm()
            / (metrics::norm_sqr(s.channels().h(0, i)).sqrt() * metrics::norm_sqr(b.v(0, i)).sqrt());
        assert!((cos - 1.0).abs() < 1e-12);
    }
}

#[test]
fn zero_iterations_report_the_initial_point() {
    let s = desk(1);
    let cfg = OptimizerConfig { max_iter: 0, ..Default::default() };
    let res = optimize(&s, &cfg, None).unwrap();
    assert_eq!(res.trace.len(), 1);
    assert_eq!(res.termination, Termination::MaxIter);
    assert!(res.final_beams.on_manifold(1.0));
}

#[test]
fn desk_run_descends_and_stays_on_the_sphere() {
    let s = desk(2);
    let cfg = OptimizerConfig { max_iter: 300, r_min: 1e8, ..Default::default() };
    let res = optimize(&s, &cfg, None).unwrap();
    for w in res.trace.windows(2) {
        assert!(w[1].objective <= w[0].objective);
    }
    for r in &res.trace {
        assert!(r.power_residual < 1e-9);
        assert!(r.tangency_residual < 1e-9);
    }
    assert!(res.final_beams.on_manifold(1.0));
}

#[test]
fn singular_start_is_reported_with_advice() {
    let s = desk(1);
    let mut b = random_state(&s, 1);
    for i in 0..s.params().n_sc {
        b.w_mut(i).iter_mut().for_each(|x| *x = c(0.0, 0.0));
    }
    let cfg = OptimizerConfig { init: InitStrategy::Provided, ..Default::default() };
    let err = optimize(&s, &cfg, Some(&b)).unwrap_err().to_string();
    assert!(err.contains("mrt"), "{err}");
}

/// Sum-CRLB plus squared-hinge penalty written directly from the public
/// metric and gradient functions.
struct SumCrlb<'a> {
    scenario: &'a Scenario,
    rho: f64,
    r_min: f64,
}

impl SumCrlb<'_> {
    fn state(&self, z: &[Complex64]) -> BeamformingState {
        BeamformingState::from_stacked(BeamDims::of(self.scenario), z.to_vec()).unwrap()
    }
}

impl SphereObjective for SumCrlb<'_> {
    type Report = ();

    fn value(&self, z: &[Complex64]) -> Result<f64> {
        let b = self.state(z);
        let mut f = 0.0;
        for q in 0..self.scenario.n_targets() {
            f += crlb(&fim(self.scenario, &b, q, SensingMode::Multistatic), q)?;
        }
        for k in 0..self.scenario.n_users() {
            let phi = (self.r_min - metrics::rate(self.scenario, &b, k)).max(0.0);
            f += 0.5 * self.rho * phi * phi;
        }
        Ok(f)
    }

    fn value_and_gradient(&self, z: &[Complex64]) -> Result<(f64, Vec<Complex64>, ())> {
        let b = self.state(z);
        let mut g = grad_alpha_fairness(self.scenario, &b, 0.0, SensingMode::Multistatic)?.into_vec();
        for k in 0..self.scenario.n_users() {
            let phi = (self.r_min - metrics::rate(self.scenario, &b, k)).max(0.0);
            if phi > 0.0 {
                let gr = grad_rate(self.scenario, &b, k)?;
                g.iter_mut().zip(gr.as_slice()).for_each(|(x, y)| *x -= y * (self.rho * phi));
            }
        }
        Ok((self.value(z)?, g, ()))
    }
}

#[test]
fn alpha_zero_trace_matches_direct_sum_crlb_objective() {
    let s = desk(4);
    let cfg =
        OptimizerConfig { alpha: 0.0, r_min: 1.2e8, rho: 1e-12, max_iter: 40, grad_tol: 0.0, ..Default::default() };
    let res = optimize(&s, &cfg, None).unwrap();
    let start = init_beams(&s, InitStrategy::Mrt, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let direct = SumCrlb { scenario: &s, rho: cfg.rho, r_min: cfg.r_min };
    let out = minimize(&direct, start, &RcgSettings::from(&cfg)).unwrap();
    assert_eq!(out.steps.len(), res.trace.len());
    // round-off differences between the two code paths grow along the run
    for (a, b) in out.steps.iter().zip(&res.trace) {
        let tol = if b.iter <= 20 { 1e-12 } else { 1e-9 };
        assert!(rel(a.value, b.objective) < tol, "iter {}: {} vs {}", b.iter, a.value, b.objective);
    }
    let direct_final = direct.value(res.final_beams.as_slice()).unwrap();
    assert!(rel(direct_final, res.final_eval.objective) < 1e-12);
}
