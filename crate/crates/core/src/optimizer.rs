//! Riemannian conjugate gradient on the power sphere.
//!
//! Each iteration projects the Euclidean gradient onto the tangent space,
//! forms a Polak-Ribiere (PR+) direction from the projected previous
//! direction, backtracks along it with an Armijo test and retracts the
//! accepted step back onto the sphere.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beams::{BeamDims, BeamformingState};
use crate::error::{IsacError, Result};
use crate::gradients::objective_and_gradient;
use crate::manifold::{norm, project_tangent, re_dot, retract, SpherePoint, TangentVector};
use crate::metrics::{evaluate_state, Evaluation, LinkState, ObjectiveParams, SensingMode};
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmijoConfig {
    /// Sufficient-decrease constant, in (0, 0.5].
    pub c1: f64,
    /// Backtracking factor, in (0, 1).
    pub shrink: f64,
    /// First trial step length as a fraction of the sphere radius.
    pub init_step: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        ArmijoConfig { c1: 1e-4, shrink: 0.5, init_step: 1.0, max_backtracks: 40 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    /// Matched-filter communication beams and a sensing beam toward the
    /// mean target steering vector, equal power per beam.
    Mrt,
    RandomGaussian {
        seed: u64,
    },
    /// Beams passed to [`optimize`] by the caller.
    Provided,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub rho: f64,
    /// Rate floor, bits/s.
    pub r_min: f64,
    pub max_iter: usize,
    /// Stop once `||grad|| * sqrt(P) <= grad_tol * |f|`, i.e. once a step of
    /// the sphere's radius could change the objective by at most a
    /// `grad_tol` fraction to first order.
    pub grad_tol: f64,
    pub armijo: ArmijoConfig,
    /// Force a steepest-descent step every `restart_period` iterations.
    pub restart_period: usize,
    pub mode: SensingMode,
    pub init: InitStrategy,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            alpha: 0.0,
            rho: 1e4,
            r_min: 0.0,
            max_iter: 500,
            grad_tol: 1e-6,
            armijo: ArmijoConfig::default(),
            restart_period: 100,
            mode: SensingMode::Multistatic,
            init: InitStrategy::Mrt,
        }
    }
}

impl OptimizerConfig {
    pub fn objective_params(&self) -> ObjectiveParams {
        ObjectiveParams { alpha: self.alpha, rho: self.rho, r_min: self.r_min, mode: self.mode }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective_params().validate()?;
        if self.rho == 0.0 && self.r_min > 0.0 {
            return Err(IsacError::param("rho must be > 0 when r_min > 0"));
        }
        let a = &self.armijo;
        if !(a.c1 > 0.0 && a.c1 <= 0.5) {
            return Err(IsacError::param(format!("armijo.c1 must lie in (0, 0.5], got {}", a.c1)));
        }
        if !(a.shrink > 0.0 && a.shrink < 1.0) {
            return Err(IsacError::param(format!("armijo.shrink must lie in (0, 1), got {}", a.shrink)));
        }
        if !(a.init_step > 0.0 && a.init_step.is_finite()) {
            return Err(IsacError::param(format!("armijo.init_step must be positive, got {}", a.init_step)));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(IsacError::param(format!("grad_tol must be >= 0, got {}", self.grad_tol)));
        }
        if self.restart_period == 0 {
            return Err(IsacError::param("restart_period must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    MaxIter,
    LineSearchStall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub utility: f64,
    pub crlbs: Vec<f64>,
    pub rates: Vec<f64>,
    /// Riemannian gradient norm at this iterate.
    pub grad_norm: f64,
    /// Step that produced this iterate (0 for the initial point).
    pub step: f64,
    pub beta: f64,
    pub backtracks: usize,
    /// `| ||z||^2 - P | / P` at this iterate.
    pub power_residual: f64,
    /// Relative tangency residual of the direction that produced this iterate.
    pub tangency_residual: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: Vec<IterationRecord>,
    pub final_beams: BeamformingState,
    pub final_eval: Evaluation,
    pub termination: Termination,
    pub wall_time: Duration,
    /// Objective evaluations, gradient evaluations included.
    pub evaluations: usize,
}

impl RunResult {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

// --- generic machinery -------------------------------------------------------

/// Smooth real function on the sphere with a conjugate-Wirtinger gradient.
pub trait SphereObjective {
    /// Extra information recorded with each accepted iterate.
    type Report;

    fn value(&self, z: &[Complex64]) -> Result<f64>;

    fn value_and_gradient(&self, z: &[Complex64]) -> Result<(f64, Vec<Complex64>, Self::Report)>;
}

/// `max(0, <g, g - Proj(g_prev)> / <g_prev, g_prev>)`, or `None` when the
/// previous gradient vanishes and the caller should restart.
pub fn polak_ribiere_beta(g_curr: &[Complex64], g_prev: &[Complex64], g_prev_projected: &[Complex64]) -> Option<f64> {
    let denom = re_dot(g_prev, g_prev);
    if !(denom > 0.0) {
        return None;
    }
    let num = re_dot(g_curr, g_curr) - re_dot(g_curr, g_prev_projected);
    Some((num / denom).max(0.0))
}

#[derive(Clone, Debug)]
pub enum LineSearch {
    Accepted {
        step: f64,
        point: SpherePoint,
        value: f64,
        backtracks: usize,
    },
    /// No trial step passed; the base point is unchanged.
    Stalled {
        evaluations: usize,
    },
}

/// Backtracking Armijo search along `direction` from `point`.
///
/// Accepts the first `step = init * shrink^t` with
/// `f(R(z, step * dir)) <= f(z) + c1 * step * slope`, where
/// `slope = 2 Re{g^H dir}` is the directional derivative. Trial points with a
/// singular FIM count as rejections.
pub fn armijo_search<P: SphereObjective>(
    problem: &P,
    armijo: &ArmijoConfig,
    point: &SpherePoint,
    value: f64,
    direction: &[Complex64],
    slope: f64,
    init_step: f64,
) -> Result<LineSearch> {
    if !(slope < 0.0) {
        return Err(IsacError::param(format!("not a descent direction: slope = {slope:e}")));
    }
    let mut step = init_step;
    for t in 0..=armijo.max_backtracks {
        let trial = retract(point, step, direction)?;
        let trial_value = match problem.value(trial.as_slice()) {
            Ok(v) => v,
            Err(IsacError::SingularFim { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if trial_value <= value + armijo.c1 * step * slope {
            return Ok(LineSearch::Accepted { step, point: trial, value: trial_value, backtracks: t });
        }
        step *= armijo.shrink;
    }
    Ok(LineSearch::Stalled { evaluations: armijo.max_backtracks + 1 })
}

#[derive(Clone, Debug)]
pub struct RcgStep<R> {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub beta: f64,
    pub backtracks: usize,
    pub power_residual: f64,
    pub tangency_residual: f64,
    pub report: R,
}

#[derive(Clone, Debug)]
pub struct RcgOutcome<R> {
    pub steps: Vec<RcgStep<R>>,
    pub point: SpherePoint,
    pub termination: Termination,
    pub evaluations: usize,
}

/// Stopping and line-search settings of [`minimize`].
#[derive(Clone, Copy, Debug)]
pub struct RcgSettings {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub armijo: ArmijoConfig,
    pub restart_period: usize,
}

impl From<&OptimizerConfig> for RcgSettings {
    fn from(c: &OptimizerConfig) -> Self {
        RcgSettings { max_iter: c.max_iter, grad_tol: c.grad_tol, armijo: c.armijo, restart_period: c.restart_period }
    }
}

fn stationary(grad_norm: f64, radius: f64, value: f64, tol: f64) -> bool {
    grad_norm == 0.0 || grad_norm * radius <= tol * value.abs()
}

/// Runs RCG from `start` until the gradient tolerance, the iteration budget
/// or a line-search stall.
pub fn minimize<P: SphereObjective>(
    problem: &P,
    start: SpherePoint,
    settings: &RcgSettings,
) -> Result<RcgOutcome<P::Report>> {
    let radius = start.power().sqrt();
    let max_len = settings.armijo.init_step * radius;
    let mut point = start;
    let (mut value, egrad, report) = problem.value_and_gradient(point.as_slice())?;
    let mut evaluations = 1;
    let mut rgrad = project_tangent(&point, &egrad)?;
    let g0 = rgrad.norm();
    let mut steps = vec![RcgStep {
        iter: 0,
        value,
        grad_norm: g0,
        step: 0.0,
        beta: 0.0,
        backtracks: 0,
        power_residual: point.power_residual(),
        tangency_residual: 0.0,
        report,
    }];

    let mut prev: Option<(TangentVector, TangentVector)> = None; // (gradient, direction)
                                                                 // length ||step * dir|| of the last accepted move
    let mut prev_len: Option<f64> = None;
    let mut termination = Termination::MaxIter;

    for r in 0..settings.max_iter {
        let gnorm = rgrad.norm();
        if stationary(gnorm, radius, value, settings.grad_tol) {
            termination = Termination::GradTol;
            break;
        }

        let steepest: Vec<Complex64> = rgrad.as_slice().iter().map(|g| -g).collect();
        let mut beta = 0.0;
        let mut direction = steepest.clone();
        if let Some((g_prev, d_prev)) = prev.as_ref().filter(|_| r % settings.restart_period != 0) {
            let g_prev_proj = project_tangent(&point, g_prev.as_slice())?;
            if let Some(b) = polak_ribiere_beta(rgrad.as_slice(), g_prev.as_slice(), g_prev_proj.as_slice()) {
                if b > 0.0 {
                    let d_proj = project_tangent(&point, d_prev.as_slice())?;
                    let cand: Vec<Complex64> = steepest.iter().zip(d_proj.as_slice()).map(|(s, d)| s + d * b).collect();
                    if re_dot(rgrad.as_slice(), &cand) < 0.0 {
                        direction = cand;
                        beta = b;
                    }
                }
            }
        }

        let dnorm = norm(&direction);
        let cap = max_len / dnorm;
        let init = prev_len.map_or(cap, |l| (l / settings.armijo.shrink / dnorm).min(cap));
        let slope = 2.0 * re_dot(rgrad.as_slice(), &direction);
        let mut outcome = armijo_search(problem, &settings.armijo, &point, value, &direction, slope, init)?;

        if let LineSearch::Stalled { evaluations: n } = outcome {
            evaluations += n;
            // retry from a fresh steepest-descent step unless that was the attempt
            if beta != 0.0 || init != cap {
                beta = 0.0;
                direction = steepest;
                let cap = max_len / gnorm;
                let slope = -2.0 * gnorm * gnorm;
                outcome = armijo_search(problem, &settings.armijo, &point, value, &direction, slope, cap)?;
                if let LineSearch::Stalled { evaluations: n } = outcome {
                    evaluations += n;
                }
            }
        }

        let LineSearch::Accepted { step, point: next, backtracks, .. } = outcome else {
            termination = Termination::LineSearchStall;
            break;
        };
        evaluations += backtracks + 1;

        prev_len = Some(step * norm(&direction));
        let dir_tv = TangentVector(direction);
        let tangency_residual = dir_tv.tangency_residual(&point);
        point = next;
        let (v, egrad, report) = problem.value_and_gradient(point.as_slice())?;
        evaluations += 1;
        value = v;
        let new_rgrad = project_tangent(&point, &egrad)?;
        prev = Some((std::mem::replace(&mut rgrad, new_rgrad), dir_tv));
        steps.push(RcgStep {
            iter: r + 1,
            value,
            grad_norm: rgrad.norm(),
            step,
            beta,
            backtracks,
            power_residual: point.power_residual(),
            tangency_residual,
            report,
        });
    }
    if termination == Termination::MaxIter && settings.max_iter > 0 {
        let g = rgrad.norm();
        if stationary(g, radius, value, settings.grad_tol) {
            termination = Termination::GradTol;
        }
    }

    Ok(RcgOutcome { steps, point, termination, evaluations })
}

// --- beamforming problem -----------------------------------------------------

/// Penalized alpha-fair objective over the stacked beam vector.
pub struct BeamformingProblem<'a> {
    pub scenario: &'a Scenario,
    pub params: ObjectiveParams,
    dims: BeamDims,
}

impl<'a> BeamformingProblem<'a> {
    pub fn new(scenario: &'a Scenario, params: ObjectiveParams) -> Self {
        BeamformingProblem { scenario, params, dims: BeamDims::of(scenario) }
    }

    fn state(&self, z: &[Complex64]) -> Result<BeamformingState> {
        BeamformingState::from_stacked(self.dims, z.to_vec())
    }
}

impl SphereObjective for BeamformingProblem<'_> {
    type Report = Evaluation;

    fn value(&self, z: &[Complex64]) -> Result<f64> {
        let beams = self.state(z)?;
        Ok(evaluate_state(&LinkState::new(self.scenario, &beams), &self.params)?.objective)
    }

    fn value_and_gradient(&self, z: &[Complex64]) -> Result<(f64, Vec<Complex64>, Evaluation)> {
        let beams = self.state(z)?;
        let (eval, grad) = objective_and_gradient(self.scenario, &beams, &self.params)?;
        Ok((eval.objective, grad.into_vec(), eval))
    }
}

fn draw_cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn unit(v: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = norm(v);
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|c| c / n).collect())
}

/// Initial point on the sphere `||z||^2 = P`.
pub fn init_beams<R: Rng + ?Sized>(scenario: &Scenario, strategy: InitStrategy, rng: &mut R) -> Result<SpherePoint> {
    let dims = BeamDims::of(scenario);
    let p = scenario.params().p_total;
    let mut state = BeamformingState::zeros(dims);
    match strategy {
        InitStrategy::Mrt => {
            let n_q = scenario.n_targets();
            let mut mean = vec![Complex64::new(0.0, 0.0); dims.n_tx];
            for q in 0..n_q {
                for (m, a) in mean.iter_mut().zip(scenario.tx_steering(q)) {
                    *m += a / n_q as f64;
                }
            }
            let sense = unit(&mean)
                .filter(|_| norm(&mean) > 1e-6)
                .or_else(|| unit(scenario.tx_steering(0)))
                .expect("steering vectors have unit-modulus entries");
            for i in 0..dims.n_sc {
                for k in 0..dims.n_users {
                    if let Some(u) = unit(scenario.channels().h(k, i)) {
                        state.v_mut(k, i).copy_from_slice(&u);
                    }
                }
                state.w_mut(i).copy_from_slice(&sense);
            }
        }
        InitStrategy::RandomGaussian { .. } => {
            state.as_mut_slice().iter_mut().for_each(|c| *c = draw_cn(rng));
        }
        InitStrategy::Provided => {
            return Err(IsacError::param("provided initialization needs explicit beams"));
        }
    }
    SpherePoint::normalize(state.into_vec(), p)
}

/// Optimizes the beams of `scenario`. With [`InitStrategy::Provided`] the
/// given beams are rescaled onto the sphere and used as the starting point.
pub fn optimize(
    scenario: &Scenario,
    config: &OptimizerConfig,
    provided: Option<&BeamformingState>,
) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let p = scenario.params().p_total;
    let start = match (config.init, provided) {
        (_, Some(b)) => {
            b.check_dims(scenario)?;
            SpherePoint::normalize(b.as_slice().to_vec(), p)?
        }
        (InitStrategy::Provided, None) => {
            return Err(IsacError::param("init = provided but no beams were given"));
        }
        (InitStrategy::RandomGaussian { seed }, None) => {
            init_beams(scenario, config.init, &mut ChaCha8Rng::seed_from_u64(seed))?
        }
        // MRT draws nothing from the generator
        (InitStrategy::Mrt, None) => init_beams(scenario, config.init, &mut ChaCha8Rng::seed_from_u64(0))?,
    };

    let problem = BeamformingProblem::new(scenario, config.objective_params());
    let outcome = match minimize(&problem, start, &RcgSettings::from(config)) {
        Err(IsacError::SingularFim { target, det }) => {
            return Err(IsacError::param(format!(
                "FIM of target {target} is singular at the initial point (det = {det:e}); \
                 the sensing beam must illuminate every target, try init = mrt"
            )))
        }
        other => other?,
    };

    let trace: Vec<IterationRecord> = outcome
        .steps
        .iter()
        .map(|s| IterationRecord {
            iter: s.iter,
            objective: s.value,
            utility: s.report.utility,
            crlbs: s.report.crlbs.clone(),
            rates: s.report.rates.clone(),
            grad_norm: s.grad_norm,
            step: s.step,
            beta: s.beta,
            backtracks: s.backtracks,
            power_residual: s.power_residual,
            tangency_residual: s.tangency_residual,
        })
        .collect();
    let final_eval = outcome.steps.last().expect("trace holds the initial point").report.clone();
    let final_beams = BeamformingState::from_stacked(BeamDims::of(scenario), outcome.point.into_vec())?;
    Ok(RunResult {
        trace,
        final_beams,
        final_eval,
        termination: outcome.termination,
        wall_time: started.elapsed(),
        evaluations: outcome.evaluations,
    })
}
