//! Communication and sensing metrics: SINR, rate, sensing interference,
//! per-link information `xi`, delay-Doppler FIM, CRLB, the alpha-fair
//! utility and the penalized objective.
//!
//! Rates use `log2`, so they are in bits/s. Powers are in watts.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beams::BeamformingState;
use crate::error::{IsacError, Result};
use crate::scenario::Scenario;

/// FIMs with `det <= DET_TOL` are treated as singular.
pub const DET_TOL: f64 = 1e-30;

/// `a^H b`.
#[inline]
pub fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

#[inline]
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum()
}

/// Which receive nodes contribute to the FIM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensingMode {
    /// Users and the BS.
    Multistatic,
    /// BS only.
    Monostatic,
}

impl SensingMode {
    pub fn nodes(self, scenario: &Scenario) -> std::ops::Range<usize> {
        match self {
            SensingMode::Multistatic => 0..scenario.n_nodes(),
            SensingMode::Monostatic => scenario.bs_node()..scenario.n_nodes(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SensingMode::Multistatic => "multistatic",
            SensingMode::Monostatic => "monostatic",
        }
    }
}

impl std::str::FromStr for SensingMode {
    type Err = IsacError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "multistatic" => Ok(SensingMode::Multistatic),
            "monostatic" => Ok(SensingMode::Monostatic),
            other => Err(IsacError::param(format!("unknown sensing mode `{other}`"))),
        }
    }
}

/// Symmetric 2x2 FIM over (normalized delay, normalized Doppler).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fim2x2 {
    pub j11: f64,
    pub j12: f64,
    pub j22: f64,
}

impl Fim2x2 {
    pub fn det(&self) -> f64 {
        self.j11 * self.j22 - self.j12 * self.j12
    }

    pub fn trace(&self) -> f64 {
        self.j11 + self.j22
    }

    /// Entries of the inverse as `(inv11, inv12, inv22)`; caller checks `det`.
    pub fn inverse(&self) -> (f64, f64, f64) {
        let d = self.det();
        (self.j22 / d, -self.j12 / d, self.j11 / d)
    }

    pub fn is_psd(&self) -> bool {
        let eps = 1e-10 * (self.j11 * self.j22).max(1.0);
        self.j11 >= 0.0 && self.j22 >= 0.0 && self.det() >= -eps
    }
}

impl std::ops::Sub for Fim2x2 {
    type Output = Fim2x2;

    fn sub(self, o: Fim2x2) -> Fim2x2 {
        Fim2x2 { j11: self.j11 - o.j11, j12: self.j12 - o.j12, j22: self.j22 - o.j22 }
    }
}

/// `sum_{mu<n} mu` and `sum_{mu<n} mu^2`.
pub fn symbol_moments(n_sym: usize) -> (f64, f64) {
    let n = n_sym as f64;
    (n * (n - 1.0) / 2.0, n * (n - 1.0) * (2.0 * n - 1.0) / 6.0)
}

/// Weights of the alpha-fair utility, the rate penalty, and the node set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    pub alpha: f64,
    pub rho: f64,
    /// Rate floor, bits/s.
    pub r_min: f64,
    pub mode: SensingMode,
}

impl ObjectiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(IsacError::param(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(IsacError::param(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !(self.r_min >= 0.0 && self.r_min.is_finite()) {
            return Err(IsacError::param(format!("r_min must be >= 0, got {}", self.r_min)));
        }
        Ok(())
    }
}

// --- direct single-quantity evaluations -------------------------------------

/// Signal and interference-plus-noise `(S_{k,i}, I_{k,i})`.
pub fn sinr_parts(scenario: &Scenario, beams: &BeamformingState, k: usize, i: usize) -> (f64, f64) {
    let h = scenario.channels().h(k, i);
    let signal = dot_h(h, beams.v(k, i)).norm_sqr();
    let mut interference = scenario.noise_power(k) + dot_h(h, beams.w(i)).norm_sqr();
    for l in (0..scenario.n_users()).filter(|&l| l != k) {
        interference += dot_h(h, beams.v(l, i)).norm_sqr();
    }
    (signal, interference)
}

pub fn sinr(scenario: &Scenario, beams: &BeamformingState, k: usize, i: usize) -> f64 {
    let (s, n) = sinr_parts(scenario, beams, k, i);
    s / n
}

/// `R_k = B * sum_i log2(1 + gamma_{k,i})`, bits/s.
pub fn rate(scenario: &Scenario, beams: &BeamformingState, k: usize) -> f64 {
    let b = scenario.params().bandwidth;
    let sum: f64 = (0..scenario.params().n_sc).map(|i| sinr(scenario, beams, k, i).ln_1p()).sum();
    b * sum / LN_2
}

/// Interference-plus-noise power seen by node `m` for target `q` on
/// subcarrier `i`. The downlink interference term is absent for the BS.
pub fn sensing_noise_var(scenario: &Scenario, beams: &BeamformingState, q: usize, m: usize, i: usize) -> f64 {
    let k_users = scenario.n_users();
    let mut total_power = norm_sqr(beams.w(i));
    for l in 0..k_users {
        total_power += norm_sqr(beams.v(l, i));
    }
    let mut var = scenario.noise_power(m) + scenario.gain_power(q, m) * total_power;
    if m < k_users {
        let h = scenario.channels().h(m, i);
        for l in (0..k_users).filter(|&l| l != m) {
            var += dot_h(h, beams.v(l, i)).norm_sqr();
        }
    }
    var
}

/// `xi = 8 pi^2 |a_bar|^2 |a_T^H w_i|^2 / (N_c sigma^2)`.
pub fn xi(scenario: &Scenario, beams: &BeamformingState, q: usize, m: usize, i: usize) -> f64 {
    let aw = dot_h(scenario.tx_steering(q), beams.w(i)).norm_sqr();
    xi_value(scenario.gain_power(q, m), aw, sensing_noise_var(scenario, beams, q, m, i), scenario.params().n_sc)
}

#[inline]
fn xi_value(gain_power: f64, aw_sq: f64, noise_var: f64, n_sc: usize) -> f64 {
    8.0 * PI * PI * gain_power * aw_sq / (n_sc as f64 * noise_var)
}

pub fn fim(scenario: &Scenario, beams: &BeamformingState, q: usize, mode: SensingMode) -> Fim2x2 {
    LinkState::new(scenario, beams).fim(q, mode)
}

/// `tr(J^{-1}) = (j11 + j22) / det`.
pub fn crlb(fim: &Fim2x2, target: usize) -> Result<f64> {
    let det = fim.det();
    if !(det > DET_TOL) {
        return Err(IsacError::SingularFim { target, det });
    }
    Ok(fim.trace() / det)
}

/// `c^{1+alpha} / (1+alpha)`, with `c` floored at 1e-300.
pub fn fair_term(c: f64, alpha: f64) -> f64 {
    c.max(1e-300).powf(1.0 + alpha) / (1.0 + alpha)
}

pub fn alpha_fairness(scenario: &Scenario, beams: &BeamformingState, alpha: f64, mode: SensingMode) -> Result<f64> {
    let state = LinkState::new(scenario, beams);
    let mut total = 0.0;
    for q in 0..scenario.n_targets() {
        total += fair_term(crlb(&state.fim(q, mode), q)?, alpha);
    }
    Ok(total)
}

/// `[r_min - rate]_+`.
pub fn hinge(r_min: f64, rate: f64) -> f64 {
    (r_min - rate).max(0.0)
}

pub fn rate_penalty(scenario: &Scenario, beams: &BeamformingState, k: usize, r_min: f64) -> f64 {
    hinge(r_min, rate(scenario, beams, k))
}

/// `F_alpha + (rho/2) sum_k phi_k^2`.
pub fn objective(scenario: &Scenario, beams: &BeamformingState, params: &ObjectiveParams) -> Result<f64> {
    Ok(evaluate(scenario, beams, params)?.objective)
}

// --- shared evaluation -------------------------------------------------------

/// Inner products and per-link quantities shared by every metric and gradient.
#[derive(Clone, Debug)]
pub struct LinkState<'a> {
    pub(crate) scenario: &'a Scenario,
    pub(crate) beams: &'a BeamformingState,
    /// `hz[(k * N_c + i) * (K+1) + b] = h_{k,i}^H z_{i,b}`.
    pub(crate) hz: Vec<Complex64>,
    /// `aw[q * N_c + i] = a_T(phi_q)^H w_i`.
    pub(crate) aw: Vec<Complex64>,
    /// `sigma^2[(q * M + m) * N_c + i]`.
    pub(crate) noise_var: Vec<f64>,
    /// `xi[(q * M + m) * N_c + i]`.
    pub(crate) xi: Vec<f64>,
}

impl<'a> LinkState<'a> {
    pub fn new(scenario: &'a Scenario, beams: &'a BeamformingState) -> Self {
        let k_users = scenario.n_users();
        let blocks = k_users + 1;
        let n_c = scenario.params().n_sc;
        let n_q = scenario.n_targets();
        let n_m = scenario.n_nodes();
        let ch = scenario.channels();

        let mut hz = Vec::with_capacity(k_users * n_c * blocks);
        for k in 0..k_users {
            for i in 0..n_c {
                let h = ch.h(k, i);
                hz.extend((0..blocks).map(|b| dot_h(h, beams.block(i, b))));
            }
        }
        let sc_power: Vec<f64> = (0..n_c).map(|i| (0..blocks).map(|b| norm_sqr(beams.block(i, b))).sum()).collect();
        let mut aw = Vec::with_capacity(n_q * n_c);
        for q in 0..n_q {
            let a = scenario.tx_steering(q);
            aw.extend((0..n_c).map(|i| dot_h(a, beams.w(i))));
        }

        // downlink interference at each user node, independent of q
        let mut user_interf = vec![0.0; k_users * n_c];
        for m in 0..k_users {
            for i in 0..n_c {
                let row = &hz[(m * n_c + i) * blocks..(m * n_c + i + 1) * blocks];
                user_interf[m * n_c + i] = (0..k_users).filter(|&l| l != m).map(|l| row[l].norm_sqr()).sum();
            }
        }

        let c = 8.0 * PI * PI / n_c as f64;
        let mut noise_var = Vec::with_capacity(n_q * n_m * n_c);
        let mut xi = Vec::with_capacity(n_q * n_m * n_c);
        for q in 0..n_q {
            for m in 0..n_m {
                let g = scenario.gain_power(q, m);
                let base = scenario.noise_power(m);
                for i in 0..n_c {
                    let interf = if m < k_users { user_interf[m * n_c + i] } else { 0.0 };
                    let var = base + interf + g * sc_power[i];
                    noise_var.push(var);
                    xi.push(c * g * aw[q * n_c + i].norm_sqr() / var);
                }
            }
        }

        LinkState { scenario, beams, hz, aw, noise_var, xi }
    }

    #[inline]
    pub(crate) fn link(&self, q: usize, m: usize, i: usize) -> usize {
        (q * self.scenario.n_nodes() + m) * self.scenario.params().n_sc + i
    }

    /// `h_{k,i}^H z_{i,b}`.
    #[inline]
    pub fn hz(&self, k: usize, i: usize, b: usize) -> Complex64 {
        let blocks = self.scenario.n_users() + 1;
        self.hz[(k * self.scenario.params().n_sc + i) * blocks + b]
    }

    pub fn sinr_parts(&self, k: usize, i: usize) -> (f64, f64) {
        let k_users = self.scenario.n_users();
        let mut interf = self.scenario.noise_power(k) + self.hz(k, i, k_users).norm_sqr();
        for l in (0..k_users).filter(|&l| l != k) {
            interf += self.hz(k, i, l).norm_sqr();
        }
        (self.hz(k, i, k).norm_sqr(), interf)
    }

    pub fn rate(&self, k: usize) -> f64 {
        let sum: f64 = (0..self.scenario.params().n_sc)
            .map(|i| {
                let (s, n) = self.sinr_parts(k, i);
                (s / n).ln_1p()
            })
            .sum();
        self.scenario.params().bandwidth * sum / LN_2
    }

    pub fn rates(&self) -> Vec<f64> {
        (0..self.scenario.n_users()).map(|k| self.rate(k)).collect()
    }

    pub fn noise_var(&self, q: usize, m: usize, i: usize) -> f64 {
        self.noise_var[self.link(q, m, i)]
    }

    pub fn xi(&self, q: usize, m: usize, i: usize) -> f64 {
        self.xi[self.link(q, m, i)]
    }

    pub fn fim(&self, q: usize, mode: SensingMode) -> Fim2x2 {
        let p = self.scenario.params();
        let (s1, s2) = symbol_moments(p.n_sym);
        let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
        for m in mode.nodes(self.scenario) {
            let base = self.link(q, m, 0);
            for (i, &x) in self.xi[base..base + p.n_sc].iter().enumerate() {
                let fi = i as f64;
                t0 += x;
                t1 += fi * x;
                t2 += fi * fi * x;
            }
        }
        Fim2x2 { j11: p.n_sym as f64 * t2, j12: -s1 * t1, j22: s2 * t0 }
    }
}

/// Every quantity reported for one beamforming state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    /// `F_alpha`, the sensing utility without the penalty.
    pub utility: f64,
    pub fims: Vec<Fim2x2>,
    pub crlbs: Vec<f64>,
    pub rates: Vec<f64>,
    /// `phi_k = [r_min - R_k]_+`.
    pub shortfalls: Vec<f64>,
}

impl Evaluation {
    pub fn max_shortfall(&self) -> f64 {
        self.shortfalls.iter().copied().fold(0.0, f64::max)
    }
}

pub fn evaluate(scenario: &Scenario, beams: &BeamformingState, params: &ObjectiveParams) -> Result<Evaluation> {
    beams.check_dims(scenario)?;
    evaluate_state(&LinkState::new(scenario, beams), params)
}

pub(crate) fn evaluate_state(state: &LinkState<'_>, params: &ObjectiveParams) -> Result<Evaluation> {
    let n_q = state.scenario.n_targets();
    let fims: Vec<Fim2x2> = (0..n_q).map(|q| state.fim(q, params.mode)).collect();
    let crlbs = fims.iter().enumerate().map(|(q, f)| crlb(f, q)).collect::<Result<Vec<_>>>()?;
    let utility: f64 = crlbs.iter().map(|&c| fair_term(c, params.alpha)).sum();
    let rates = state.rates();
    let shortfalls: Vec<f64> = rates.iter().map(|&r| hinge(params.r_min, r)).collect();
    let penalty: f64 = shortfalls.iter().map(|p| p * p).sum();
    Ok(Evaluation { objective: utility + 0.5 * params.rho * penalty, utility, fims, crlbs, rates, shortfalls })
}
