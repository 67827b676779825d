//! Conjugate-Wirtinger gradients `dF/dz*` of the rates, the alpha-fair
//! utility and the penalized objective, plus a central-difference oracle.
//!
//! Convention: for a real `f` and gradient `g = df/dz*`, the directional
//! derivative along `d` is `2 Re{g^H d}`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;

use crate::beams::{BeamDims, BeamformingState};
use crate::error::{IsacError, Result};
use crate::metrics::{crlb, evaluate_state, symbol_moments, Evaluation, LinkState, ObjectiveParams, SensingMode};
use crate::scenario::Scenario;

/// Default relative step of [`fd_gradient_oracle`].
pub const FD_STEP: f64 = 1e-6;

/// Gradient in the stacked beam layout.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    dims: BeamDims,
    g: Vec<Complex64>,
}

impl GradientVector {
    pub fn zeros(dims: BeamDims) -> Self {
        GradientVector { dims, g: vec![Complex64::new(0.0, 0.0); dims.len()] }
    }

    pub fn from_vec(dims: BeamDims, g: Vec<Complex64>) -> Result<Self> {
        if g.len() != dims.len() {
            return Err(IsacError::dim(format!("gradient has length {}, expected {}", g.len(), dims.len())));
        }
        Ok(GradientVector { dims, g })
    }

    pub fn dims(&self) -> BeamDims {
        self.dims
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.g
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.g
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.g
    }

    pub fn block(&self, i: usize, b: usize) -> &[Complex64] {
        let o = self.dims.offset(i, b);
        &self.g[o..o + self.dims.n_tx]
    }

    pub fn block_mut(&mut self, i: usize, b: usize) -> &mut [Complex64] {
        let o = self.dims.offset(i, b);
        &mut self.g[o..o + self.dims.n_tx]
    }

    pub fn norm(&self) -> f64 {
        self.g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

#[inline]
fn axpy(out: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (o, xv) in out.iter_mut().zip(x) {
        *o += a * xv;
    }
}

/// Adds `scale * dR_k/dz*` to `out`.
fn add_rate_grad(state: &LinkState<'_>, k: usize, scale: f64, out: &mut GradientVector) {
    let sc = state.scenario;
    let blocks = sc.n_users() + 1;
    let bw = sc.params().bandwidth;
    for i in 0..sc.params().n_sc {
        let (s, n) = state.sinr_parts(k, i);
        let gamma = s / n;
        let c = scale * bw / ((1.0 + gamma) * LN_2);
        let h = sc.channels().h(k, i);
        for b in 0..blocks {
            let coef = if b == k { c / n } else { -c * s / (n * n) };
            axpy(out.block_mut(i, b), coef * state.hz(k, i, b), h);
        }
    }
}

/// Adds `dF_alpha/dz*` to `out`.
fn add_fairness_grad(state: &LinkState<'_>, alpha: f64, mode: SensingMode, out: &mut GradientVector) -> Result<()> {
    let sc = state.scenario;
    let p = sc.params();
    let (n_c, n_q, k_users) = (p.n_sc, sc.n_targets(), sc.n_users());
    let (s1, s2) = symbol_moments(p.n_sym);
    let n_sym = p.n_sym as f64;
    let nodes = mode.nodes(sc);
    let n_nodes = sc.n_nodes();
    let c_xi = 8.0 * PI * PI / n_c as f64;

    // Q_q = tr(J^-1)^alpha * J^-2
    let mut qmat = Vec::with_capacity(n_q);
    for q in 0..n_q {
        let j = state.fim(q, mode);
        let tr = crlb(&j, q)?;
        let (a, b, d) = j.inverse();
        let scale = tr.max(1e-300).powf(alpha);
        qmat.push((scale * (a * a + b * b), scale * (a * b + b * d), scale * (b * b + d * d)));
    }

    // per (m, i) sums over q for the v-blocks
    let mut t_gain = vec![0.0; n_nodes];
    let mut t_plain = vec![0.0; n_nodes];
    let mut r_sum = vec![0.0; n_q];
    for i in 0..n_c {
        let fi = i as f64;
        t_gain.iter_mut().for_each(|x| *x = 0.0);
        t_plain.iter_mut().for_each(|x| *x = 0.0);
        let mut w_diag = 0.0;
        for (q, &(q11, q12, q22)) in qmat.iter().enumerate() {
            let omega = q11 * n_sym * fi * fi - 2.0 * q12 * s1 * fi + q22 * s2;
            r_sum[q] = 0.0;
            for m in nodes.clone() {
                let idx = state.link(q, m, i);
                let (xi, var) = (state.xi[idx], state.noise_var[idx]);
                let g = sc.gain_power(q, m);
                let r = omega * g / var;
                r_sum[q] += r;
                w_diag += r * xi;
                let t = omega * xi / var;
                t_gain[m] += t * g;
                t_plain[m] += t;
            }
        }

        // w_i block: -sum_q C r_q a_q (a_q^H w) + (sum r xi) w
        let w = state.beams.w(i).to_vec();
        let out_w = out.block_mut(i, k_users);
        for q in 0..n_q {
            let coef = -c_xi * r_sum[q] * state.aw[q * n_c + i];
            axpy(out_w, coef, sc.tx_steering(q));
        }
        axpy(out_w, Complex64::new(w_diag, 0.0), &w);

        // v_{l,i} blocks
        let gain_total: f64 = nodes.clone().map(|m| t_gain[m]).sum();
        for l in 0..k_users {
            let v = state.beams.v(l, i).to_vec();
            let out_v = out.block_mut(i, l);
            axpy(out_v, Complex64::new(gain_total, 0.0), &v);
            for m in nodes.clone().filter(|&m| m < k_users && m != l) {
                axpy(out_v, t_plain[m] * state.hz(m, i, l), sc.channels().h(m, i));
            }
        }
    }
    Ok(())
}

/// `dR_k/dz*` in bits/s per unit of `z*`.
pub fn grad_rate(scenario: &Scenario, beams: &BeamformingState, k: usize) -> Result<GradientVector> {
    beams.check_dims(scenario)?;
    if k >= scenario.n_users() {
        return Err(IsacError::dim(format!("user {k} out of range")));
    }
    let state = LinkState::new(scenario, beams);
    let mut out = GradientVector::zeros(beams.dims());
    add_rate_grad(&state, k, 1.0, &mut out);
    Ok(out)
}

pub fn grad_alpha_fairness(
    scenario: &Scenario,
    beams: &BeamformingState,
    alpha: f64,
    mode: SensingMode,
) -> Result<GradientVector> {
    beams.check_dims(scenario)?;
    let state = LinkState::new(scenario, beams);
    let mut out = GradientVector::zeros(beams.dims());
    add_fairness_grad(&state, alpha, mode, &mut out)?;
    Ok(out)
}

/// `grad F_alpha - rho * sum_k phi_k grad R_k`.
pub fn grad_objective(
    scenario: &Scenario,
    beams: &BeamformingState,
    params: &ObjectiveParams,
) -> Result<GradientVector> {
    Ok(objective_and_gradient(scenario, beams, params)?.1)
}

/// Objective breakdown and its gradient from one shared set of inner products.
pub fn objective_and_gradient(
    scenario: &Scenario,
    beams: &BeamformingState,
    params: &ObjectiveParams,
) -> Result<(Evaluation, GradientVector)> {
    beams.check_dims(scenario)?;
    let state = LinkState::new(scenario, beams);
    let eval = evaluate_state(&state, params)?;
    let mut out = GradientVector::zeros(beams.dims());
    add_fairness_grad(&state, params.alpha, params.mode, &mut out)?;
    for (k, &phi) in eval.shortfalls.iter().enumerate() {
        if phi > 0.0 && params.rho > 0.0 {
            add_rate_grad(&state, k, -params.rho * phi, &mut out);
        }
    }
    Ok((eval, out))
}

/// Central-difference estimate of `df/dz*`.
///
/// For coordinate `n` the real and imaginary parts are perturbed separately
/// with step `step * max(1, |z_n|)` and combined as
/// `g_n = (df/dRe z_n + j df/dIm z_n) / 2`.
pub fn fd_gradient_oracle<F>(mut f: F, z: &[Complex64], step: f64) -> Result<Vec<Complex64>>
where
    F: FnMut(&[Complex64]) -> f64,
{
    if !(step > 0.0) {
        return Err(IsacError::param(format!("finite-difference step must be positive, got {step}")));
    }
    let mut work = z.to_vec();
    let mut g = Vec::with_capacity(z.len());
    for n in 0..z.len() {
        let h = step * z[n].norm().max(1.0);
        let mut partial = [0.0; 2];
        for (part, dir) in partial.iter_mut().zip([Complex64::new(h, 0.0), Complex64::new(0.0, h)]) {
            work[n] = z[n] + dir;
            let fp = f(&work);
            work[n] = z[n] - dir;
            let fm = f(&work);
            work[n] = z[n];
            if !(fp.is_finite() && fm.is_finite()) {
                return Err(IsacError::OracleNonFinite { coord: n });
            }
            *part = (fp - fm) / (2.0 * h);
        }
        g.push(Complex64::new(partial[0], partial[1]) * 0.5);
    }
    Ok(g)
}

/// `max_n |a_n - b_n| / max_n |b_n|`, the worst coordinate error scaled by
/// the largest reference magnitude. Zero when both vectors vanish.
pub fn relative_error(analytic: &[Complex64], reference: &[Complex64]) -> f64 {
    let scale = reference.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let err = analytic.iter().zip(reference).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_on_quadratic_linear_and_constant() {
        let z = vec![Complex64::new(0.3, -1.2), Complex64::new(2.5, 0.4), Complex64::new(-0.1, 0.0)];
        let g = fd_gradient_oracle(|x| x.iter().map(|c| c.norm_sqr()).sum(), &z, FD_STEP).unwrap();
        for (a, b) in g.iter().zip(&z) {
            assert!((a - b).norm() < 1e-8);
        }

        let cvec = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25), Complex64::new(0.0, -3.0)];
        let cc = cvec.clone();
        let lin = move |x: &[Complex64]| cc.iter().zip(x).map(|(c, x)| (c.conj() * x).re).sum::<f64>();
        let g = fd_gradient_oracle(lin, &z, FD_STEP).unwrap();
        for (a, c) in g.iter().zip(&cvec) {
            assert!((a - c * 0.5).norm() < 1e-8);
        }

        let g = fd_gradient_oracle(|_| 4.2, &z, FD_STEP).unwrap();
        assert!(g.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn oracle_rejects_non_finite_and_bad_step() {
        let z = vec![Complex64::new(1.0, 0.0)];
        assert!(matches!(fd_gradient_oracle(|_| f64::NAN, &z, FD_STEP), Err(IsacError::OracleNonFinite { coord: 0 })));
        assert!(fd_gradient_oracle(|_| 0.0, &z, 0.0).is_err());
    }

    #[test]
    fn relative_error_scaling() {
        let a = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let b = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.01)];
        assert!((relative_error(&a, &b) - 0.01).abs() < 1e-15);
        assert_eq!(relative_error(&a[..0], &b[..0]), 0.0);
    }
}
