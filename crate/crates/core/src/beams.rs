//! Stacked beamformer layout.
//!
//! Per subcarrier `i` the block `z_i = [v_{0,i}; ...; v_{K-1,i}; w_i]`, and
//! `z = [z_0; ...; z_{N_c-1}]`. Block index `K` is the sensing beam.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamDims {
    pub n_users: usize,
    pub n_sc: usize,
    pub n_tx: usize,
}

impl BeamDims {
    pub fn of(scenario: &Scenario) -> Self {
        BeamDims { n_users: scenario.n_users(), n_sc: scenario.params().n_sc, n_tx: scenario.params().n_tx }
    }

    /// Beams per subcarrier, `K + 1`.
    pub fn blocks(&self) -> usize {
        self.n_users + 1
    }

    pub fn len(&self) -> usize {
        self.n_sc * self.blocks() * self.n_tx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of the first antenna entry of block `b` on subcarrier `i`.
    #[inline]
    pub fn offset(&self, i: usize, b: usize) -> usize {
        (i * self.blocks() + b) * self.n_tx
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamformingState {
    dims: BeamDims,
    z: Vec<Complex64>,
}

impl BeamformingState {
    pub fn zeros(dims: BeamDims) -> Self {
        BeamformingState { dims, z: vec![Complex64::new(0.0, 0.0); dims.len()] }
    }

    pub fn from_stacked(dims: BeamDims, z: Vec<Complex64>) -> Result<Self> {
        if z.len() != dims.len() {
            return Err(IsacError::dim(format!("stacked vector has length {}, expected {}", z.len(), dims.len())));
        }
        Ok(BeamformingState { dims, z })
    }

    /// Stacks `v[k][i]` and `w[i]` into the canonical order.
    pub fn from_parts(v: &[Vec<Vec<Complex64>>], w: &[Vec<Complex64>]) -> Result<Self> {
        let n_users = v.len();
        let n_sc = w.len();
        let n_tx = w.first().map(Vec::len).unwrap_or(0);
        let dims = BeamDims { n_users, n_sc, n_tx };
        if n_sc == 0 || n_tx == 0 {
            return Err(IsacError::dim("need at least one subcarrier and one antenna"));
        }
        let mut state = Self::zeros(dims);
        for i in 0..n_sc {
            for (k, vk) in v.iter().enumerate() {
                if vk.len() != n_sc || vk[i].len() != n_tx {
                    return Err(IsacError::dim(format!("v[{k}] has inconsistent shape")));
                }
                state.v_mut(k, i).copy_from_slice(&vk[i]);
            }
            if w[i].len() != n_tx {
                return Err(IsacError::dim(format!("w[{i}] has length {}", w[i].len())));
            }
            state.w_mut(i).copy_from_slice(&w[i]);
        }
        Ok(state)
    }

    /// Inverse of [`from_parts`](Self::from_parts).
    pub fn to_parts(&self) -> (Vec<Vec<Vec<Complex64>>>, Vec<Vec<Complex64>>) {
        let d = self.dims;
        let v = (0..d.n_users).map(|k| (0..d.n_sc).map(|i| self.v(k, i).to_vec()).collect()).collect();
        let w = (0..d.n_sc).map(|i| self.w(i).to_vec()).collect();
        (v, w)
    }

    pub fn dims(&self) -> BeamDims {
        self.dims
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.z
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.z
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.z
    }

    #[inline]
    pub fn block(&self, i: usize, b: usize) -> &[Complex64] {
        let o = self.dims.offset(i, b);
        &self.z[o..o + self.dims.n_tx]
    }

    #[inline]
    pub fn block_mut(&mut self, i: usize, b: usize) -> &mut [Complex64] {
        let o = self.dims.offset(i, b);
        &mut self.z[o..o + self.dims.n_tx]
    }

    #[inline]
    pub fn v(&self, k: usize, i: usize) -> &[Complex64] {
        self.block(i, k)
    }

    #[inline]
    pub fn w(&self, i: usize) -> &[Complex64] {
        self.block(i, self.dims.n_users)
    }

    pub fn v_mut(&mut self, k: usize, i: usize) -> &mut [Complex64] {
        self.block_mut(i, k)
    }

    pub fn w_mut(&mut self, i: usize) -> &mut [Complex64] {
        let k = self.dims.n_users;
        self.block_mut(i, k)
    }

    /// Total transmit power `||z||^2`.
    pub fn power(&self) -> f64 {
        self.z.iter().map(|c| c.norm_sqr()).sum()
    }

    /// True when `||z||^2` matches `p` within 1e-9 relative.
    pub fn on_manifold(&self, p: f64) -> bool {
        (self.power() - p).abs() <= 1e-9 * p
    }

    pub fn check_dims(&self, scenario: &Scenario) -> Result<()> {
        if self.dims != BeamDims::of(scenario) {
            return Err(IsacError::dim(format!(
                "beams have dims {:?}, scenario needs {:?}",
                self.dims,
                BeamDims::of(scenario)
            )));
        }
        Ok(())
    }
}
