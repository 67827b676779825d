//! World model: system parameters, planar geometry, steering vectors,
//! downlink channels and bistatic sensing link gains.
//!
//! Nodes are indexed `0..K` for the communication users and `K` for the base
//! station, so `M = K + 1` receive nodes observe every target.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const GAIN_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_tx: usize,
    pub n_sc: usize,
    pub n_sym: usize,
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Subcarrier spacing, Hz.
    pub delta_f: f64,
    /// Total bandwidth `n_sc * delta_f`, Hz. Derived at construction.
    pub bandwidth: f64,
    /// OFDM signal interval, s.
    pub t_sym: f64,
    /// Total transmit power budget, W.
    pub p_total: f64,
    /// Noise power per node, W: one entry per user followed by the BS.
    pub noise_power: Vec<f64>,
}

impl SystemParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_tx: usize,
        n_sc: usize,
        n_sym: usize,
        f_c: f64,
        delta_f: f64,
        t_sym: f64,
        p_total: f64,
        noise_power: Vec<f64>,
    ) -> Result<Self> {
        let params = SystemParams {
            n_tx,
            n_sc,
            n_sym,
            f_c,
            delta_f,
            bandwidth: n_sc as f64 * delta_f,
            t_sym,
            p_total,
            noise_power,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_sc == 0 || self.n_sym == 0 {
            return Err(IsacError::dim(format!(
                "n_tx, n_sc, n_sym must be >= 1 (got {}, {}, {})",
                self.n_tx, self.n_sc, self.n_sym
            )));
        }
        for (name, v) in
            [("f_c", self.f_c), ("delta_f", self.delta_f), ("t_sym", self.t_sym), ("p_total", self.p_total)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(IsacError::param(format!("{name} must be positive, got {v}")));
            }
        }
        let expected_bw = self.n_sc as f64 * self.delta_f;
        if (self.bandwidth - expected_bw).abs() > 1e-9 * expected_bw {
            return Err(IsacError::param(format!("bandwidth {} != n_sc * delta_f = {}", self.bandwidth, expected_bw)));
        }
        // t_sym >= 1/delta_f, with a relative slack for round-off in 1/x.
        if self.t_sym * self.delta_f < 1.0 - 1e-12 {
            return Err(IsacError::param(format!(
                "t_sym = {} is shorter than 1/delta_f = {}",
                self.t_sym,
                1.0 / self.delta_f
            )));
        }
        if self.noise_power.is_empty() {
            return Err(IsacError::param("noise_power must list at least the BS"));
        }
        if let Some(bad) = self.noise_power.iter().find(|&&s| !(s.is_finite() && s > 0.0)) {
            return Err(IsacError::param(format!("noise power must be positive, got {bad}")));
        }
        Ok(())
    }

    pub fn wavelength(&self, c0: f64) -> f64 {
        c0 / self.f_c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs_pos: [f64; 2],
    pub user_pos: Vec<[f64; 2]>,
    pub target_pos: Vec<[f64; 2]>,
    /// Radial speed of each target along its bistatic paths, m/s.
    pub target_vel: Vec<f64>,
    pub c0: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Angle of `to` as seen from `from`, measured from the array axis (x axis),
/// wrapped to (-pi, pi].
fn bearing(from: [f64; 2], to: [f64; 2]) -> f64 {
    let a = (to[1] - from[1]).atan2(to[0] - from[0]);
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

impl Geometry {
    pub fn n_users(&self) -> usize {
        self.user_pos.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_pos.len()
    }

    /// Position of node `m`: users first, the BS last.
    pub fn node_pos(&self, m: usize) -> [f64; 2] {
        if m == self.user_pos.len() {
            self.bs_pos
        } else {
            self.user_pos[m]
        }
    }

    pub fn d_bs_target(&self, q: usize) -> f64 {
        dist(self.bs_pos, self.target_pos[q])
    }

    pub fn d_target_node(&self, q: usize, m: usize) -> f64 {
        dist(self.target_pos[q], self.node_pos(m))
    }

    pub fn d_bs_user(&self, k: usize) -> f64 {
        dist(self.bs_pos, self.user_pos[k])
    }

    pub fn aod(&self, q: usize) -> f64 {
        bearing(self.bs_pos, self.target_pos[q])
    }

    pub fn aoa(&self, q: usize, m: usize) -> f64 {
        bearing(self.node_pos(m), self.target_pos[q])
    }

    pub fn validate(&self) -> Result<()> {
        if self.user_pos.is_empty() || self.target_pos.is_empty() {
            return Err(IsacError::dim(format!(
                "need K >= 1 and Q >= 1 (got K = {}, Q = {})",
                self.user_pos.len(),
                self.target_pos.len()
            )));
        }
        if self.target_vel.len() != self.target_pos.len() {
            return Err(IsacError::dim(format!(
                "{} target velocities for {} targets",
                self.target_vel.len(),
                self.target_pos.len()
            )));
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(IsacError::param(format!("c0 must be positive, got {}", self.c0)));
        }
        let finite = |p: &[f64; 2]| p[0].is_finite() && p[1].is_finite();
        if !finite(&self.bs_pos)
            || !self.user_pos.iter().all(finite)
            || !self.target_pos.iter().all(finite)
            || !self.target_vel.iter().all(|v| v.is_finite())
        {
            return Err(IsacError::Geometry("non-finite coordinate".into()));
        }
        for q in 0..self.n_targets() {
            for m in 0..=self.n_users() {
                if self.d_target_node(q, m) <= 0.0 {
                    return Err(IsacError::Geometry(format!("target {q} coincides with node {m}")));
                }
            }
        }
        Ok(())
    }
}

/// Bistatic radar-equation constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainModel {
    /// Aggregate antenna/processing gain `G`, including the receive array.
    pub gain: f64,
    /// Radar cross section, m^2.
    pub rcs: f64,
}

impl Default for GainModel {
    fn default() -> Self {
        GainModel { gain: 1.0, rcs: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingLinkGains {
    /// `a_bar[q][m]`, complex reflection coefficient per target and node.
    pub a_bar: Vec<Vec<Complex64>>,
    pub aod: Vec<f64>,
    pub aoa: Vec<Vec<f64>>,
}

/// Downlink channels `h[k][i]`, each of length `n_t`, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    n_users: usize,
    n_sc: usize,
    n_tx: usize,
    h: Vec<Complex64>,
}

impl ChannelSet {
    pub fn zeros(n_users: usize, n_sc: usize, n_tx: usize) -> Self {
        ChannelSet { n_users, n_sc, n_tx, h: vec![Complex64::new(0.0, 0.0); n_users * n_sc * n_tx] }
    }

    pub fn from_flat(n_users: usize, n_sc: usize, n_tx: usize, h: Vec<Complex64>) -> Result<Self> {
        if h.len() != n_users * n_sc * n_tx {
            return Err(IsacError::dim(format!(
                "channel buffer has {} entries, expected {n_users}*{n_sc}*{n_tx}",
                h.len()
            )));
        }
        if h.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(IsacError::param("channel entries must be finite"));
        }
        Ok(ChannelSet { n_users, n_sc, n_tx, h })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_sc(&self) -> usize {
        self.n_sc
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    #[inline]
    pub fn h(&self, k: usize, i: usize) -> &[Complex64] {
        let start = (k * self.n_sc + i) * self.n_tx;
        &self.h[start..start + self.n_tx]
    }

    pub fn h_mut(&mut self, k: usize, i: usize) -> &mut [Complex64] {
        let start = (k * self.n_sc + i) * self.n_tx;
        &mut self.h[start..start + self.n_tx]
    }

    pub fn as_flat(&self) -> &[Complex64] {
        &self.h
    }
}

/// Rician channel model used when no channel file is supplied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Rician K-factor (linear).
    pub rician_k: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel { rician_k: 10.0 }
    }
}

/// Declarative description from which a [`Scenario`] is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub params: SystemParams,
    pub geometry: Geometry,
    pub gain_model: GainModel,
    pub channel_model: ChannelModel,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Gains and channels drawn from the seeded generator.
    Seeded(u64),
    /// Channels loaded from a file; gain phases still come from the seed.
    Ingested { seed: u64 },
    /// Assembled directly from parts.
    Manual,
}

/// Uniform linear array response with half-wavelength spacing:
/// element `p` is `exp(-j*pi*p*cos(angle))`.
pub fn steering_vector(angle: f64, n: usize) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(IsacError::dim("steering vector needs at least one antenna"));
    }
    let c = angle.cos();
    Ok((0..n).map(|p| Complex64::from_polar(1.0, -PI * p as f64 * c)).collect())
}

/// `|a_bar|^2 = G * lambda^2 * rcs / ((4 pi)^3 d1^2 d2^2)`.
pub fn bistatic_power(model: &GainModel, wavelength: f64, d_bs_target: f64, d_target_node: f64) -> Result<f64> {
    if !(d_bs_target > 0.0 && d_target_node > 0.0) {
        return Err(IsacError::Geometry(format!(
            "bistatic leg distances must be positive (got {d_bs_target}, {d_target_node})"
        )));
    }
    let four_pi = 4.0 * PI;
    Ok(model.gain * wavelength * wavelength * model.rcs
        / (four_pi * four_pi * four_pi * d_bs_target * d_bs_target * d_target_node * d_target_node))
}

/// Free-space path loss `(lambda / (4 pi d))^2` (linear, < 1).
pub fn free_space_path_loss(wavelength: f64, d: f64) -> f64 {
    let r = wavelength / (4.0 * PI * d);
    r * r
}

fn draw_cn(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rician downlink channels:
/// `h = sqrt(PL) * (sqrt(k/(1+k)) a_T(angle) + sqrt(1/(1+k)) g)` with
/// `g ~ CN(0, I)`, so that `E|h|^2 = PL * n_tx`.
pub fn generate_channels(
    params: &SystemParams,
    geometry: &Geometry,
    model: &ChannelModel,
    rng: &mut ChaCha8Rng,
) -> Result<ChannelSet> {
    if !(model.rician_k >= 0.0) {
        return Err(IsacError::param(format!("rician_k must be >= 0, got {}", model.rician_k)));
    }
    let k_users = geometry.n_users();
    let lambda = params.wavelength(geometry.c0);
    let los_w = (model.rician_k / (1.0 + model.rician_k)).sqrt();
    let nlos_w = (1.0 / (1.0 + model.rician_k)).sqrt();
    let mut set = ChannelSet::zeros(k_users, params.n_sc, params.n_tx);
    for k in 0..k_users {
        let d = geometry.d_bs_user(k);
        if d <= 0.0 {
            return Err(IsacError::Geometry(format!("user {k} coincides with the BS")));
        }
        let amp = free_space_path_loss(lambda, d).sqrt();
        let los = steering_vector(bearing(geometry.bs_pos, geometry.user_pos[k]), params.n_tx)?;
        for i in 0..params.n_sc {
            let h = set.h_mut(k, i);
            for (p, hp) in h.iter_mut().enumerate() {
                *hp = amp * (los_w * los[p] + nlos_w * draw_cn(rng));
            }
        }
    }
    Ok(set)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn build_gains(params: &SystemParams, geometry: &Geometry, model: &GainModel, seed: u64) -> Result<SensingLinkGains> {
    let mut rng = stream_rng(seed, GAIN_STREAM);
    let lambda = params.wavelength(geometry.c0);
    let n_nodes = geometry.n_users() + 1;
    let mut a_bar = Vec::with_capacity(geometry.n_targets());
    let mut aoa = Vec::with_capacity(geometry.n_targets());
    for q in 0..geometry.n_targets() {
        let d1 = geometry.d_bs_target(q);
        let mut row = Vec::with_capacity(n_nodes);
        let mut angles = Vec::with_capacity(n_nodes);
        for m in 0..n_nodes {
            let power = bistatic_power(model, lambda, d1, geometry.d_target_node(q, m))?;
            let phase = rng.random_range(0.0..2.0 * PI);
            row.push(Complex64::from_polar(power.sqrt(), phase));
            angles.push(geometry.aoa(q, m));
        }
        a_bar.push(row);
        aoa.push(angles);
    }
    Ok(SensingLinkGains { a_bar, aod: (0..geometry.n_targets()).map(|q| geometry.aod(q)).collect(), aoa })
}

/// Immutable, dimension-consistent world description.
#[derive(Clone, Debug)]
pub struct Scenario {
    params: SystemParams,
    geometry: Geometry,
    gains: SensingLinkGains,
    channels: ChannelSet,
    provenance: Provenance,
    // a_T(phi_q) per target, cached
    tx_steering: Vec<Vec<Complex64>>,
    // |a_bar[q][m]|^2, cached
    gain_power: Vec<Vec<f64>>,
}

impl Scenario {
    /// Builds gains and Rician channels from the seeded generator.
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        config.params.validate()?;
        config.geometry.validate()?;
        let gains = build_gains(&config.params, &config.geometry, &config.gain_model, config.seed)?;
        let mut rng = stream_rng(config.seed, CHANNEL_STREAM);
        let channels = generate_channels(&config.params, &config.geometry, &config.channel_model, &mut rng)?;
        Self::from_parts(
            config.params.clone(),
            config.geometry.clone(),
            gains,
            channels,
            Provenance::Seeded(config.seed),
        )
    }

    /// Builds gains from the seed but uses externally supplied channels.
    pub fn with_channels(config: &ScenarioConfig, channels: ChannelSet) -> Result<Self> {
        config.params.validate()?;
        config.geometry.validate()?;
        let gains = build_gains(&config.params, &config.geometry, &config.gain_model, config.seed)?;
        Self::from_parts(
            config.params.clone(),
            config.geometry.clone(),
            gains,
            channels,
            Provenance::Ingested { seed: config.seed },
        )
    }

    /// Assembles a scenario from explicit parts after checking consistency.
    /// Zero link gains are accepted and mean the link is not modeled.
    pub fn from_parts(
        params: SystemParams,
        geometry: Geometry,
        gains: SensingLinkGains,
        channels: ChannelSet,
        provenance: Provenance,
    ) -> Result<Self> {
        params.validate()?;
        geometry.validate()?;
        let k = geometry.n_users();
        let q = geometry.n_targets();
        if params.noise_power.len() != k + 1 {
            return Err(IsacError::dim(format!(
                "noise_power has {} entries, expected K + 1 = {}",
                params.noise_power.len(),
                k + 1
            )));
        }
        if channels.n_users() != k || channels.n_sc() != params.n_sc || channels.n_tx() != params.n_tx {
            return Err(IsacError::dim(format!(
                "channels are {}x{}x{}, scenario needs K={k}, N_c={}, N_T={}",
                channels.n_users(),
                channels.n_sc(),
                channels.n_tx(),
                params.n_sc,
                params.n_tx
            )));
        }
        if gains.a_bar.len() != q
            || gains.aoa.len() != q
            || gains.aod.len() != q
            || gains.a_bar.iter().any(|r| r.len() != k + 1)
            || gains.aoa.iter().any(|r| r.len() != k + 1)
        {
            return Err(IsacError::dim(format!("link gains must be {q} x {}", k + 1)));
        }
        let tx_steering = gains.aod.iter().map(|&phi| steering_vector(phi, params.n_tx)).collect::<Result<Vec<_>>>()?;
        let gain_power = gains.a_bar.iter().map(|row| row.iter().map(|a| a.norm_sqr()).collect()).collect();
        Ok(Scenario { params, geometry, gains, channels, provenance, tx_steering, gain_power })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn gains(&self) -> &SensingLinkGains {
        &self.gains
    }

    pub fn channels(&self) -> &ChannelSet {
        &self.channels
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn n_users(&self) -> usize {
        self.geometry.n_users()
    }

    pub fn n_targets(&self) -> usize {
        self.geometry.n_targets()
    }

    /// Number of sensing receive nodes, `K + 1`.
    pub fn n_nodes(&self) -> usize {
        self.geometry.n_users() + 1
    }

    /// Node index of the base station.
    pub fn bs_node(&self) -> usize {
        self.geometry.n_users()
    }

    pub fn noise_power(&self, m: usize) -> f64 {
        self.params.noise_power[m]
    }

    pub fn tx_steering(&self, q: usize) -> &[Complex64] {
        &self.tx_steering[q]
    }

    pub fn bistatic_gain(&self, q: usize, m: usize) -> Complex64 {
        self.gains.a_bar[q][m]
    }

    pub fn gain_power(&self, q: usize, m: usize) -> f64 {
        self.gain_power[q][m]
    }

    /// Normalized delay and Doppler `(tau * delta_f, f_D * t_sym)` of the
    /// BS -> target `q` -> node `m` path. Metadata only; neither enters the FIM.
    pub fn link_delay_doppler(&self, q: usize, m: usize) -> Result<(f64, f64)> {
        if q >= self.n_targets() || m >= self.n_nodes() {
            return Err(IsacError::dim(format!("link ({q}, {m}) out of range")));
        }
        let g = &self.geometry;
        let tau = (g.d_bs_target(q) + g.d_target_node(q, m)) / g.c0;
        let fd = -(g.target_vel[q] * self.params.f_c / g.c0) * (self.gains.aod[q].cos() + self.gains.aoa[q][m].cos());
        Ok((tau * self.params.delta_f, fd * self.params.t_sym))
    }

    /// Copy of this scenario with the user-node link gains of every target
    /// forced to zero, leaving only the monostatic BS link.
    pub fn without_user_links(&self) -> Self {
        let mut gains = self.gains.clone();
        let bs = self.bs_node();
        for row in &mut gains.a_bar {
            for (m, a) in row.iter_mut().enumerate() {
                if m != bs {
                    *a = Complex64::new(0.0, 0.0);
                }
            }
        }
        Scenario::from_parts(
            self.params.clone(),
            self.geometry.clone(),
            gains,
            self.channels.clone(),
            Provenance::Manual,
        )
        .expect("zeroing gains preserves consistency")
    }
}
