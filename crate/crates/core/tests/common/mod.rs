#![allow(dead_code)]

use isac_core::optimizer::init_beams;
use isac_core::scenario::SPEED_OF_LIGHT;
use isac_core::{
    BeamDims, BeamformingState, ChannelModel, GainModel, Geometry, InitStrategy, Scenario, ScenarioConfig, SystemParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Dims {
    pub n_tx: usize,
    pub n_sc: usize,
    pub n_sym: usize,
    pub n_users: usize,
    pub n_targets: usize,
}

fn point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.random_range(-150.0..150.0), rng.random_range(-150.0..150.0)]
}

/// Scenario with random placement, noise levels and seed.
pub fn random_scenario(d: &Dims, rng: &mut ChaCha8Rng) -> Scenario {
    let delta_f = 120e3;
    let noise = (0..=d.n_users).map(|_| rng.random_range(1e-12..1e-11)).collect();
    let params = SystemParams::new(d.n_tx, d.n_sc, d.n_sym, 28e9, delta_f, 1.07 / delta_f, 1.0, noise).unwrap();
    let geometry = Geometry {
        bs_pos: [0.0, 0.0],
        user_pos: (0..d.n_users).map(|_| point(rng)).collect(),
        target_pos: (0..d.n_targets).map(|_| point(rng)).collect(),
        target_vel: (0..d.n_targets).map(|_| rng.random_range(-20.0..20.0)).collect(),
        c0: SPEED_OF_LIGHT,
    };
    let cfg = ScenarioConfig {
        params,
        geometry,
        gain_model: GainModel { gain: rng.random_range(1.0..100.0), rcs: 1.0 },
        channel_model: ChannelModel::default(),
        seed: rng.random(),
    };
    Scenario::build(&cfg).unwrap()
}

pub fn random_dims(rng: &mut ChaCha8Rng) -> Dims {
    Dims {
        n_tx: rng.random_range(1..=4),
        n_sc: rng.random_range(1..=8),
        n_sym: rng.random_range(1..=4),
        n_users: rng.random_range(1..=3),
        n_targets: rng.random_range(1..=3),
    }
}

/// Random on-sphere state.
pub fn random_state(scenario: &Scenario, seed: u64) -> BeamformingState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = init_beams(scenario, InitStrategy::RandomGaussian { seed }, &mut rng).unwrap();
    BeamformingState::from_stacked(BeamDims::of(scenario), p.into_vec()).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
