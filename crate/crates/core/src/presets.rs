//! Ready-made scenarios.

use crate::scenario::{ChannelModel, GainModel, Geometry, ScenarioConfig, SystemParams, SPEED_OF_LIGHT};

/// Small scenario that optimizes in well under a second: `N_T = 8`,
/// `N_c = 32`, `N_sym = 16`, `K = 3`, `Q = 3`, `P = 1 W`, noise `1e-12 W`,
/// 28 GHz carrier with 120 kHz spacing. Targets sit at increasing range so
/// that their CRLBs differ by orders of magnitude.
pub fn desk(seed: u64) -> ScenarioConfig {
    let delta_f = 120e3;
    let params = SystemParams::new(8, 32, 16, 28e9, delta_f, 1.07 / delta_f, 1.0, vec![1e-12; 4])
        .expect("desk parameters are valid");
    let geometry = Geometry {
        bs_pos: [0.0, 0.0],
        user_pos: vec![[55.0, 35.0], [-45.0, 95.0], [110.0, -70.0]],
        target_pos: vec![[40.0, 15.0], [-60.0, 80.0], [90.0, -110.0]],
        target_vel: vec![8.0, -12.0, 5.0],
        c0: SPEED_OF_LIGHT,
    };
    ScenarioConfig { params, geometry, gain_model: GainModel::default(), channel_model: ChannelModel::default(), seed }
}
